"""Command-line interface: run scenarios, compare runs, export phase lines."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import scenarios as sc
from .equilibrium import operating_point
from .model import ConverterParams, LineParams, RingParams
from .report import RunReport, compare
from .sim import PwmConfig, SimulationError
from .zero_dynamics import ZeroDynConfig, phase_line, phase_line_to_csv


def _cmd_list(args) -> int:
    for name in sorted(sc.BUILTIN_SCENARIOS):
        s = sc.BUILTIN_SCENARIOS[name]
        print(f"{name:<24} {s.description}")
    return 0


def _cmd_run(args) -> int:
    try:
        scenario = sc.load_scenario(args.scenario)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.no_control:
        scenario = scenario.without_control()
    if args.t_end is not None:
        scenario = replace(scenario, integrator=replace(scenario.integrator, t_end=args.t_end))
    if args.mode is not None and args.mode != scenario.sim_mode:
        if args.mode == "switched":
            f_sw = args.f_sw if args.f_sw is not None else 20000.0
            dt = 1.0 / (50.0 * f_sw)
            integ = replace(scenario.integrator, method="rk4", dt=dt)
            scenario = replace(scenario, sim_mode="switched",
                               pwm=PwmConfig(f_sw=f_sw), integrator=integ)
        else:
            scenario = replace(scenario, sim_mode="averaged", pwm=None)
    try:
        rep, subdir = sc.run(scenario, args.out, seed_override=args.seed)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(rep.to_text())
    print(f"artifacts written to {subdir}")
    return 0


def _load_report(path: str) -> RunReport:
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    with open(path, "r", encoding="utf-8") as fh:
        return RunReport.from_json(fh.read())


def _cmd_compare(args) -> int:
    try:
        rep_a = _load_report(args.a)
        rep_b = _load_report(args.b)
        result = compare(rep_a, rep_b)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(result.to_text())
    return 0


def _cmd_phase_line(args) -> int:
    # a two-converter ring of identical units pins the line currents at zero
    conv = ConverterParams(L=args.L, C=args.C, E=args.E, R2T=args.R2T)
    ring = RingParams(converters=(conv, conv),
                      lines=(LineParams(LT=0.015, R1T=100.0),) * 2)
    try:
        eq = operating_point(ring, args.vcd)
        cfg = ZeroDynConfig.from_equilibrium(ring, eq, 0)
        pl = phase_line(cfg, args.which, args.grid_size)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    phase_line_to_csv(pl, args.out)
    for eq_pt in pl.equilibria:
        print(f"equilibrium mu={eq_pt.mu:.10g} stability={eq_pt.stability}")
    print(f"phase line written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringboost",
        description="Simulate ring-coupled boost converters with passivity-based control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write its artifacts")
    p_run.add_argument("scenario", help="built-in scenario name or path to a scenario JSON")
    p_run.add_argument("--out", default="out", help="output directory (default: out)")
    p_run.add_argument("--mode", choices=["averaged", "switched"], default=None,
                       help="override the scenario's simulation mode")
    p_run.add_argument("--no-control", action="store_true",
                       help="run the open-loop variant of the scenario")
    p_run.add_argument("--t-end", type=float, default=None, help="override the horizon, s")
    p_run.add_argument("--f-sw", type=float, default=None,
                       help="switching frequency for --mode switched, Hz")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the seed of a random initial state")
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list-scenarios", help="list built-in scenarios")
    p_list.set_defaults(func=_cmd_list)

    p_cmp = sub.add_parser("compare", help="compare two run reports")
    p_cmp.add_argument("a", help="report.json or run directory of the baseline")
    p_cmp.add_argument("b", help="report.json or run directory of the candidate")
    p_cmp.set_defaults(func=_cmd_compare)

    p_pl = sub.add_parser("phase-line", help="export pinned-output duty-ratio flow data")
    p_pl.add_argument("which", choices=["voltage", "current"])
    p_pl.add_argument("--out", default="phase_line.csv", help="output CSV path")
    p_pl.add_argument("--grid-size", type=int, default=400)
    p_pl.add_argument("--E", type=float, default=15.0, help="source voltage, V")
    p_pl.add_argument("--L", type=float, default=0.046, help="inductance, H")
    p_pl.add_argument("--C", type=float, default=100e-6, help="capacitance, F")
    p_pl.add_argument("--R2T", type=float, default=170.0, help="load resistance, ohm")
    p_pl.add_argument("--vcd", type=float, default=40.0, help="pinned output voltage, V")
    p_pl.set_defaults(func=_cmd_phase_line)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
