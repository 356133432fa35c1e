"""Scenario definitions, built-in campaigns, serialization and batch runs.

A scenario bundles everything one run needs: ring parameters, control mode,
damping gains, voltage reference, integrator settings, averaged/switched mode
and the initial state.  The built-ins reproduce the standard campaigns on a
five-converter ring (balanced, unbalanced sources, unbalanced loads, and a
sinusoidal reference); all default to the passivity-based controller and can
be flipped to open loop.

Scenario files are JSON with the same nested key-value schema produced by
``Scenario.to_dict`` (see README for the field list).  Built-ins round-trip
through serialization losslessly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .control import (ConstantReference, DampingConfig, PbcController,
                      SinusoidReference)
from .equilibrium import duty_from_voltage
from .integrators import IntegratorConfig
from .model import ConverterParams, LineParams, RingParams
from .report import RunReport, extract_report
from .sim import (PwmConfig, SimulationError, Trajectory, _reference_values_at,
                  cross_validate, simulate_averaged, simulate_switched,
                  trajectory_to_csv)

__all__ = [
    "Scenario",
    "X0Spec",
    "BUILTIN_SCENARIOS",
    "load_scenario",
    "run",
    "cross_validate_scenario",
]

DEFAULT_DAMPING = 15.0


@dataclass(frozen=True)
class X0Spec:
    """Initial plant state: cold start, explicit vector, or seeded random."""

    kind: str = "zero"
    values: tuple[float, ...] | None = None
    scale: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "state", "random"):
            raise ValueError(f"x0.kind must be zero|state|random, got {self.kind!r}")
        if self.kind == "state":
            if self.values is None:
                raise ValueError("x0.values is required for kind 'state'")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "random" and not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"x0.scale must be positive, got {self.scale!r}")

    def build(self, m: int, seed_override: int | None = None) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(3 * m)
        if self.kind == "state":
            x0 = np.array(self.values, dtype=float)
            if x0.shape != (3 * m,):
                raise ValueError(f"x0.values must have length {3 * m}, got {x0.size}")
            return x0
        seed = self.seed if seed_override is None else seed_override
        rng = np.random.default_rng(seed)
        return rng.uniform(-self.scale, self.scale, size=3 * m)


@dataclass(frozen=True)
class Scenario:
    """A fully specified simulation campaign."""

    name: str
    ring: RingParams
    control: str                                   # "pbc" | "open-loop"
    damping: DampingConfig
    reference: ConstantReference | SinusoidReference
    integrator: IntegratorConfig
    sim_mode: str = "averaged"                     # "averaged" | "switched"
    pwm: PwmConfig | None = None
    x0: X0Spec = X0Spec()
    description: str = ""

    def __post_init__(self):
        if self.control not in ("pbc", "open-loop"):
            raise ValueError(f"control must be pbc|open-loop, got {self.control!r}")
        if self.sim_mode not in ("averaged", "switched"):
            raise ValueError(f"sim_mode must be averaged|switched, got {self.sim_mode!r}")
        if self.sim_mode == "switched" and self.pwm is None:
            raise ValueError("switched mode needs a pwm section")
        if len(self.damping.r_alpha) != self.ring.m:
            raise ValueError(
                f"control.r_alpha has {len(self.damping.r_alpha)} entries "
                f"for {self.ring.m} converters"
            )
        if isinstance(self.reference, ConstantReference) and len(self.reference.vcd) != self.ring.m:
            raise ValueError(
                f"reference.vcd has {len(self.reference.vcd)} entries "
                f"for {self.ring.m} converters"
            )
        self.reference.validate_against(self.ring)

    @property
    def m(self) -> int:
        return self.ring.m

    def without_control(self, rename: bool = True) -> "Scenario":
        """Open-loop twin of this scenario (constant or feedforward duty)."""
        name = f"{self.name}-open-loop" if rename and self.control == "pbc" else self.name
        return replace(self, control="open-loop", name=name)

    def to_dict(self) -> dict:
        ref: dict
        if isinstance(self.reference, SinusoidReference):
            ref = {"kind": "sinusoid", "v_dc": self.reference.v_dc,
                   "amplitude": self.reference.amplitude,
                   "frequency": self.reference.frequency}
        else:
            ref = {"kind": "constant", "vcd": list(self.reference.vcd)}
        integ = {"method": self.integrator.method, "t_end": self.integrator.t_end,
                 "output_dt": self.integrator.output_dt}
        if self.integrator.method == "rk4":
            integ["dt"] = self.integrator.dt
        else:
            integ.update({"rtol": self.integrator.rtol, "atol": self.integrator.atol,
                          "dt_min": self.integrator.dt_min, "dt_max": self.integrator.dt_max})
        mode: dict = {"kind": self.sim_mode}
        if self.pwm is not None:
            mode["f_sw"] = self.pwm.f_sw
            mode["phases"] = None if self.pwm.phases is None else list(self.pwm.phases)
        x0: dict = {"kind": self.x0.kind}
        if self.x0.kind == "state":
            x0["values"] = list(self.x0.values)
        elif self.x0.kind == "random":
            x0.update({"scale": self.x0.scale, "seed": self.x0.seed})
        return {
            "name": self.name,
            "description": self.description,
            "ring": {
                "converters": [{"L": c.L, "C": c.C, "E": c.E, "R2T": c.R2T}
                               for c in self.ring.converters],
                "lines": [{"LT": ln.LT, "R1T": ln.R1T} for ln in self.ring.lines],
            },
            "control": {"mode": self.control, "r_alpha": list(self.damping.r_alpha)},
            "reference": ref,
            "integrator": integ,
            "mode": mode,
            "x0": x0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        def need(section: dict, key: str, path: str):
            if key not in section:
                raise ValueError(f"scenario field missing: {path}.{key}")
            return section[key]

        name = need(d, "name", "")
        ring_d = need(d, "ring", "")
        convs = [ConverterParams(**c) for c in need(ring_d, "converters", "ring")]
        lines = [LineParams(**ln) for ln in need(ring_d, "lines", "ring")]
        ring = RingParams(converters=tuple(convs), lines=tuple(lines))

        ctrl_d = d.get("control", {})
        control = ctrl_d.get("mode", "pbc")
        r_alpha = ctrl_d.get("r_alpha", [DEFAULT_DAMPING] * ring.m)
        if np.isscalar(r_alpha):
            r_alpha = [float(r_alpha)] * ring.m
        damping = DampingConfig(r_alpha=tuple(r_alpha))

        ref_d = need(d, "reference", "")
        kind = need(ref_d, "kind", "reference")
        if kind == "constant":
            vcd = need(ref_d, "vcd", "reference")
            if np.isscalar(vcd):
                vcd = [float(vcd)] * ring.m
            reference = ConstantReference(vcd=tuple(vcd))
        elif kind == "sinusoid":
            reference = SinusoidReference(v_dc=need(ref_d, "v_dc", "reference"),
                                          amplitude=need(ref_d, "amplitude", "reference"),
                                          frequency=need(ref_d, "frequency", "reference"))
        else:
            raise ValueError(f"reference.kind must be constant|sinusoid, got {kind!r}")

        integ_d = dict(d.get("integrator", {}))
        integrator = IntegratorConfig(**integ_d)

        mode_d = d.get("mode", {"kind": "averaged"})
        sim_mode = mode_d.get("kind", "averaged")
        pwm = None
        if sim_mode == "switched":
            phases = mode_d.get("phases")
            pwm = PwmConfig(f_sw=need(mode_d, "f_sw", "mode"),
                            phases=None if phases is None else tuple(phases))

        x0_d = dict(d.get("x0", {"kind": "zero"}))
        x0 = X0Spec(**x0_d)

        return cls(name=name, ring=ring, control=control, damping=damping,
                   reference=reference, integrator=integrator, sim_mode=sim_mode,
                   pwm=pwm, x0=x0, description=d.get("description", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def _table1_ring(m: int = 5, E=None, R2T=None) -> RingParams:
    E = [15.0] * m if E is None else list(E)
    R2T = [170.0] * m if R2T is None else list(R2T)
    return RingParams(
        converters=tuple(ConverterParams(L=0.046, C=100e-6, E=E[n], R2T=R2T[n])
                         for n in range(m)),
        lines=tuple(LineParams(LT=0.015, R1T=100.0) for _ in range(m)),
    )


def _builtin(name: str, description: str, ring: RingParams, reference) -> Scenario:
    return Scenario(
        name=name,
        description=description,
        ring=ring,
        control="pbc",
        damping=DampingConfig.uniform(ring.m, DEFAULT_DAMPING),
        reference=reference,
        integrator=IntegratorConfig(),
        sim_mode="averaged",
        x0=X0Spec(kind="zero"),
    )


def _make_builtins() -> dict:
    m = 5
    return {
        "balanced": _builtin(
            "balanced",
            "five identical converters, 40 V target on every output",
            _table1_ring(m),
            ConstantReference.uniform(m, 40.0),
        ),
        "unbalanced-inputs": _builtin(
            "unbalanced-inputs",
            "source voltages 15/13/12/13/15 V, common 40 V target",
            _table1_ring(m, E=[15.0, 13.0, 12.0, 13.0, 15.0]),
            ConstantReference.uniform(m, 40.0),
        ),
        "unbalanced-loads": _builtin(
            "unbalanced-loads",
            "load resistances 130/170/140/170/130 ohm, common 40 V target",
            _table1_ring(m, R2T=[130.0, 170.0, 140.0, 170.0, 130.0]),
            ConstantReference.uniform(m, 40.0),
        ),
        "unbalanced-loads-fig8": _builtin(
            "unbalanced-loads-fig8",
            "load-imbalance variant with a 30 ohm load on converter 0",
            _table1_ring(m, R2T=[30.0, 170.0, 140.0, 170.0, 130.0]),
            ConstantReference.uniform(m, 40.0),
        ),
        "sinusoid": _builtin(
            "sinusoid",
            "sinusoidal target 40 + 8 sin(2 pi 60 t) V on every output",
            _table1_ring(m),
            SinusoidReference(v_dc=40.0, amplitude=8.0, frequency=60.0),
        ),
    }


BUILTIN_SCENARIOS = _make_builtins()


def load_scenario(name_or_path: str) -> Scenario:
    """Resolve a built-in scenario name or load a scenario JSON file."""
    if name_or_path in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[name_or_path]
    if os.path.exists(name_or_path):
        with open(name_or_path, "r", encoding="utf-8") as fh:
            return Scenario.from_json(fh.read())
    known = ", ".join(sorted(BUILTIN_SCENARIOS))
    raise ValueError(f"unknown scenario {name_or_path!r}; built-ins are: {known}")


def _sim_inputs(scenario: Scenario):
    """Controller or constant duty implementing the scenario's control mode.

    Open loop with a constant reference is a constant duty from the boost-gain
    inversion; open loop with a moving reference is instant feedforward, which
    is the zero-damping controller.
    """
    params = scenario.ring
    if scenario.control == "pbc":
        return PbcController(params, scenario.damping, scenario.reference), None
    if scenario.reference.is_time_varying:
        # duty is the gain inversion of the commanded waveform itself, so the
        # desired voltage must be pinned to the waveform, not ODE-filtered
        zero = DampingConfig(r_alpha=(0.0,) * params.m)
        return PbcController(params, zero, scenario.reference, vcd_mode="waveform"), None
    duty = np.array([duty_from_voltage(params.E[n], scenario.reference.vcd[n])
                     for n in range(params.m)])
    return None, duty


def simulate_scenario(scenario: Scenario, seed_override: int | None = None) -> Trajectory:
    """Run a scenario and return its trajectory."""
    controller, duty = _sim_inputs(scenario)
    x0 = scenario.x0.build(scenario.m, seed_override)
    if scenario.sim_mode == "switched":
        return simulate_switched(scenario.ring, x0, scenario.integrator, scenario.pwm,
                                 controller=controller, duty=duty)
    return simulate_averaged(scenario.ring, x0, scenario.integrator,
                             controller=controller, duty=duty)


def report_for(scenario: Scenario, traj: Trajectory) -> RunReport:
    """Extract the run report against the scenario's voltage targets."""
    vc_target = _reference_values_at(scenario.reference, traj.times, scenario.m)
    return extract_report(scenario.name, traj, vc_target)


def run(scenario: Scenario, out_dir: str, seed_override: int | None = None):
    """Execute a scenario and write trajectory, report and event artifacts.

    Creates ``out_dir/<scenario.name>/`` with ``trajectory.csv``,
    ``report.txt``, ``report.json`` and ``events.txt``.  On integration
    failure the partial trajectory is flushed with a failure marker and the
    error is re-raised.
    """
    subdir = os.path.join(out_dir, scenario.name)
    os.makedirs(subdir, exist_ok=True)
    try:
        traj = simulate_scenario(scenario, seed_override)
    except SimulationError as exc:
        if exc.trajectory is not None:
            path = os.path.join(subdir, "trajectory.csv")
            trajectory_to_csv(exc.trajectory, path)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(f"# FAILED at t={exc.t:.9g}: {exc.reason}\n")
            with open(os.path.join(subdir, "events.txt"), "w", encoding="utf-8") as fh:
                fh.write("\n".join(exc.trajectory.events) + "\n")
        raise
    rep = report_for(scenario, traj)
    trajectory_to_csv(traj, os.path.join(subdir, "trajectory.csv"))
    with open(os.path.join(subdir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(rep.to_text())
    with open(os.path.join(subdir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(rep.to_json() + "\n")
    with open(os.path.join(subdir, "events.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(traj.events) + ("\n" if traj.events else ""))
    return rep, subdir


def cross_validate_scenario(scenario: Scenario, dt_list, **kwargs):
    """Integrator cross-check for a scenario (averaged mode only)."""
    if scenario.sim_mode != "averaged":
        raise ValueError("cross-validation runs the averaged model")
    controller, duty = _sim_inputs(scenario)
    x0 = scenario.x0.build(scenario.m)
    return cross_validate(scenario.ring, x0, scenario.integrator, dt_list,
                          controller=controller, duty=duty, **kwargs)
