"""Time integration of the ring, open loop or under passivity-based control.

``simulate_averaged`` integrates the duty-ratio (averaged) model, either at a
constant duty vector or coupled to the controller's desired-state dynamics.
``simulate_switched`` integrates the binary-switch model with a sawtooth PWM
comparator, fixed-step only.  Both record at a fixed output cadence into a
:class:`Trajectory`, which carries states, commanded duties, the error energy
per sample and an event log (duty saturation, step rejections).

Trajectory CSV layout: ``t``, then per converter n ``iL_n, vC_n, iT_n, mu_n,
Hd_n``, then ``Hd_total``.  Values are written in full precision so a
round-trip through disk is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from ._kernels import HAVE_NUMBA
from .control import PbcController
from .equilibrium import steady_state
from .integrators import (IntegratorConfig, IntegrationResult, SimulationError,
                          _output_grid, integrate)
from .model import RingParams, _rhs

__all__ = [
    "PwmConfig",
    "Trajectory",
    "CrossValidation",
    "SimulationError",
    "IntegratorConfig",
    "simulate_averaged",
    "simulate_switched",
    "cross_validate",
    "trajectory_to_csv",
    "trajectory_from_csv",
    "max_state_deviation",
    "pwm_period_average",
]


@dataclass(frozen=True)
class PwmConfig:
    """Sawtooth-carrier PWM: switching frequency and per-converter phase."""

    f_sw: float
    phases: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (math.isfinite(self.f_sw) and self.f_sw > 0.0):
            raise ValueError(f"f_sw must be positive, got {self.f_sw!r}")
        if self.phases is not None:
            phases = tuple(float(p) for p in self.phases)
            if not all(math.isfinite(p) for p in phases):
                raise ValueError(f"carrier phases must be finite, got {self.phases!r}")
            object.__setattr__(self, "phases", phases)

    def phase_array(self, m: int) -> np.ndarray:
        if self.phases is None:
            return np.zeros(m)
        if len(self.phases) != m:
            raise ValueError(f"need {m} carrier phases, got {len(self.phases)}")
        return np.array(self.phases)


@dataclass
class Trajectory:
    """Recorded run: sample times, states, commanded duties, error energy.

    ``e`` is the per-sample deviation from the desired state (interleaved
    layout); it backs the passivity audit and is not part of the CSV format.
    """

    times: np.ndarray        # (n,)
    states: np.ndarray       # (n, 3m)
    duties: np.ndarray       # (n, m), clamped commanded duty
    hd: np.ndarray           # (n, m), error energy per converter
    hd_total: np.ndarray     # (n,)
    events: list = field(default_factory=list)
    e: np.ndarray | None = None  # (n, 3m)

    @property
    def m(self) -> int:
        return self.states.shape[1] // 3

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def iL(self) -> np.ndarray:
        return self.states[:, 0::3]

    def vC(self) -> np.ndarray:
        return self.states[:, 1::3]

    def iT(self) -> np.ndarray:
        return self.states[:, 2::3]


def _il_bar_matrix(params: RingParams, vbar: np.ndarray) -> np.ndarray:
    """Instantaneous inductor-current targets for a matrix of voltage targets."""
    itbar = (vbar - np.roll(vbar, -1, axis=1)) / params.R1T
    return (vbar / params.R2T + itbar - np.roll(itbar, 1, axis=1)) * (vbar / params.E)


def _reference_values_at(reference, times: np.ndarray, m: int) -> np.ndarray:
    if reference.is_time_varying:
        w = 2.0 * math.pi * reference.frequency
        v = reference.v_dc + reference.amplitude * np.sin(w * times)
        return np.broadcast_to(v[:, None], (times.size, m)).copy()
    return np.tile(np.asarray(reference.vcd), (times.size, 1))


def _check_x0(params: RingParams, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (3 * params.m,):
        raise ValueError(f"x0 must have shape ({3 * params.m},), got {x0.shape}")
    return x0


def _make_plant_rhs(params: RingParams, one_minus_u: np.ndarray):
    L, C, E, R2T = params.L, params.C, params.E, params.R2T
    LT, R1T = params.LT, params.R1T

    def rhs(t, x):
        return _rhs(L, C, E, R2T, LT, R1T, x, one_minus_u)

    return rhs


def _make_controlled_rhs(params: RingParams, controller: PbcController, pwm=None):
    """Coupled plant + desired-state dynamics; PWM comparator when ``pwm`` given."""
    L, C, E, R2T = params.L, params.C, params.E, params.R2T
    LT, R1T = params.LT, params.R1T
    ra = controller.damping.as_array
    m = params.m
    three_m = 3 * m
    reference = controller.reference
    waveform_vcd = controller._quasi_static and controller.vcd_mode == "waveform"
    quasi = controller._quasi_static
    il_bar0 = None if quasi else controller._il_bar0
    if pwm is not None:
        f_sw = pwm.f_sw
        phases = pwm.phase_array(m)

    def rhs(t, y):
        x = y[:three_m]
        vcd_slots = y[three_m:three_m + m]
        itd = y[three_m + m:]
        iL = x[0::3]
        vC = x[1::3]
        iT = x[2::3]
        if quasi:
            vref = reference.values(t, m)
            vcd = vref if waveform_vcd else vcd_slots
            itbar = (vref - np.roll(vref, -1)) / R1T
            il_bar = (vref / R2T + itbar - np.roll(itbar, 1)) * (vref / E)
        else:
            vcd = vcd_slots
            il_bar = il_bar0
        mu = np.clip(1.0 - (E + ra * (iL - il_bar)) / vcd, 0.0, 1.0)
        if pwm is None:
            omu = 1.0 - mu
        else:
            carrier = (t * f_sw + phases) % 1.0
            omu = 1.0 - (carrier < mu).astype(float)
        out = np.empty_like(y)
        out[0:three_m:3] = (E - omu * vC) / L
        out[1:three_m:3] = (omu * iL - iT + np.roll(iT, 1) - vC / R2T) / C
        out[2:three_m:3] = (vC - np.roll(vC, -1) - R1T * iT) / LT
        if quasi and controller.vcd_mode == "waveform":
            out[three_m:three_m + m] = reference.rates(t, m)
        else:
            out[three_m:three_m + m] = ((1.0 - mu) * il_bar - itd + np.roll(itd, 1)
                                        - vcd / R2T) / C
        out[three_m + m:] = (vcd - np.roll(vcd, -1) - R1T * itd) / LT
        return out

    return rhs


def _make_switched_const_rhs(params: RingParams, duty: np.ndarray, pwm: PwmConfig):
    L, C, E, R2T = params.L, params.C, params.E, params.R2T
    LT, R1T = params.LT, params.R1T
    f_sw = pwm.f_sw
    phases = pwm.phase_array(params.m)

    def rhs(t, x):
        carrier = (t * f_sw + phases) % 1.0
        omu = 1.0 - (carrier < duty).astype(float)
        return _rhs(L, C, E, R2T, LT, R1T, x, omu)

    return rhs


@dataclass
class _RhsSpec:
    """Flat argument pack for the compiled kernels; mirrors the closures."""

    args: tuple
    dim: int


def _build_spec(params: RingParams, controller: PbcController | None = None,
                duty=None, pwm: PwmConfig | None = None) -> _RhsSpec:
    m = params.m
    zeros = np.zeros(m)
    vdc = amp = omega = 0.0
    if controller is None:
        ctrl_on, mode = 0, 0
        ra = zeros
        il_bar0 = zeros
        duty_const = np.ascontiguousarray(duty, dtype=float)
        dim = 3 * m
    else:
        ctrl_on = 1
        ra = controller.damping.as_array
        duty_const = zeros
        ref = controller.reference
        if ref.is_time_varying:
            mode = 2 if controller.vcd_mode == "waveform" else 1
            vdc, amp = ref.v_dc, ref.amplitude
            omega = 2.0 * math.pi * ref.frequency
            il_bar0 = zeros
        else:
            mode = 0
            il_bar0 = controller._il_bar0
        dim = 5 * m
    if pwm is None:
        pwm_on, f_sw, phases = 0, 0.0, zeros
    else:
        pwm_on, f_sw, phases = 1, pwm.f_sw, pwm.phase_array(m)
    args = (params.L, params.C, params.E, params.R2T, params.LT, params.R1T,
            ctrl_on, ra, mode, vdc, amp, omega, il_bar0, duty_const,
            pwm_on, f_sw, phases)
    return _RhsSpec(args=args, dim=dim)


def _kernel_callable(spec: _RhsSpec):
    args = spec.args

    def rhs(t, y):
        out = np.empty_like(y)
        _kernels.rhs_eval(t, y, out, *args)
        return out

    return rhs


def _integrate_rk4_kernel(spec: _RhsSpec, y0: np.ndarray,
                          cfg: IntegratorConfig) -> IntegrationResult:
    if not np.all(np.isfinite(y0)):
        raise SimulationError(0.0, "initial state is not finite")
    grid = _output_grid(cfg.t_end, cfg.output_dt)
    rec = np.empty((grid.size + 1, y0.size))
    y = y0.copy()
    fail_t, idx, steps = _kernels.rk4_drive(grid, cfg.dt, y, rec, *spec.args)
    times = np.concatenate(([0.0], grid))
    if fail_t >= 0.0:
        raise SimulationError(fail_t, "state became non-finite (NaN/inf)",
                              times=times[:idx], states=rec[:idx])
    return IntegrationResult(times=times, states=rec, n_steps=steps, n_rejected=0)


def _constant_duty_trajectory(params, duty, result: IntegrationResult) -> Trajectory:
    x = result.states
    n = x.shape[0]
    events = list(result.events)
    if np.all(duty < 1.0):
        eq = steady_state(params, duty)
        targets = (eq.iL_bar, eq.vC_bar, eq.iT_bar)
    else:
        # a permanently closed switch has no equilibrium; measure the error
        # energy against the origin so rows stay finite
        targets = (0.0, 0.0, 0.0)
        events.append("t=0 no equilibrium at duty 1; error energy measured from origin")
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.empty_like(x)
        e[:, 0::3] = x[:, 0::3] - targets[0]
        e[:, 1::3] = x[:, 1::3] - targets[1]
        e[:, 2::3] = x[:, 2::3] - targets[2]
        hd = 0.5 * (params.L * e[:, 0::3] ** 2 + params.C * e[:, 1::3] ** 2
                    + params.LT * e[:, 2::3] ** 2)
    return Trajectory(times=result.times, states=x,
                      duties=np.tile(duty, (n, 1)),
                      hd=hd, hd_total=hd.sum(axis=1), events=events, e=e)


def _controlled_trajectory(params, controller: PbcController,
                           result: IntegrationResult) -> Trajectory:
    m = params.m
    y = result.states
    ts = result.times
    x = y[:, :3 * m]
    vcd_slots = y[:, 3 * m:3 * m + m]
    itd = y[:, 3 * m + m:]
    if controller._quasi_static and controller.vcd_mode == "waveform":
        vcd = _reference_values_at(controller.reference, ts, m)
    else:
        vcd = vcd_slots
    if controller._quasi_static:
        vref = _reference_values_at(controller.reference, ts, m)
        il_bar = _il_bar_matrix(params, vref)
    else:
        il_bar = np.tile(controller._il_bar0, (ts.size, 1))

    with np.errstate(over="ignore", invalid="ignore"):
        mu_raw = 1.0 - (params.E + controller.damping.as_array * (x[:, 0::3] - il_bar)) / vcd
        mu = np.clip(mu_raw, 0.0, 1.0)
        e = np.empty_like(x)
        e[:, 0::3] = x[:, 0::3] - il_bar
        e[:, 1::3] = x[:, 1::3] - vcd
        e[:, 2::3] = x[:, 2::3] - itd
        hd = 0.5 * (params.L * e[:, 0::3] ** 2 + params.C * e[:, 1::3] ** 2
                    + params.LT * e[:, 2::3] ** 2)

    events = list(result.events)
    saturated = (mu_raw < 0.0) | (mu_raw > 1.0)
    any_sat = saturated.any(axis=1)
    entering = np.flatnonzero(any_sat & ~np.concatenate(([False], any_sat[:-1])))
    for i in entering[:50]:
        idx = np.flatnonzero(saturated[i]).tolist()
        events.append(f"t={ts[i]:.9g} duty_saturation converters={idx}")

    return Trajectory(times=ts, states=x, duties=mu, hd=hd,
                      hd_total=hd.sum(axis=1), events=events, e=e)


def _run(params, spec, fallback_rhs, y0, integrator, finalize) -> Trajectory:
    try:
        if HAVE_NUMBA:
            if integrator.method == "rk4":
                result = _integrate_rk4_kernel(spec, y0, integrator)
            else:
                result = integrate(_kernel_callable(spec), y0, integrator)
        else:
            result = integrate(fallback_rhs(), y0, integrator)
    except SimulationError as exc:
        if exc.partial_times is not None and len(exc.partial_times) > 0:
            partial = IntegrationResult(times=np.asarray(exc.partial_times),
                                        states=np.asarray(exc.partial_states),
                                        n_steps=0, n_rejected=0,
                                        events=[f"t={exc.t:.9g} aborted: {exc.reason}"])
            exc.trajectory = finalize(partial)
        raise
    return finalize(result)


def simulate_averaged(params: RingParams, x0, integrator: IntegratorConfig,
                      controller: PbcController | None = None,
                      duty=None) -> Trajectory:
    """Integrate the averaged model from t = 0 to integrator.t_end.

    Supply either a controller (closed loop, desired-state dynamics included
    in the integrated system) or a constant duty vector (open loop).  The
    open-loop error energy is measured against the closed-form equilibrium of
    the supplied duty.
    """
    x0 = _check_x0(params, x0)
    if (controller is None) == (duty is None):
        raise ValueError("supply exactly one of controller or constant duty")
    if controller is None:
        u = np.asarray(duty, dtype=float)
        if u.shape != (params.m,):
            raise ValueError(f"duty must have shape ({params.m},), got {u.shape}")
        if np.any(u < 0.0) or np.any(u > 1.0):
            raise ValueError(f"duty entries must lie in [0, 1], got {u!r}")
        spec = _build_spec(params, duty=u)
        return _run(params, spec, lambda: _make_plant_rhs(params, 1.0 - u),
                    x0, integrator,
                    lambda res: _constant_duty_trajectory(params, u, res))
    ctrl0 = controller.initial_controller_state()
    y0 = np.concatenate([x0, ctrl0.vcd, ctrl0.itd])
    spec = _build_spec(params, controller=controller)
    return _run(params, spec, lambda: _make_controlled_rhs(params, controller),
                y0, integrator,
                lambda res: _controlled_trajectory(params, controller, res))


def simulate_switched(params: RingParams, x0, integrator: IntegratorConfig,
                      pwm: PwmConfig, controller: PbcController | None = None,
                      duty=None) -> Trajectory:
    """Integrate the binary-switch model under sawtooth PWM.

    Requires fixed-step RK4 with dt <= 1/(50 f_sw) so every switching period
    is resolved.  The switch is on while the carrier sits below the commanded
    duty; the recorded duty column is the modulating signal, not the switch.
    """
    x0 = _check_x0(params, x0)
    if (controller is None) == (duty is None):
        raise ValueError("supply exactly one of controller or constant duty")
    if integrator.method != "rk4":
        raise ValueError("switched simulation needs the fixed-step rk4 method")
    dt_cap = 1.0 / (50.0 * pwm.f_sw)
    if integrator.dt > dt_cap * (1.0 + 1e-12):
        raise ValueError(
            f"dt={integrator.dt:g} too coarse for f_sw={pwm.f_sw:g} Hz; need dt <= {dt_cap:g}"
        )
    if controller is not None and controller.reference.is_time_varying:
        if pwm.f_sw < 100.0 * controller.reference.frequency:
            raise ValueError(
                f"f_sw={pwm.f_sw:g} Hz must be at least 100x the reference "
                f"frequency {controller.reference.frequency:g} Hz"
            )
    if controller is None:
        u = np.asarray(duty, dtype=float)
        if u.shape != (params.m,):
            raise ValueError(f"duty must have shape ({params.m},), got {u.shape}")
        if np.any(u < 0.0) or np.any(u > 1.0):
            raise ValueError(f"duty entries must lie in [0, 1], got {u!r}")
        spec = _build_spec(params, duty=u, pwm=pwm)
        return _run(params, spec, lambda: _make_switched_const_rhs(params, u, pwm),
                    x0, integrator,
                    lambda res: _constant_duty_trajectory(params, u, res))
    ctrl0 = controller.initial_controller_state()
    y0 = np.concatenate([x0, ctrl0.vcd, ctrl0.itd])
    spec = _build_spec(params, controller=controller, pwm=pwm)
    return _run(params, spec, lambda: _make_controlled_rhs(params, controller, pwm=pwm),
                y0, integrator,
                lambda res: _controlled_trajectory(params, controller, res))


@dataclass
class CrossValidation:
    """RK4-vs-RK45 agreement report: per-dt deviations and order estimates."""

    entries: list          # [(dt, max pointwise state deviation)]
    orders: list           # order estimates from consecutive dt pairs
    reference_config: IntegratorConfig


def cross_validate(params: RingParams, x0, base: IntegratorConfig, dt_list,
                   controller: PbcController | None = None, duty=None,
                   rk45_rtol: float = 1e-9, rk45_atol: float = 1e-12) -> CrossValidation:
    """Run the same scenario under RK4 at each dt and under adaptive RK45.

    The RK45 leg runs at oracle tolerances (tighter than production defaults)
    so deviations measure the RK4 error.  Convergence orders are estimated
    from successive step pairs using the effective step (the RK4 driver
    rounds dt down so whole steps land on each output boundary); classical
    RK4 should sit near 4.
    """
    if len(dt_list) < 1:
        raise ValueError("need at least one dt")
    ref_cfg = replace(base, method="rk45", rtol=rk45_rtol, atol=rk45_atol, dt=None)
    kwargs = {"controller": controller, "duty": duty}
    ref = simulate_averaged(params, x0, ref_cfg, **kwargs)

    entries = []
    h_eff = []
    for dt in dt_list:
        cfg = IntegratorConfig(method="rk4", dt=float(dt), t_end=base.t_end,
                               output_dt=base.output_dt)
        run = simulate_averaged(params, x0, cfg, **kwargs)
        entries.append((float(dt), max_state_deviation(ref, run)))
        h_eff.append(base.output_dt / math.ceil(base.output_dt / float(dt) - 1e-9))

    ordered = sorted(zip(h_eff, (e[1] for e in entries)), key=lambda e: -e[0])
    orders = []
    for (ha, deva), (hb, devb) in zip(ordered, ordered[1:]):
        if devb > 0.0 and ha > hb:
            orders.append(math.log(deva / devb) / math.log(ha / hb))
    return CrossValidation(entries=entries, orders=orders, reference_config=ref_cfg)


def max_state_deviation(a: Trajectory, b: Trajectory) -> float:
    """Largest absolute state difference over the common sample grid."""
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories were recorded on different sample grids")
    return float(np.max(np.abs(a.states - b.states)))


def pwm_period_average(times: np.ndarray, series: np.ndarray, period: float) -> np.ndarray:
    """Trailing boxcar average over one PWM period; needs a uniform grid."""
    dt = np.diff(times)
    if dt.size == 0 or not np.allclose(dt, dt[0], rtol=1e-6, atol=0):
        raise ValueError("period averaging needs uniformly sampled data")
    w = max(1, int(round(period / dt[0])))
    s = np.asarray(series, dtype=float)
    cs = np.cumsum(s, axis=0)
    out = np.empty_like(s)
    counts = np.arange(1, min(w, s.shape[0]) + 1, dtype=float)
    if s.ndim > 1:
        counts = counts.reshape(-1, *([1] * (s.ndim - 1)))
    out[:w] = cs[:w] / counts
    out[w:] = (cs[w:] - cs[:-w]) / w
    return out


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write the trajectory in the canonical CSV layout, full precision."""
    m = traj.m
    header = ["t"]
    for n in range(m):
        header += [f"iL_{n}", f"vC_{n}", f"iT_{n}", f"mu_{n}", f"Hd_{n}"]
    header.append("Hd_total")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(traj.times.size):
            row = [f"{traj.times[i]:.17g}"]
            for n in range(m):
                row += [
                    f"{traj.states[i, 3 * n]:.17g}",
                    f"{traj.states[i, 3 * n + 1]:.17g}",
                    f"{traj.states[i, 3 * n + 2]:.17g}",
                    f"{traj.duties[i, n]:.17g}",
                    f"{traj.hd[i, n]:.17g}",
                ]
            row.append(f"{traj.hd_total[i]:.17g}")
            fh.write(",".join(row) + "\n")


def trajectory_from_csv(path) -> Trajectory:
    """Load a trajectory written by :func:`trajectory_to_csv`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        ncols = len(header)
        if ncols < 7 or header[0] != "t" or header[-1] != "Hd_total" or (ncols - 2) % 5 != 0:
            raise ValueError(f"not a trajectory CSV: unexpected header {header!r}")
        m = (ncols - 2) // 5
        rows = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows)
    states = np.empty((data.shape[0], 3 * m))
    duties = np.empty((data.shape[0], m))
    hd = np.empty((data.shape[0], m))
    for n in range(m):
        base = 1 + 5 * n
        states[:, 3 * n] = data[:, base]
        states[:, 3 * n + 1] = data[:, base + 1]
        states[:, 3 * n + 2] = data[:, base + 2]
        duties[:, n] = data[:, base + 3]
        hd[:, n] = data[:, base + 4]
    return Trajectory(times=data[:, 0], states=states, duties=duties,
                      hd=hd, hd_total=data[:, -1], events=[])
