"""Explicit ODE integration cores: fixed-step RK4 and adaptive RK45.

The adaptive method is the Dormand-Prince embedded 5(4) pair with FSAL and a
standard accept/reject step controller; the fixed-step classical RK4 is kept
as an independent cross-check.  Both step exactly onto the output grid so
recorded samples need no interpolation, which keeps runs bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["IntegratorConfig", "IntegrationResult", "SimulationError", "integrate"]


class SimulationError(RuntimeError):
    """Integration failed; carries the failure time and the partial solution."""

    def __init__(self, t: float, reason: str, times=None, states=None):
        super().__init__(f"integration failed at t={t:.9g} s: {reason}")
        self.t = t
        self.reason = reason
        self.partial_times = times
        self.partial_states = states
        self.trajectory = None  # filled in by the simulation layer


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping configuration.

    ``method`` is "rk45" (adaptive, mirrors a variable-step ode45-style run)
    or "rk4" (fixed step ``dt``).  Samples are recorded every ``output_dt``
    seconds and at ``t_end``.
    """

    method: str = "rk45"
    t_end: float = 1.0
    output_dt: float = 1e-4
    dt: float | None = None
    rtol: float = 1e-6
    atol: float = 1e-9
    dt_min: float = 1e-12
    dt_max: float = 1e-2

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"method must be 'rk4' or 'rk45', got {self.method!r}")
        if not (math.isfinite(self.t_end) and self.t_end > 0.0):
            raise ValueError(f"t_end must be positive, got {self.t_end!r}")
        if not (math.isfinite(self.output_dt) and 0.0 < self.output_dt <= self.t_end):
            raise ValueError(f"output_dt must lie in (0, t_end], got {self.output_dt!r}")
        if self.method == "rk4":
            if self.dt is None or not (math.isfinite(self.dt) and self.dt > 0.0):
                raise ValueError(f"rk4 needs a positive dt, got {self.dt!r}")
        else:
            if not (self.rtol > 0.0 and self.atol > 0.0):
                raise ValueError("rtol and atol must be positive")
            if not (0.0 < self.dt_min < self.dt_max):
                raise ValueError("need 0 < dt_min < dt_max")


@dataclass
class IntegrationResult:
    times: np.ndarray    # (n,)
    states: np.ndarray   # (n, dim)
    n_steps: int
    n_rejected: int
    events: list = field(default_factory=list)


def _output_grid(t_end: float, output_dt: float) -> np.ndarray:
    n = int(math.floor(t_end / output_dt + 1e-9))
    grid = output_dt * np.arange(1, n + 1)
    if grid.size == 0 or t_end - grid[-1] > 1e-9 * max(t_end, 1.0):
        grid = np.append(grid, t_end)
    grid[-1] = t_end
    return grid


def integrate(f, y0, cfg: IntegratorConfig) -> IntegrationResult:
    """Integrate dy/dt = f(t, y) from t = 0 to cfg.t_end."""
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise SimulationError(0.0, "initial state is not finite")
    if cfg.method == "rk4":
        return _integrate_rk4(f, y0, cfg)
    return _integrate_rk45(f, y0, cfg)


def _fail(t, reason, rec_t, rec_y):
    raise SimulationError(t, reason, times=np.array(rec_t), states=np.array(rec_y))


def _integrate_rk4(f, y0, cfg: IntegratorConfig) -> IntegrationResult:
    grid = _output_grid(cfg.t_end, cfg.output_dt)
    rec_t = [0.0]
    rec_y = [y0.copy()]
    y = y0.copy()
    t = 0.0
    n_steps = 0
    for boundary in grid:
        span = boundary - t
        n_sub = max(1, int(math.ceil(span / cfg.dt - 1e-9)))
        h = span / n_sub
        for i in range(n_sub):
            ts = t + i * h
            k1 = f(ts, y)
            k2 = f(ts + 0.5 * h, y + (0.5 * h) * k1)
            k3 = f(ts + 0.5 * h, y + (0.5 * h) * k2)
            k4 = f(ts + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            n_steps += 1
            if not np.all(np.isfinite(y)):
                _fail(ts + h, "state became non-finite (NaN/inf)", rec_t, rec_y)
        t = boundary
        rec_t.append(t)
        rec_y.append(y.copy())
    return IntegrationResult(times=np.array(rec_t), states=np.array(rec_y),
                             n_steps=n_steps, n_rejected=0)


# Dormand-Prince 5(4) coefficients.
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# difference between 5th- and 4th-order weights, for the error estimate
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

_MAX_EVENTS = 1000


def _integrate_rk45(f, y0, cfg: IntegratorConfig) -> IntegrationResult:
    grid = _output_grid(cfg.t_end, cfg.output_dt)
    rec_t = [0.0]
    rec_y = [y0.copy()]
    events: list = []
    y = y0.copy()
    t = 0.0
    n_steps = 0
    n_rejected = 0

    k1 = f(t, y)
    if not np.all(np.isfinite(k1)):
        _fail(0.0, "derivative is not finite at the initial state", rec_t, rec_y)

    h = min(cfg.dt_max, cfg.output_dt)
    gi = 0
    while gi < grid.size:
        boundary = grid[gi]
        if h < cfg.dt_min:
            _fail(t, f"step size underflow (h={h:.3g} < dt_min={cfg.dt_min:.3g})",
                  rec_t, rec_y)
        truncated = t + h >= boundary
        hs = boundary - t if truncated else h

        k2 = f(t + _C2 * hs, y + hs * (_A21 * k1))
        k3 = f(t + _C3 * hs, y + hs * (_A31 * k1 + _A32 * k2))
        k4 = f(t + _C4 * hs, y + hs * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = f(t + _C5 * hs, y + hs * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = f(t + hs, y + hs * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
        y_new = y + hs * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = f(t + hs, y_new)

        err_vec = hs * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        if np.all(np.isfinite(y_new)) and np.all(np.isfinite(err_vec)):
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        else:
            err_norm = math.inf

        n_steps += 1
        if err_norm <= 1.0:
            t = boundary if truncated else t + hs
            y = y_new
            k1 = k7
            if truncated:
                rec_t.append(t)
                rec_y.append(y.copy())
                gi += 1
                # keep the controller's standing proposal; a boundary-shortened
                # step must not shrink subsequent steps
            else:
                if err_norm > 0.0:
                    factor = min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
                else:
                    factor = 5.0
                h = min(cfg.dt_max, hs * factor)
        else:
            n_rejected += 1
            if len(events) < _MAX_EVENTS:
                events.append(f"t={t:.9g} step_rejected h={hs:.3g} err_norm={err_norm:.3g}")
            if not math.isfinite(err_norm):
                h = 0.5 * hs
            else:
                h = hs * max(0.2, 0.9 * err_norm ** -0.2)

    if n_rejected > _MAX_EVENTS:
        events.append(f"step_rejected events truncated, total={n_rejected}")
    return IntegrationResult(times=np.array(rec_t), states=np.array(rec_y),
                             n_steps=n_steps, n_rejected=n_rejected, events=events)
