"""Residual duty-ratio dynamics when one converter output is pinned.

Pinning an output of converter n (capacitor voltage to vC_bar, or inductor
current to iL_bar) together with its line currents leaves a one-dimensional
flow in the duty ratio mu.  Its phase line decides which output is usable
for feedback:

* voltage output: the interior rest point mu = 1 - E/vC_bar is unstable
  (non-minimum phase), so the capacitor voltage cannot be regulated directly;
* current output: the interior rest point is stable whenever R2 * iL_bar > E
  (minimum phase), so the inductor current is the variable to control.

``phase_line`` samples the selected flow on a grid over (0, 1), locates the
rest points by bisection and classifies them by the local slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import Equilibrium
from .model import RingParams

__all__ = [
    "ZeroDynConfig",
    "DutyEquilibrium",
    "PhaseLine",
    "mu_dot_voltage_output",
    "mu_dot_current_output",
    "equilibria_current_output",
    "phase_line",
    "phase_line_to_csv",
]

BISECTION_TOL = 1e-10
DEGENERATE_SLOPE = 1e-12


@dataclass(frozen=True)
class ZeroDynConfig:
    """One converter with its outputs and adjacent line currents pinned.

    ``it_pinned`` is the line current leaving the converter, ``it_prev_pinned``
    the one arriving from its ring predecessor.  ``vc_pinned`` is required for
    the voltage-output flow, ``il_pinned`` for the current-output flow.
    """

    L: float
    C: float
    E: float
    R2: float
    it_pinned: float
    it_prev_pinned: float
    vc_pinned: float | None = None
    il_pinned: float | None = None

    def __post_init__(self):
        for name in ("L", "C", "E", "R2"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("it_pinned", "it_prev_pinned", "vc_pinned", "il_pinned"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(float(v)):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.vc_pinned is not None and self.vc_pinned <= 0.0:
            raise ValueError(f"vc_pinned must be positive, got {self.vc_pinned!r}")

    @classmethod
    def from_equilibrium(cls, params: RingParams, eq: Equilibrium, n: int) -> "ZeroDynConfig":
        """Pin converter n of a ring at one of its closed-form equilibria."""
        m = params.m
        c = params.converters[n % m]
        return cls(
            L=c.L, C=c.C, E=c.E, R2=c.R2T,
            it_pinned=float(eq.iT_bar[n % m]),
            it_prev_pinned=float(eq.iT_bar[(n - 1) % m]),
            vc_pinned=float(eq.vC_bar[n % m]),
            il_pinned=float(eq.iL_bar[n % m]),
        )


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not math.isfinite(mu) or mu < 0.0 or mu > 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu!r}")
    return mu


def _mu_dot_voltage_raw(cfg: ZeroDynConfig, mu: float) -> float:
    denom = cfg.L * ((cfg.it_pinned - cfg.it_prev_pinned) + cfg.vc_pinned)
    if denom == 0.0:
        raise ValueError("degenerate pinning: line-current difference cancels vc_pinned")
    omu = 1.0 - mu
    return omu * omu / denom * (cfg.E - omu * cfg.vc_pinned)


def _mu_dot_current_raw(cfg: ZeroDynConfig, mu: float) -> float:
    omu = 1.0 - mu
    dit = cfg.it_pinned - cfg.it_prev_pinned
    bracket = cfg.R2 * omu * omu * cfg.il_pinned - cfg.R2 * omu * dit - cfg.E
    return omu / (cfg.R2 * cfg.C * cfg.E) * bracket


def mu_dot_voltage_output(cfg: ZeroDynConfig, mu: float) -> float:
    """Duty-ratio flow with the capacitor voltage held at vc_pinned, 1/s."""
    if cfg.vc_pinned is None:
        raise ValueError("voltage-output flow needs vc_pinned")
    return _mu_dot_voltage_raw(cfg, _check_mu(mu))


def mu_dot_current_output(cfg: ZeroDynConfig, mu: float) -> float:
    """Duty-ratio flow with the inductor current held at il_pinned, 1/s."""
    if cfg.il_pinned is None:
        raise ValueError("current-output flow needs il_pinned")
    return _mu_dot_current_raw(cfg, _check_mu(mu))


@dataclass(frozen=True)
class DutyEquilibrium:
    """Rest point of a duty-ratio flow with its phase-line classification."""

    mu: float
    stability: str      # "stable" | "unstable" | "degenerate"
    feasible: bool      # lies in the physical duty range [0, 1]


def _classify_slope(f, mu: float, h: float = 1e-7) -> str:
    slope = (f(mu + h) - f(mu - h)) / (2.0 * h)
    if abs(slope) < DEGENERATE_SLOPE:
        return "degenerate"
    return "stable" if slope < 0.0 else "unstable"


def equilibria_current_output(cfg: ZeroDynConfig) -> tuple[DutyEquilibrium, ...]:
    """The three rest points of the current-output flow.

    The first two are the roots of the quadratic bracket in (1 - mu); the
    third is the boundary point mu = 1 where the flow factor vanishes.  The
    interior root is tagged stable exactly when R2 * iL_bar > E; the boundary
    point is tagged from the local slope.
    """
    if cfg.il_pinned is None:
        raise ValueError("current-output equilibria need il_pinned")
    il = cfg.il_pinned
    if il <= 0.0:
        raise ValueError(f"il_pinned must be positive, got {il!r}")
    beta = (cfg.it_pinned - cfg.it_prev_pinned) / (2.0 * il)
    radicand = cfg.E / (cfg.R2 * il) + beta * beta
    if radicand < 0.0:
        raise ValueError(f"no real interior equilibrium: radicand {radicand!r} < 0")
    root = math.sqrt(radicand)
    mu1 = 1.0 - beta - root
    mu2 = 1.0 - beta + root
    mu1_stability = "stable" if cfg.R2 * il > cfg.E else "unstable"
    return (
        DutyEquilibrium(mu=mu1, stability=mu1_stability, feasible=0.0 <= mu1 <= 1.0),
        DutyEquilibrium(mu=mu2, stability=_classify_slope(lambda v: _mu_dot_current_raw(cfg, v), mu2),
                        feasible=0.0 <= mu2 <= 1.0),
        DutyEquilibrium(mu=1.0, stability=_classify_slope(lambda v: _mu_dot_current_raw(cfg, v), 1.0),
                        feasible=True),
    )


@dataclass(frozen=True)
class PhaseLine:
    """Sampled duty-ratio flow with the interior rest points it brackets."""

    mu: np.ndarray
    mu_dot: np.ndarray
    equilibria: tuple[DutyEquilibrium, ...]


def _bisect(f, lo: float, hi: float, tol: float = BISECTION_TOL) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            return mid
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (flo < 0.0) != (fmid < 0.0):
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def phase_line(cfg: ZeroDynConfig, which: str, grid_size: int) -> PhaseLine:
    """Sample the selected flow on a uniform grid over the open interval (0, 1).

    Sign changes between neighbouring grid points are refined by bisection to
    1e-10 and classified by the slope of the flow at the root.
    """
    if which == "voltage":
        if cfg.vc_pinned is None:
            raise ValueError("voltage-output flow needs vc_pinned")
        f = lambda v: _mu_dot_voltage_raw(cfg, v)
    elif which == "current":
        if cfg.il_pinned is None:
            raise ValueError("current-output flow needs il_pinned")
        f = lambda v: _mu_dot_current_raw(cfg, v)
    else:
        raise ValueError(f"which must be 'voltage' or 'current', got {which!r}")
    if grid_size < 3:
        raise ValueError(f"grid_size must be at least 3, got {grid_size}")

    grid = np.linspace(0.0, 1.0, grid_size + 2)[1:-1]
    vals = np.array([f(g) for g in grid])

    roots: list[DutyEquilibrium] = []
    for i in range(grid.size - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            mu0 = float(grid[i])
        elif (a < 0.0) != (b < 0.0):
            mu0 = _bisect(f, float(grid[i]), float(grid[i + 1]))
        else:
            continue
        if roots and abs(roots[-1].mu - mu0) <= 10 * BISECTION_TOL:
            continue
        roots.append(DutyEquilibrium(mu=mu0, stability=_classify_slope(f, mu0), feasible=True))
    if vals[-1] == 0.0:
        mu0 = float(grid[-1])
        roots.append(DutyEquilibrium(mu=mu0, stability=_classify_slope(f, mu0), feasible=True))
    return PhaseLine(mu=grid, mu_dot=vals, equilibria=tuple(roots))


def phase_line_to_csv(pl: PhaseLine, path) -> None:
    """Two-column CSV (mu, mu_dot) with an equilibria annotation block."""
    with open(path, "w", encoding="utf-8") as fh:
        for eq in pl.equilibria:
            fh.write(f"# equilibrium mu={eq.mu:.12g} stability={eq.stability}\n")
        fh.write("mu,mu_dot\n")
        for mu, md in zip(pl.mu, pl.mu_dot):
            fh.write(f"{mu:.17g},{md:.17g}\n")
