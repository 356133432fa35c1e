"""Closed-form steady states of the averaged ring under constant duty ratios.

With constant duty U_n, the averaged dynamics admit one equilibrium per duty
vector, explicit in the parameters:

    vC_bar_n = E_n / (1 - U_n)                      (boost gain)
    iT_bar_n = (vC_bar_n - vC_bar_{n+1}) / R1T_n    (line Ohm's law)
    iL_bar_n = (vC_bar_n / R2T_n + iT_bar_n - iT_bar_{n-1}) / (1 - U_n)

The output voltage depends only on the converter's own source and duty,
never on the load, so equal targets give zero steady line currents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import RingParams, pack_state

__all__ = ["Equilibrium", "duty_from_voltage", "steady_state", "operating_point"]


def duty_from_voltage(source_voltage: float, target_voltage: float) -> float:
    """Constant duty ratio that places the output at ``target_voltage``.

    Inverts the boost gain: U = 1 - E / vCd.  A boost converter only steps
    up, so targets below the source are rejected.
    """
    E = float(source_voltage)
    v = float(target_voltage)
    if not math.isfinite(E) or E <= 0.0:
        raise ValueError(f"source voltage must be positive, got {source_voltage!r}")
    if not math.isfinite(v) or v <= 0.0:
        raise ValueError(f"target voltage must be positive, got {target_voltage!r}")
    if v < E:
        raise ValueError(
            f"target {v} V is below source {E} V; a boost converter cannot step down"
        )
    return 1.0 - E / v


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """Steady-state triple per converter plus the constant duty vector."""

    iL_bar: np.ndarray
    vC_bar: np.ndarray
    iT_bar: np.ndarray
    duty: np.ndarray

    @property
    def state(self) -> np.ndarray:
        """Equilibrium packed as a flat ring state vector."""
        return pack_state(self.iL_bar, self.vC_bar, self.iT_bar)


def steady_state(params: RingParams, duty) -> Equilibrium:
    """Closed-form equilibrium of the averaged ring at constant duty U.

    Requires every U_n in [0, 1); at U_n = 1 the switch never opens and no
    equilibrium exists.
    """
    U = np.asarray(duty, dtype=float)
    if U.shape != (params.m,):
        raise ValueError(f"duty must have shape ({params.m},), got {U.shape}")
    if np.any(U < 0.0) or np.any(U >= 1.0) or not np.all(np.isfinite(U)):
        raise ValueError(f"steady state needs duty entries in [0, 1), got {U!r}")
    omu = 1.0 - U
    vC = params.E / omu
    iT = (vC - np.roll(vC, -1)) / params.R1T
    iL = (vC / params.R2T + iT - np.roll(iT, 1)) / omu
    return Equilibrium(iL_bar=iL, vC_bar=vC, iT_bar=iT, duty=U)


def operating_point(params: RingParams, vcd_targets) -> Equilibrium:
    """Equilibrium for per-converter output-voltage targets.

    Chains the duty inversion through the closed-form steady state; targets
    may be a scalar (broadcast) or one value per converter.
    """
    v = np.broadcast_to(np.asarray(vcd_targets, dtype=float), (params.m,))
    U = np.array([duty_from_voltage(params.E[n], v[n]) for n in range(params.m)])
    return steady_state(params, U)
