"""Passivity-based voltage regulation through damping injection.

The controller shapes the stored energy around a desired trajectory x_d and
injects a virtual resistance R_alpha on each inductor-current slot.  The
error energy

    Hd = 1/2 e^T D e,   e = x - x_d

then decays along closed-loop trajectories at least as fast as
exp(-k t) with k = min_i (R + R_I)_ii / D_ii, because

    dHd/dt = -e^T (R + R_I) e <= -k Hd.

The inductor current is the regulated variable (it is the minimum-phase
output); the capacitor-voltage and line-current targets are generated by the
converter's own dynamics driven by the fixed current target:

    duty law:   mu_n = 1 - (E_n + R_alpha_n (iL_n - iL_bar_n)) / vCd_n
    C_n  d(vCd_n)/dt = (1 - mu_n) iL_bar_n - iTd_n + iTd_{n-1} - vCd_n / R2T_n
    LT_n d(iTd_n)/dt = vCd_n - vCd_{n+1} - R1T_n iTd_n

For a sinusoidal reference the current target is recomputed from the
instantaneous equilibrium (quasi-static tracking) and the desired voltage
keeps evolving by its own dynamics, with the waveform entering through the
moving current target (``vcd_mode="ode"``, the default).  Pinning the
desired voltage to the commanded waveform instead is available through
``vcd_mode="waveform"``; it yields a heavily phase-lagged closed loop near
the converter's resonance and tracks worse than open-loop feedforward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import duty_from_voltage, steady_state
from .model import RingParams

__all__ = [
    "DampingConfig",
    "ConstantReference",
    "SinusoidReference",
    "ControllerState",
    "ErrorEnergy",
    "pbc_duty",
    "desired_state_derivative",
    "error_energy",
    "error_energy_rate",
    "decay_rate_bound",
    "PbcController",
]


@dataclass(frozen=True)
class DampingConfig:
    """Injected virtual resistance per converter, on the inductor slot."""

    r_alpha: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "r_alpha", tuple(float(r) for r in self.r_alpha))
        for r in self.r_alpha:
            if not math.isfinite(r) or r < 0.0:
                raise ValueError(f"damping gains must be finite and >= 0, got {r!r}")

    @classmethod
    def uniform(cls, m: int, value: float = 15.0) -> "DampingConfig":
        return cls(r_alpha=(float(value),) * m)

    @property
    def as_array(self) -> np.ndarray:
        return np.array(self.r_alpha)


@dataclass(frozen=True)
class ConstantReference:
    """Fixed output-voltage target per converter."""

    vcd: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "vcd", tuple(float(v) for v in self.vcd))
        for v in self.vcd:
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"voltage targets must be positive, got {v!r}")

    @classmethod
    def uniform(cls, m: int, value: float) -> "ConstantReference":
        return cls(vcd=(float(value),) * m)

    def validate_against(self, params: RingParams) -> None:
        for n, v in enumerate(self.vcd):
            if v < params.converters[n].E:
                raise ValueError(
                    f"target {v} V for converter {n} is below its source "
                    f"{params.converters[n].E} V (boost only steps up)"
                )

    def values(self, t: float, m: int) -> np.ndarray:
        return np.array(self.vcd)

    def rates(self, t: float, m: int) -> np.ndarray:
        return np.zeros(m)

    @property
    def is_time_varying(self) -> bool:
        return False


@dataclass(frozen=True)
class SinusoidReference:
    """Shared sinusoidal target v(t) = v_dc + amplitude * sin(2 pi f t)."""

    v_dc: float
    amplitude: float
    frequency: float

    def __post_init__(self):
        for name in ("v_dc", "amplitude", "frequency"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)

    def validate_against(self, params: RingParams) -> None:
        if self.v_dc - self.amplitude <= float(np.max(params.E)):
            raise ValueError(
                f"waveform trough {self.v_dc - self.amplitude} V must stay above "
                f"the largest source voltage {float(np.max(params.E))} V"
            )

    def values(self, t: float, m: int) -> np.ndarray:
        return np.full(m, self.v_dc + self.amplitude * math.sin(2.0 * math.pi * self.frequency * t))

    def rates(self, t: float, m: int) -> np.ndarray:
        w = 2.0 * math.pi * self.frequency
        return np.full(m, self.amplitude * w * math.cos(w * t))

    @property
    def is_time_varying(self) -> bool:
        return True


@dataclass
class ControllerState:
    """Desired trajectories the controller carries between evaluations."""

    vcd: np.ndarray     # desired capacitor voltage per converter, V
    itd: np.ndarray     # desired line current per converter, A
    il_bar: np.ndarray  # inductor-current target per converter, A


@dataclass(frozen=True)
class ErrorEnergy:
    """Quadratic error energy, total and per converter."""

    per_converter: np.ndarray
    total: float
    e: np.ndarray  # deviation x - x_d, interleaved layout


def pbc_duty(params: RingParams, state, ctrl: ControllerState,
             damping: DampingConfig, clamp: bool = True) -> np.ndarray:
    """Duty-ratio feedback law; clamped to [0, 1] unless ``clamp=False``."""
    x = np.asarray(state, dtype=float)
    if np.any(ctrl.vcd <= 0.0):
        raise ValueError(f"controller desired voltage must be positive, got {ctrl.vcd!r}")
    iL = x[0::3]
    mu = 1.0 - (params.E + damping.as_array * (iL - ctrl.il_bar)) / ctrl.vcd
    if clamp:
        mu = np.clip(mu, 0.0, 1.0)
    return mu


def desired_state_derivative(params: RingParams, ctrl: ControllerState, duty,
                             reference, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives (dvcd/dt, ditd/dt) of the desired trajectories.

    For a time-varying reference the desired voltage follows the commanded
    waveform, so its rate is the waveform rate; otherwise it evolves by the
    converter dynamics driven by the current target.
    """
    mu = np.asarray(duty, dtype=float)
    if reference is not None and reference.is_time_varying:
        dvcd = reference.rates(t, params.m)
    else:
        dvcd = ((1.0 - mu) * ctrl.il_bar - ctrl.itd + np.roll(ctrl.itd, 1)
                - ctrl.vcd / params.R2T) / params.C
    ditd = (ctrl.vcd - np.roll(ctrl.vcd, -1) - params.R1T * ctrl.itd) / params.LT
    return dvcd, ditd


def error_energy(params: RingParams, state, ctrl: ControllerState) -> ErrorEnergy:
    """Error energy Hd = 1/2 e^T D e against the controller's desired state."""
    x = np.asarray(state, dtype=float)
    e = np.empty_like(x)
    e[0::3] = x[0::3] - ctrl.il_bar
    e[1::3] = x[1::3] - ctrl.vcd
    e[2::3] = x[2::3] - ctrl.itd
    per = 0.5 * (params.L * e[0::3] ** 2 + params.C * e[1::3] ** 2 + params.LT * e[2::3] ** 2)
    return ErrorEnergy(per_converter=per, total=float(per.sum()), e=e)


def error_energy_rate(params: RingParams, state, ctrl: ControllerState,
                      damping: DampingConfig) -> float:
    """dHd/dt = -e^T (R + R_I) e, in watts.  Never positive."""
    err = error_energy(params, state, ctrl)
    e_il = err.e[0::3]
    e_vc = err.e[1::3]
    e_it = err.e[2::3]
    return -float(np.sum(damping.as_array * e_il ** 2)
                  + np.sum(e_vc ** 2 / params.R2T)
                  + np.sum(params.R1T * e_it ** 2))


def decay_rate_bound(params: RingParams, damping: DampingConfig) -> float:
    """Smallest slot-wise ratio (R + R_I)_ii / D_ii, the error-energy decay rate."""
    rates = np.concatenate([
        damping.as_array / params.L,
        (1.0 / params.R2T) / params.C,
        params.R1T / params.LT,
    ])
    return float(rates.min())


class PbcController:
    """Bundles damping, reference and target bookkeeping for simulation.

    ``vcd_mode`` selects how the desired voltage evolves under a time-varying
    reference: ``"ode"`` (default) integrates the desired-voltage dynamics
    with the waveform entering through the quasi-static current target,
    ``"waveform"`` pins the desired voltage to the commanded waveform.
    """

    def __init__(self, params: RingParams, damping: DampingConfig, reference,
                 vcd_mode: str = "ode"):
        if len(damping.r_alpha) != params.m:
            raise ValueError(
                f"damping has {len(damping.r_alpha)} gains for {params.m} converters"
            )
        if vcd_mode not in ("waveform", "ode"):
            raise ValueError(f"vcd_mode must be 'waveform' or 'ode', got {vcd_mode!r}")
        reference.validate_against(params)
        self.params = params
        self.damping = damping
        self.reference = reference
        self.vcd_mode = vcd_mode
        self._quasi_static = reference.is_time_varying
        if not self._quasi_static:
            eq = self._equilibrium_at(reference.values(0.0, params.m))
            self._il_bar0 = eq.iL_bar
            self._itd0 = eq.iT_bar
        else:
            eq = self._equilibrium_at(reference.values(0.0, params.m))
            self._itd0 = eq.iT_bar

    def _equilibrium_at(self, vcd: np.ndarray):
        U = np.array([duty_from_voltage(self.params.E[n], vcd[n]) for n in range(self.params.m)])
        return steady_state(self.params, U)

    def initial_controller_state(self) -> ControllerState:
        """Desired trajectories started at their own fixed point."""
        vcd0 = self.reference.values(0.0, self.params.m)
        il0 = self.il_bar(0.0, vcd0)
        return ControllerState(vcd=vcd0.copy(), itd=self._itd0.copy(), il_bar=il0)

    def il_bar(self, t: float, vcd: np.ndarray) -> np.ndarray:
        """Inductor-current target; recomputed each instant for moving targets."""
        if self._quasi_static:
            return self._equilibrium_at(vcd).iL_bar
        return self._il_bar0
