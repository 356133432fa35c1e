"""Ring-coupled boost converter network: parameters, state layout, dynamics.

m DC/DC boost converters sit on a ring.  Each converter n has a DC source
E_n, a switch-side inductor L_n, an output capacitor C_n and a local load
R2T_n; line n is a series R-L branch (LT_n, R1T_n) connecting the output of
converter n to the output of converter (n+1) mod m.  With u_n the switch
position (binary) or duty ratio (averaged), the dynamics are, indices mod m:

    L_n   d(iL_n)/dt = -(1 - u_n) vC_n + E_n
    C_n   d(vC_n)/dt =  (1 - u_n) iL_n - iT_n + iT_{n-1} - vC_n / R2T_n
    LT_n  d(iT_n)/dt =  vC_n - vC_{n+1} - R1T_n iT_n

The same system in energy-structured (port-Hamiltonian) form reads

    D dx/dt = (J(u) - R) x + Evec

with D = blockdiag(L_n, C_n, LT_n) positive diagonal, J(u) exactly
skew-symmetric (lossless interconnection), R = blockdiag(0, 1/R2T_n, R1T_n)
diagonal PSD (dissipation) and Evec carrying the source voltages on the
inductor-current rows.  The stored energy is H = 1/2 x^T D x.

State layout is interleaved per converter, x = (iL0, vC0, iT0, iL1, ...),
so D, J and R keep their 3x3 block structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


def _positive(name: str, value: float) -> float:
    v = float(value)
    if not math.isfinite(v) or v <= 0.0:
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return v


@dataclass(frozen=True)
class ConverterParams:
    """One boost converter: storage elements, source and local load."""

    L: float    # inductance, H
    C: float    # capacitance, F
    E: float    # source voltage, V
    R2T: float  # load resistance, Ohm

    def __post_init__(self):
        for name in ("L", "C", "E", "R2T"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))


@dataclass(frozen=True)
class LineParams:
    """Series R-L coupling branch between neighbouring converters."""

    LT: float   # line inductance, H
    R1T: float  # line resistance, Ohm

    def __post_init__(self):
        for name in ("LT", "R1T"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))


@dataclass(frozen=True)
class RingParams:
    """Full parameterization of an m-converter ring.

    ``lines[n]`` couples converter n to converter (n+1) mod m.  Requires
    m >= 2 and one line per converter.
    """

    converters: tuple[ConverterParams, ...]
    lines: tuple[LineParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "converters", tuple(self.converters))
        object.__setattr__(self, "lines", tuple(self.lines))
        if len(self.converters) < 2:
            raise ValueError(f"ring needs at least 2 converters, got {len(self.converters)}")
        if len(self.lines) != len(self.converters):
            raise ValueError(
                f"need one line per converter, got {len(self.lines)} lines "
                f"for {len(self.converters)} converters"
            )

    @property
    def m(self) -> int:
        return len(self.converters)

    @classmethod
    def uniform(cls, m: int, *, L: float, C: float, E: float, R2T: float,
                LT: float, R1T: float) -> "RingParams":
        """Ring of m identical converters and identical lines."""
        return cls(
            converters=tuple(ConverterParams(L=L, C=C, E=E, R2T=R2T) for _ in range(m)),
            lines=tuple(LineParams(LT=LT, R1T=R1T) for _ in range(m)),
        )

    # Per-ring parameter arrays, index = converter/line number.
    @cached_property
    def L(self) -> np.ndarray:
        return np.array([c.L for c in self.converters])

    @cached_property
    def C(self) -> np.ndarray:
        return np.array([c.C for c in self.converters])

    @cached_property
    def E(self) -> np.ndarray:
        return np.array([c.E for c in self.converters])

    @cached_property
    def R2T(self) -> np.ndarray:
        return np.array([c.R2T for c in self.converters])

    @cached_property
    def LT(self) -> np.ndarray:
        return np.array([ln.LT for ln in self.lines])

    @cached_property
    def R1T(self) -> np.ndarray:
        return np.array([ln.R1T for ln in self.lines])

    @cached_property
    def d_diag(self) -> np.ndarray:
        """Diagonal of the energy-weight matrix D, interleaved layout."""
        d = np.empty(3 * self.m)
        d[0::3] = self.L
        d[1::3] = self.C
        d[2::3] = self.LT
        return d


def pack_state(iL, vC, iT) -> np.ndarray:
    """Interleave per-converter (iL, vC, iT) arrays into a flat state vector."""
    iL = np.asarray(iL, dtype=float)
    vC = np.asarray(vC, dtype=float)
    iT = np.asarray(iT, dtype=float)
    if not (iL.shape == vC.shape == iT.shape) or iL.ndim != 1:
        raise ValueError("iL, vC, iT must be 1-d arrays of equal length")
    x = np.empty(3 * iL.size)
    x[0::3] = iL
    x[1::3] = vC
    x[2::3] = iT
    return x


def split_state(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Strided views (iL, vC, iT) of a flat state vector."""
    x = np.asarray(x)
    if x.ndim != 1 or x.size % 3 != 0:
        raise ValueError(f"state length must be a multiple of 3, got shape {x.shape}")
    return x[0::3], x[1::3], x[2::3]


def _check_state(params: RingParams, state) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    if x.shape != (3 * params.m,):
        raise ValueError(f"state must have shape ({3 * params.m},), got {x.shape}")
    return x


def _check_duty(params: RingParams, duty) -> np.ndarray:
    u = np.asarray(duty, dtype=float)
    if u.shape != (params.m,):
        raise ValueError(f"duty must have shape ({params.m},), got {u.shape}")
    if np.any(u < 0.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
        raise ValueError(f"duty entries must lie in [0, 1], got {u!r}")
    return u


@dataclass(frozen=True)
class PchMatrices:
    """Energy-structured system matrices D, J(u), R and input vector."""

    D: np.ndarray     # (3m, 3m) diagonal, positive
    J: np.ndarray     # (3m, 3m) skew-symmetric interconnection
    R: np.ndarray     # (3m, 3m) diagonal, PSD dissipation
    Evec: np.ndarray  # (3m,) source voltages on iL rows


def assemble_pch(params: RingParams, duty) -> PchMatrices:
    """Assemble D, J(u), R, Evec for the ring at the given duty vector.

    J is block circulant-tridiagonal: diagonal blocks couple each converter's
    own (iL, vC, iT), the (n, n-1) blocks feed line current iT_{n-1} into
    capacitor n, and the (n, n+1) blocks feed -vC_{n+1} into line n.  The
    wrap-around blocks close the ring and make J skew-symmetric for every u.
    """
    u = _check_duty(params, duty)
    m = params.m
    D = np.diag(params.d_diag)

    r = np.zeros(3 * m)
    r[1::3] = 1.0 / params.R2T
    r[2::3] = params.R1T
    R = np.diag(r)

    Evec = np.zeros(3 * m)
    Evec[0::3] = params.E

    J = np.zeros((3 * m, 3 * m))
    for n in range(m):
        k = 3 * n
        omu = 1.0 - u[n]
        J[k, k + 1] = -omu
        J[k + 1, k] = omu
        J[k + 1, k + 2] = -1.0
        J[k + 2, k + 1] = 1.0
        # neighbour coupling, += so the m = 2 case (prev == next) accumulates
        p = 3 * ((n - 1) % m)
        q = 3 * ((n + 1) % m)
        J[k + 1, p + 2] += 1.0   # +iT_{n-1} into vC_n row
        J[k + 2, q + 1] += -1.0  # -vC_{n+1} into iT_n row
    return PchMatrices(D=D, J=J, R=R, Evec=Evec)


def _rhs(L, C, E, R2T, LT, R1T, x, one_minus_u, out=None):
    """Time derivative of the ring state; ``one_minus_u`` is 1 - duty."""
    if out is None:
        out = np.empty_like(x)
    iL = x[0::3]
    vC = x[1::3]
    iT = x[2::3]
    out[0::3] = (E - one_minus_u * vC) / L
    out[1::3] = (one_minus_u * iL - iT + np.roll(iT, 1) - vC / R2T) / C
    out[2::3] = (vC - np.roll(vC, -1) - R1T * iT) / LT
    return out


def averaged_derivative(params: RingParams, state, duty) -> np.ndarray:
    """d(state)/dt of the averaged model under duty ratios in [0, 1]."""
    x = _check_state(params, state)
    u = _check_duty(params, duty)
    return _rhs(params.L, params.C, params.E, params.R2T,
                params.LT, params.R1T, x, 1.0 - u)


def switched_derivative(params: RingParams, state, switches) -> np.ndarray:
    """d(state)/dt of the switched model; switch entries must be 0 or 1."""
    x = _check_state(params, state)
    s = np.asarray(switches, dtype=float)
    if s.shape != (params.m,):
        raise ValueError(f"switches must have shape ({params.m},), got {s.shape}")
    if not np.all((s == 0.0) | (s == 1.0)):
        raise ValueError(f"switch entries must be exactly 0 or 1, got {s!r}")
    return _rhs(params.L, params.C, params.E, params.R2T,
                params.LT, params.R1T, x, 1.0 - s)


def hamiltonian(params: RingParams, state) -> float:
    """Stored energy 1/2 x^T D x, in joules.  Nonnegative, zero only at x = 0."""
    x = _check_state(params, state)
    return 0.5 * float(np.dot(params.d_diag * x, x))
