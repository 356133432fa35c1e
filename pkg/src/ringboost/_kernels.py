"""Optional compiled inner loops for the simulation engine.

When numba is importable the ring derivative and the fixed-step RK4 driver
run as compiled kernels; otherwise the engine falls back to the vectorized
numpy implementations in :mod:`ringboost.sim`.  Both paths evaluate the same
expressions in the same order, so results agree to the last bit; a test
locks the two implementations together.

Kernel argument conventions (shared by ``rhs_eval`` and ``rk4_drive``):

* ``ctrl_on`` 0: open loop, ``y`` is the plant state, duty from ``duty_const``.
* ``ctrl_on`` 1: controlled, ``y`` is plant + desired (vcd, itd) slots;
  ``mode`` 0 constant reference, 1 moving reference with ODE-evolved desired
  voltage, 2 moving reference with waveform-pinned desired voltage.
* ``pwm_on`` 1 replaces the duty by a sawtooth-comparator switch state.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def rhs_eval(t, y, out, L, C, E, R2T, LT, R1T,
             ctrl_on, ra, mode, vdc, amp, omega, il_bar0, duty_const,
             pwm_on, f_sw, phases):
    m = L.shape[0]
    vref = 0.0
    if ctrl_on == 1 and mode >= 1:
        vref = vdc + amp * math.sin(omega * t)
    for n in range(m):
        iL_n = y[3 * n]
        if ctrl_on == 1:
            if mode == 0:
                vcd_n = y[3 * m + n]
                il_n = il_bar0[n]
            elif mode == 1:
                vcd_n = y[3 * m + n]
                il_n = (vref / R2T[n]) * (vref / E[n])
            else:
                vcd_n = vref
                il_n = (vref / R2T[n]) * (vref / E[n])
            mu_n = 1.0 - (E[n] + ra[n] * (iL_n - il_n)) / vcd_n
            if mu_n < 0.0:
                mu_n = 0.0
            elif mu_n > 1.0:
                mu_n = 1.0
        else:
            mu_n = duty_const[n]
        if pwm_on == 1:
            carrier = (t * f_sw + phases[n]) % 1.0
            omu_n = 0.0 if carrier < mu_n else 1.0
        else:
            omu_n = 1.0 - mu_n

        vC_n = y[3 * n + 1]
        iT_n = y[3 * n + 2]
        iT_p = y[3 * ((n - 1) % m) + 2]
        vC_q = y[3 * ((n + 1) % m) + 1]
        out[3 * n] = (E[n] - omu_n * vC_n) / L[n]
        out[3 * n + 1] = (omu_n * iL_n - iT_n + iT_p - vC_n / R2T[n]) / C[n]
        out[3 * n + 2] = (vC_n - vC_q - R1T[n] * iT_n) / LT[n]

        if ctrl_on == 1:
            itd_n = y[4 * m + n]
            itd_p = y[4 * m + (n - 1) % m]
            if mode == 2:
                out[3 * m + n] = amp * omega * math.cos(omega * t)
                vcd_use = vref
                vcd_next = vref
            else:
                vcd_use = y[3 * m + n]
                vcd_next = y[3 * m + (n + 1) % m]
                out[3 * m + n] = ((1.0 - mu_n) * il_n - itd_n + itd_p
                                  - vcd_use / R2T[n]) / C[n]
            out[4 * m + n] = (vcd_use - vcd_next - R1T[n] * itd_n) / LT[n]


@njit(cache=True)
def rk4_drive(boundaries, dt, y, rec, L, C, E, R2T, LT, R1T,
              ctrl_on, ra, mode, vdc, amp, omega, il_bar0, duty_const,
              pwm_on, f_sw, phases):
    """Fixed-step RK4 over the output grid, recording at each boundary.

    Returns (fail_time, rows_recorded, steps).  fail_time is -1.0 on success;
    otherwise the state went non-finite at that time and ``rec`` holds
    ``rows_recorded`` valid rows.
    """
    dim = y.shape[0]
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    ytmp = np.empty(dim)
    rec[0] = y
    idx = 1
    t = 0.0
    steps = 0
    for b in boundaries:
        span = b - t
        n_sub = int(math.ceil(span / dt - 1e-9))
        if n_sub < 1:
            n_sub = 1
        h = span / n_sub
        for i in range(n_sub):
            ts = t + i * h
            rhs_eval(ts, y, k1, L, C, E, R2T, LT, R1T, ctrl_on, ra, mode,
                     vdc, amp, omega, il_bar0, duty_const, pwm_on, f_sw, phases)
            for j in range(dim):
                ytmp[j] = y[j] + (0.5 * h) * k1[j]
            rhs_eval(ts + 0.5 * h, ytmp, k2, L, C, E, R2T, LT, R1T, ctrl_on, ra,
                     mode, vdc, amp, omega, il_bar0, duty_const, pwm_on, f_sw, phases)
            for j in range(dim):
                ytmp[j] = y[j] + (0.5 * h) * k2[j]
            rhs_eval(ts + 0.5 * h, ytmp, k3, L, C, E, R2T, LT, R1T, ctrl_on, ra,
                     mode, vdc, amp, omega, il_bar0, duty_const, pwm_on, f_sw, phases)
            for j in range(dim):
                ytmp[j] = y[j] + h * k3[j]
            rhs_eval(ts + h, ytmp, k4, L, C, E, R2T, LT, R1T, ctrl_on, ra,
                     mode, vdc, amp, omega, il_bar0, duty_const, pwm_on, f_sw, phases)
            ok = True
            for j in range(dim):
                y[j] = y[j] + (h / 6.0) * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j])
                if not math.isfinite(y[j]):
                    ok = False
            steps += 1
            if not ok:
                return ts + h, idx, steps
        t = b
        rec[idx] = y
        idx += 1
    return -1.0, idx, steps
