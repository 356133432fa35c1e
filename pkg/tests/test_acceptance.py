"""Acceptance suite: one test per shipped criterion, one verdict line each.

Criteria:
  1. balanced open loop settles at the commanded operating point within 1 s
  2. closed-form steady state matches long-horizon simulation on random rings
  3. structural identities of the energy-form matrices (1000 draws)
  4. error energy decays inside the damping-injection exponential envelope
  5. the controller beats the open loop on settling time and peak voltage
  6. pinned-output analysis: locations, stability tags, root consistency
  7. unbalanced sources rebalance under control
  8. unbalanced loads drive transient line power toward the smallest load
  9. sinusoidal tracking improves under control
 10. integrator cross-validation: RK4 order, RK45 agreement, PWM averaging
"""

import time

import numpy as np
import pytest

from ringboost import (BUILTIN_SCENARIOS, ConverterParams, DampingConfig,
                       IntegratorConfig, LineParams, PwmConfig, RingParams,
                       ZeroDynConfig, assemble_pch, averaged_derivative,
                       decay_rate_bound, duty_from_voltage,
                       equilibria_current_output, mu_dot_current_output,
                       operating_point, phase_line, pwm_period_average,
                       simulate_averaged, simulate_switched, steady_state)
from ringboost.scenarios import (cross_validate_scenario, report_for,
                                 simulate_scenario)
from ringboost.sim import _reference_values_at

from conftest import IL_BAR_BAL


def verdict(num, text):
    print(f"[acceptance] criterion {num:2d}: PASS - {text}")


@pytest.fixture(scope="module")
def balanced_pbc():
    scenario = BUILTIN_SCENARIOS["balanced"]
    traj = simulate_scenario(scenario)
    return scenario, traj, report_for(scenario, traj)


@pytest.fixture(scope="module")
def balanced_open_loop():
    scenario = BUILTIN_SCENARIOS["balanced"].without_control()
    t0 = time.perf_counter()
    traj = simulate_scenario(scenario)
    elapsed = time.perf_counter() - t0
    return scenario, traj, report_for(scenario, traj), elapsed


def test_c01_balanced_open_loop_equilibrium(balanced_open_loop):
    _, traj, _, elapsed = balanced_open_loop
    assert traj.times[-1] == 1.0
    assert np.all(np.abs(traj.vC()[-1] - 40.0) <= 0.5)
    assert np.all(np.abs(traj.iT()[-1]) < 1e-3)
    assert np.all(np.abs(traj.iL()[-1] - IL_BAR_BAL) <= 0.01 * IL_BAR_BAL)
    assert elapsed < 10.0
    verdict(1, f"vC={traj.vC()[-1][0]:.4f} V, |iT|<{np.max(np.abs(traj.iT()[-1])):.1e} A, "
               f"iL={traj.iL()[-1][0]:.5f} A, runtime {elapsed:.2f} s")


def _draw_ring(rng, m):
    """Well-separated random ring: slots stay away from zero so per-slot
    relative error is meaningful, and the slowest mode stays under 0.4 s."""
    for _ in range(200):
        L = np.exp(rng.uniform(np.log(5e-3), np.log(0.1), m))
        C = np.exp(rng.uniform(np.log(2e-5), np.log(5e-4), m))
        E = rng.uniform(5.0, 30.0, m)
        R2T = np.exp(rng.uniform(np.log(30.0), np.log(400.0), m))
        LT = np.exp(rng.uniform(np.log(5e-3), np.log(5e-2), m))
        R1T = np.exp(rng.uniform(np.log(5.0), np.log(80.0), m))
        U = rng.uniform(0.2, 0.75, m)
        params = RingParams(
            converters=tuple(ConverterParams(L=L[n], C=C[n], E=E[n], R2T=R2T[n])
                             for n in range(m)),
            lines=tuple(LineParams(LT=LT[n], R1T=R1T[n]) for n in range(m)),
        )
        eq = steady_state(params, U)
        vc_gaps = np.abs(eq.vC_bar - np.roll(eq.vC_bar, -1))
        if vc_gaps.min() < 1.5:
            continue
        if np.min(np.abs(eq.iL_bar)) < 0.05 or np.min(np.abs(eq.iT_bar)) < 0.01:
            continue
        M = assemble_pch(params, U)
        A = (M.J - M.R) / np.diag(M.D)[:, None]
        alpha = float(np.max(np.linalg.eigvals(A).real))
        if alpha >= -2.5:
            continue
        return params, U, eq, -1.0 / alpha
    raise RuntimeError("could not draw an acceptable ring")


def test_c02_closed_form_matches_long_horizon_simulation():
    rng = np.random.default_rng(20260809)
    worst = 0.0
    for i in range(50):
        m = (2, 3, 5, 8)[i % 4]
        params, U, eq, tau = _draw_ring(rng, m)
        t_end = min(16.0 * tau, 8.0)
        cfg = IntegratorConfig(method="rk45", rtol=1e-8, atol=1e-11,
                               t_end=t_end, output_dt=t_end / 20.0)
        traj = simulate_averaged(params, np.zeros(3 * m), cfg, duty=U)
        rel = float(np.max(np.abs(traj.final_state - eq.state) / np.abs(eq.state)))
        worst = max(worst, rel)
        assert rel <= 1e-3, f"draw {i} (m={m}): relative error {rel:.2e}"
    verdict(2, f"50 draws, worst per-slot relative error {worst:.2e} (limit 1e-3)")


def test_c03_structure_identities():
    # the 1e-12 agreement is relative above unit magnitude: derivative slots
    # scale like 1/C and reach 1e4 1/s, where 1e-12 absolute is below one ulp
    rng = np.random.default_rng(314159)
    worst_eje = 0.0
    worst_pch = 0.0
    for i in range(1000):
        m = (2, 3, 5, 8)[i % 4]
        L = rng.uniform(5e-3, 0.2, m)
        C = rng.uniform(1e-5, 1e-3, m)
        E = rng.uniform(3.0, 50.0, m)
        R2T = rng.uniform(10.0, 500.0, m)
        LT = rng.uniform(1e-3, 0.1, m)
        R1T = rng.uniform(1.0, 300.0, m)
        params = RingParams(
            converters=tuple(ConverterParams(L=L[n], C=C[n], E=E[n], R2T=R2T[n])
                             for n in range(m)),
            lines=tuple(LineParams(LT=LT[n], R1T=R1T[n]) for n in range(m)),
        )
        u = rng.uniform(0.0, 1.0, m)
        e = rng.uniform(-1.0, 1.0, 3 * m)
        x = rng.uniform(-1.0, 1.0, 3 * m) * np.tile([2.0, 50.0, 1.0], m)
        M = assemble_pch(params, u)
        assert np.all(M.J + M.J.T == 0.0)
        eje = abs(float(e @ (M.J @ e)))
        assert eje <= 1e-12
        pch = ((M.J - M.R) @ x + M.Evec) / np.diag(M.D)
        direct = averaged_derivative(params, x, u)
        gap = np.max(np.abs(pch - direct)
                     / np.maximum(1.0, np.maximum(np.abs(pch), np.abs(direct))))
        assert gap <= 1e-12
        worst_eje = max(worst_eje, eje)
        worst_pch = max(worst_pch, float(gap))
    verdict(3, f"1000 draws: J skew exact, |e'Je| <= {worst_eje:.1e}, "
               f"energy-form vs componentwise <= {worst_pch:.1e}")


def test_c04_error_energy_envelope(balanced_pbc, ring5):
    scenario, traj, _ = balanced_pbc
    assert np.all(np.isfinite(traj.hd_total))
    assert traj.hd_total[-1] < 1e-6

    k = decay_rate_bound(ring5, scenario.damping)
    i0 = int(np.searchsorted(traj.times, 0.010))
    assert traj.times[i0] == pytest.approx(0.010, abs=1e-12)
    envelope = traj.hd_total[i0] * np.exp(-k * (traj.times[i0:] - traj.times[i0]))
    assert np.all(traj.hd_total[i0:] <= 1.05 * envelope)

    ra = scenario.damping.as_array
    rate = -(np.sum(ra * traj.e[:, 0::3] ** 2, axis=1)
             + np.sum(traj.e[:, 1::3] ** 2 / ring5.R2T, axis=1)
             + np.sum(ring5.R1T * traj.e[:, 2::3] ** 2, axis=1))
    assert np.all(rate <= 0.0)
    verdict(4, f"Hd(1s)={traj.hd_total[-1]:.2e} J, envelope k={k:.2f} 1/s held "
               f"from 10 ms, dHd/dt <= 0 at all {len(traj.times)} samples")


def test_c05_control_improves_transient(balanced_pbc, balanced_open_loop):
    _, _, rep_pbc = balanced_pbc
    _, _, rep_ol, _ = balanced_open_loop
    assert rep_pbc.max_settling_time < rep_ol.max_settling_time
    assert rep_pbc.max_peak_vc <= rep_ol.max_peak_vc
    verdict(5, f"settling {rep_pbc.max_settling_time:.4f} s < {rep_ol.max_settling_time:.4f} s, "
               f"peak {rep_pbc.max_peak_vc:.2f} V <= {rep_ol.max_peak_vc:.2f} V")


def test_c06_zero_dynamics_dichotomy(ring5):
    eq = operating_point(ring5, 40.0)
    cfg = ZeroDynConfig.from_equilibrium(ring5, eq, 0)

    plv = phase_line(cfg, "voltage", 400)
    assert len(plv.equilibria) == 1
    assert plv.equilibria[0].mu == pytest.approx(0.625, abs=1e-9)
    assert plv.equilibria[0].stability == "unstable"

    pli = phase_line(cfg, "current", 400)
    assert len(pli.equilibria) == 1
    assert pli.equilibria[0].mu == pytest.approx(0.625, abs=1e-9)
    assert pli.equilibria[0].stability == "stable"

    closed = equilibria_current_output(cfg)[0]
    assert abs(closed.mu - pli.equilibria[0].mu) <= 1e-8

    low = ZeroDynConfig(L=cfg.L, C=cfg.C, E=cfg.E, R2=cfg.R2,
                        it_pinned=0.0, it_prev_pinned=0.0, il_pinned=0.05)
    assert low.R2 * low.il_pinned < low.E
    assert equilibria_current_output(low)[0].stability == "unstable"
    assert all(e.stability != "stable"
               for e in phase_line(low, "current", 400).equilibria)
    verdict(6, "voltage output unstable at mu=0.625, current output stable at "
               "mu=0.625, roots match bisection to 1e-8, stability flips when "
               "R2*iL < E")


def test_c07_unbalanced_sources_rebalance():
    scenario = BUILTIN_SCENARIOS["unbalanced-inputs"]
    traj = simulate_scenario(scenario)
    assert np.all(traj.hd[-1] < 1e-6)
    assert np.all(np.abs(traj.vC()[-1] - 40.0) <= 0.5)
    n20 = int(0.2 * len(traj.times))
    peak_it = float(np.max(np.abs(traj.iT()[:n20])))
    assert peak_it > 1e-3
    assert np.all(np.abs(traj.iT()[-1]) < 1e-3)
    verdict(7, f"per-converter Hd(1s) < 1e-6 J, vC -> 40 V, transient |iT| "
               f"peaked at {peak_it * 1e3:.1f} mA then died out")


def test_c08_unbalanced_loads_power_direction():
    notes = []
    for name in ("unbalanced-loads", "unbalanced-loads-fig8"):
        scenario = BUILTIN_SCENARIOS[name].without_control()
        traj = simulate_scenario(scenario)
        R2T = scenario.ring.R2T
        n20 = int(0.2 * len(traj.times))
        vc, it = traj.vC()[:n20], traj.iT()[:n20]
        # power crossing link n, oriented from converter n to n+1
        link_power = np.mean(vc * it, axis=0)
        inflow = np.mean(vc * (np.roll(it, 1, axis=1) - it), axis=0)
        mins = np.flatnonzero(R2T == R2T.min())
        for n in mins:
            assert inflow[n] > 0.0
            if R2T[(n - 1) % scenario.m] > R2T.min():
                assert link_power[(n - 1) % scenario.m] > 0.0   # flows into n
            if R2T[(n + 1) % scenario.m] > R2T.min():
                assert link_power[n] < 0.0                      # flows back into n
        if name.endswith("fig8"):
            assert mins.size == 1 and int(np.argmax(inflow)) == int(mins[0])
        spread = float(np.ptp(traj.vC()[-1]))
        notes.append(f"{name}: final vC spread {spread:.1e} V")
    # the averaged model's boost gain is load-independent, so unlike the
    # reported behaviour the end-state voltages coincide; reported, not asserted
    verdict(8, "transient line power flows toward the smallest load; " + "; ".join(notes))


def test_c09_sinusoid_tracking_improves():
    scenario = BUILTIN_SCENARIOS["sinusoid"]
    pbc = simulate_scenario(scenario)
    ol = simulate_scenario(scenario.without_control())
    window = pbc.times >= 1.0 - 5.0 / 60.0

    def rms(traj):
        target = _reference_values_at(scenario.reference, traj.times, scenario.m)
        return float(np.sqrt(np.mean((traj.vC()[window] - target[window]) ** 2)))

    rms_pbc, rms_ol = rms(pbc), rms(ol)
    assert rms_pbc < rms_ol
    peak_pbc, peak_ol = float(pbc.vC().max()), float(ol.vC().max())
    assert peak_pbc < peak_ol
    verdict(9, f"RMS over last 5 cycles {rms_pbc:.3f} V < {rms_ol:.3f} V, "
               f"peak {peak_pbc:.2f} V < {peak_ol:.2f} V")


def test_c10_integrator_validation(ring5, duty_bal):
    # RK4 order on the balanced scenario; dt values divide the 1e-4 cadence
    cv = cross_validate_scenario(BUILTIN_SCENARIOS["balanced"], [1e-4, 5e-5, 2.5e-5])
    assert all(3.5 <= o <= 4.5 for o in cv.orders), cv.orders

    devs = {}
    for name, scenario in BUILTIN_SCENARIOS.items():
        fine = cross_validate_scenario(scenario, [5e-6])
        devs[name] = fine.entries[0][1]
        assert devs[name] < 1e-4, f"{name}: {devs[name]:.2e}"

    # switched PWM at 20 kHz against the averaged model, settled window
    f_sw = 20e3
    cfg = IntegratorConfig(method="rk4", dt=1.0 / (50 * f_sw), t_end=0.3,
                           output_dt=1.0 / (50 * f_sw))
    sw = simulate_switched(ring5, np.zeros(15), cfg, PwmConfig(f_sw=f_sw), duty=duty_bal)
    av = simulate_averaged(ring5, np.zeros(15), cfg, duty=duty_bal)
    mean_vc = pwm_period_average(sw.times, sw.vC(), 1.0 / f_sw)
    tail = sw.times >= 0.25
    pwm_err = float(np.max(np.abs(mean_vc[tail] - av.vC()[tail]))) / 40.0
    assert pwm_err < 0.01

    # averaging consistency: finer switching tracks the averaged model better;
    # steps aligned with the 0.625 duty edge so grid quantization cancels
    def settled_error(f):
        c = IntegratorConfig(method="rk4", dt=1.0 / (80 * f), t_end=0.3,
                             output_dt=1.0 / (80 * f))
        s = simulate_switched(ring5, np.zeros(15), c, PwmConfig(f_sw=f), duty=duty_bal)
        a = simulate_averaged(ring5, np.zeros(15), c, duty=duty_bal)
        fs = pwm_period_average(s.times, s.vC(), 1.0 / f)
        sel = s.times >= 0.25
        return float(np.max(np.abs(fs[sel] - a.vC()[sel])))

    err10, err40 = settled_error(10e3), settled_error(40e3)
    assert err40 < err10
    verdict(10, f"RK4 orders {['%.2f' % o for o in cv.orders]}, max RK4-RK45 "
                f"deviation {max(devs.values()):.1e} (limit 1e-4), 20 kHz PWM "
                f"within {100 * pwm_err:.2f}% of averaged, 40 kHz error "
                f"{err40:.1e} < 10 kHz error {err10:.1e}")
