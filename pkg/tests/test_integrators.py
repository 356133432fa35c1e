"""Integrator cores on problems with known solutions, plus failure modes."""

import math

import numpy as np
import pytest

from ringboost import IntegratorConfig, SimulationError
from ringboost.integrators import integrate


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(method="rk4")          # dt required
    with pytest.raises(ValueError):
        IntegratorConfig(t_end=-1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(output_dt=2.0, t_end=1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0.0)


def test_rk4_exponential_decay():
    cfg = IntegratorConfig(method="rk4", dt=1e-3, t_end=1.0, output_dt=0.1)
    res = integrate(lambda t, y: -2.0 * y, np.array([1.0]), cfg)
    assert res.times[-1] == 1.0
    assert res.states[-1, 0] == pytest.approx(math.exp(-2.0), rel=1e-10)


def test_rk45_oscillator_with_tight_tolerance():
    cfg = IntegratorConfig(method="rk45", rtol=1e-10, atol=1e-12, t_end=2.0,
                           output_dt=0.25, dt_max=0.25)
    res = integrate(lambda t, y: np.array([y[1], -y[0]]), np.array([1.0, 0.0]), cfg)
    assert res.states[-1, 0] == pytest.approx(math.cos(2.0), abs=1e-8)
    assert res.states[-1, 1] == pytest.approx(-math.sin(2.0), abs=1e-8)


def test_rk45_matches_scipy_reference(ring5, duty_bal):
    scipy = pytest.importorskip("scipy.integrate")
    from ringboost import averaged_derivative, simulate_averaged

    cfg = IntegratorConfig(method="rk45", rtol=1e-9, atol=1e-12, t_end=0.2,
                           output_dt=1e-3)
    traj = simulate_averaged(ring5, np.zeros(15), cfg, duty=duty_bal)
    sol = scipy.solve_ivp(lambda t, y: averaged_derivative(ring5, y, duty_bal),
                          (0.0, 0.2), np.zeros(15), method="RK45",
                          rtol=1e-10, atol=1e-13, dense_output=True)
    assert np.max(np.abs(traj.final_state - sol.sol(0.2))) < 1e-7


def test_rk4_lands_exactly_on_output_grid():
    cfg = IntegratorConfig(method="rk4", dt=3e-4, t_end=0.0105, output_dt=1e-3)
    res = integrate(lambda t, y: np.array([1.0]), np.array([0.0]), cfg)
    assert res.times[-1] == 0.0105
    assert np.allclose(np.diff(res.times)[:-1], 1e-3)
    assert res.states[-1, 0] == pytest.approx(0.0105, rel=1e-14)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_abort_carries_partial_solution():
    def rhs(t, y):
        return np.array([1.0 / (0.5 - t)])  # blows up at t = 0.5

    cfg = IntegratorConfig(method="rk4", dt=1e-3, t_end=1.0, output_dt=0.1)
    with pytest.raises(SimulationError) as einfo:
        integrate(rhs, np.array([0.0]), cfg)
    err = einfo.value
    assert 0.4 <= err.t <= 0.6
    assert err.partial_times is not None and err.partial_times[-1] <= 0.5


def test_step_underflow_reported():
    # tolerance unreachable above dt_min on a fast transient
    cfg = IntegratorConfig(method="rk45", rtol=1e-13, atol=1e-16, t_end=1.0,
                           output_dt=0.5, dt_min=1e-3, dt_max=1e-2)
    with pytest.raises(SimulationError, match="underflow"):
        integrate(lambda t, y: -1e4 * y, np.array([1.0]), cfg)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_rejections_are_logged():
    cfg = IntegratorConfig(method="rk45", rtol=1e-9, atol=1e-12, t_end=0.5,
                           output_dt=0.5, dt_max=0.5)
    res = integrate(lambda t, y: np.array([-50.0 * y[0] ** 3]), np.array([2.0]), cfg)
    assert res.n_rejected >= 1
    assert any("step_rejected" in e for e in res.events)
