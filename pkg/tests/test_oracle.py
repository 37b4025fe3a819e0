from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqlab.errors import DegenerateParameters, DomainError, InvalidArgument
from freqlab.oracle import (
    Effectiveness,
    SimplifiedSystem,
    Sinusoid,
    analytic_moments,
    inertia_effectiveness_threshold,
    mean_delta_omega,
    stationary_sigma,
    var_delta_omega,
    var_zero_damping,
    zero_damping_slope,
)
from freqlab.rng import NoiseStream
from freqlab.sde import OuParams, covariance_at, propagate_covariance, simulate_ensemble
from reference import two_state_mean_ode


def system(h=3.0, d_l=2.0, alpha=0.5, b=1.0, drive=None):
    return SimplifiedSystem(h, d_l, OuParams(alpha=alpha, b=b), drive)


# -- stationary sigma ---------------------------------------------------------------


def test_sigma_reference_value():
    assert stationary_sigma(system()) == pytest.approx(1 / math.sqrt(10), rel=1e-15)
    assert round(stationary_sigma(system()), 7) == 0.3162278


def test_sigma_noise_free_and_linear_in_b():
    assert stationary_sigma(system(b=0.0)) == 0.0
    assert stationary_sigma(system(b=2.6)) == 2 * stationary_sigma(system(b=1.3))


def test_sigma_zero_damping_redirects():
    with pytest.raises(DomainError, match="var_zero_damping"):
        stationary_sigma(system(d_l=0.0))


def test_sigma_strictly_decreasing_grid():
    grid = [0.1, 0.5, 1.0, 3.0, 10.0]
    for h in grid:
        for d in grid:
            for a in grid:
                s = stationary_sigma(system(h, d, a))
                assert stationary_sigma(system(h * 1.1, d, a)) < s
                assert stationary_sigma(system(h, d * 1.1, a)) < s
                assert stationary_sigma(system(h, d, a * 1.1)) < s


# -- mean ---------------------------------------------------------------------------


def test_mean_zero_cases():
    sys = system(drive=Sinusoid(0.01, 0.1))
    assert mean_delta_omega(0.0, sys) == pytest.approx(0.0, abs=1e-18)
    assert np.all(mean_delta_omega(np.linspace(0, 100, 11), system(drive=Sinusoid(0.0, 0.1))) == 0)
    assert np.all(mean_delta_omega(np.linspace(0, 100, 11), system()) == 0)


def test_mean_matches_ode_daily_drive():
    sys = system(drive=Sinusoid(0.01, 2 * math.pi / 86400))
    t = np.linspace(0.0, 2e5, 2001)
    ref = two_state_mean_ode(3.0, 2.0, 0.5, 0.01, 2 * math.pi / 86400, t)
    err = np.abs(mean_delta_omega(t, sys) - ref).max() / np.abs(ref).max()
    assert err < 1e-6


@pytest.mark.parametrize("h,d,a,psi", [(3.0, 2.0, 0.5, 0.3), (0.5, 0.1, 2.0, 1.7), (10.0, 5.0, 0.05, 0.01)])
def test_mean_matches_ode_fast_drives(h, d, a, psi):
    sys = system(h, d, a, drive=Sinusoid(0.02, psi))
    t = np.linspace(0.0, 400.0, 801)
    ref = two_state_mean_ode(h, d, a, 0.02, psi, t)
    err = np.abs(mean_delta_omega(t, sys) - ref).max() / np.abs(ref).max()
    assert err < 1e-6


def test_mean_asymptotic_form():
    sys = system(drive=Sinusoid(0.01, 0.2))
    t = np.array([1000.0, 1234.5])
    assert np.allclose(mean_delta_omega(t, sys), mean_delta_omega(t, sys, asymptotic=True), atol=1e-15)
    m = analytic_moments(sys)
    assert mean_delta_omega(0.0, sys, asymptotic=True) == pytest.approx(m.rho_c)


def test_mean_degenerate_raises():
    with pytest.raises(DegenerateParameters):
        mean_delta_omega(1.0, system(h=2.0, d_l=2.0, alpha=0.5, drive=Sinusoid(0.01, 0.1)))


# -- variance -----------------------------------------------------------------------


def test_var_initial_and_limit():
    sys = system()
    assert abs(var_delta_omega(0.0, sys)) <= 1e-12
    assert var_delta_omega(100 / 0.5, sys) == pytest.approx(0.1, abs=1e-6)


def test_var_small_t_no_cancellation():
    sys = system()
    t = 1e-6
    # leading term b^2 t^3 / (12 H^2) (integrated OU noise, double integration)
    assert var_delta_omega(t, sys) == pytest.approx(t**3 / (12 * 9), rel=1e-4)


def test_var_matches_lyapunov_reference_times():
    t, w = propagate_covariance(system().to_linear_sde(), np.zeros((2, 2)), 20.0, 0.001)
    for tk in (1.0, 5.0, 20.0):
        k = int(round(tk / 0.001))
        assert var_delta_omega(tk, system()) == pytest.approx(w[k, 0, 0], rel=1e-6)


def test_var_random_parameter_sets():
    rng = np.random.default_rng(50)
    count = 0
    while count < 50:
        h, d, a, b = rng.uniform(0.5, 10), rng.uniform(0.05, 5), rng.uniform(0.05, 2), rng.uniform(0.1, 3)
        if abs(2 * h * a - d) < 0.05 * max(2 * h * a, d):
            continue
        sys = system(h, d, a, b)
        dt = 0.01 / max(d / (2 * h), a)
        horizon = dt * math.ceil(5.0 / min(d / (2 * h), a) / dt)
        tt, w = propagate_covariance(sys.to_linear_sde(), np.zeros((2, 2)), horizon, dt)
        idx = np.linspace(len(tt) // 10, len(tt) - 1, 10).astype(int)
        closed = var_delta_omega(tt[idx], sys)
        assert np.allclose(closed, w[idx, 0, 0], rtol=1e-6, atol=0)
        count += 1


def test_var_drive_invariant():
    t = np.linspace(0, 30, 31)
    v0 = var_delta_omega(t, system())
    for drive in (Sinusoid(0.01, 0.1), Sinusoid(5.0, 3.0)):
        assert np.array_equal(var_delta_omega(t, system(drive=drive)), v0)


def test_var_limit_to_zero_damping():
    t = 50.0
    target = var_zero_damping(t, system(d_l=0.0))
    errs = [abs(var_delta_omega(t, system(d_l=d)) - target) for d in (1e-2, 1e-3, 1e-4)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3 * target


def test_var_near_degenerate_fallback():
    sys = system(h=2.0, d_l=2.0 * (1 + 1e-9), alpha=0.5)
    t = np.array([0.5, 3.0, 40.0])
    exact = [covariance_at(sys.to_linear_sde(), tk)[0, 0] for tk in t]
    assert np.allclose(var_delta_omega(t, sys), exact, rtol=1e-12)
    # continuity across the switch
    just_outside = system(h=2.0, d_l=2.0 * (1 + 1e-4), alpha=0.5)
    assert np.allclose(var_delta_omega(t, just_outside), exact, rtol=1e-3)
    with pytest.raises(DegenerateParameters):
        analytic_moments(sys)


def test_var_rejects_zero_damping_and_negative_t():
    with pytest.raises(DomainError):
        var_delta_omega(1.0, system(d_l=0.0))
    with pytest.raises(InvalidArgument):
        var_delta_omega(-1.0, system())


# -- zero damping ---------------------------------------------------------------------


def test_zero_damping_examples():
    sys = system(d_l=0.0)
    assert var_zero_damping(0.0, sys) == 0.0
    assert zero_damping_slope(sys) == pytest.approx(1 / 9, rel=1e-15)
    v = var_zero_damping(np.array([1000.0, 1001.0]), sys)
    assert v[1] - v[0] == pytest.approx(1 / 9, rel=1e-12)
    with pytest.raises(InvalidArgument):
        var_zero_damping(1.0, system())


def test_zero_damping_series_branch_continuous():
    sys = system(d_l=0.0)
    lo = var_zero_damping(0.2 * (1 - 1e-9), sys)
    hi = var_zero_damping(0.2 * (1 + 1e-9), sys)
    assert lo == pytest.approx(hi, rel=1e-7)
    assert var_zero_damping(1e-4, sys) == pytest.approx(1e-12 / 108, rel=1e-3)


def test_zero_damping_monte_carlo_t200():
    sys = system(d_l=0.0)
    out = simulate_ensemble(sys.to_linear_sde(), [200.0], 0.1, NoiseStream(314), 10_000)
    assert abs(out[0, :, 0].var() / var_zero_damping(200.0, sys) - 1) < 0.05


# -- effectiveness threshold -------------------------------------------------------------


def test_threshold_examples():
    assert inertia_effectiveness_threshold(0.5, 2.0) is Effectiveness.ALWAYS
    # (1 - 2 * 0.5 * 0.01) / (4 * 0.25 * 0.1) = 0.99 / 0.1
    assert inertia_effectiveness_threshold(0.5, 0.1) == pytest.approx(9.9, rel=1e-14)
    values = [inertia_effectiveness_threshold(0.5, d) for d in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert values[-1] > 1e4
    with pytest.raises(DomainError):
        inertia_effectiveness_threshold(0.5, 0.0)


# -- properties ----------------------------------------------------------------------------


params = st.tuples(
    st.floats(0.2, 20.0), st.floats(0.01, 10.0), st.floats(0.01, 5.0), st.floats(0.0, 5.0)
)


@given(params, st.floats(0.0, 1e3))
@settings(max_examples=200, deadline=None)
def test_var_bounded_by_limit(p, t):
    h, d, a, b = p
    sys = system(h, d, a, b)
    if abs(2 * h * a - d) < 1e-3 * max(2 * h * a, d):
        return
    v = var_delta_omega(t, sys)
    s2 = stationary_sigma(sys) ** 2
    assert -1e-12 * max(s2, 1e-300) <= v <= s2 * (1 + 1e-9) + 1e-300


@given(params)
@settings(max_examples=100, deadline=None)
def test_var_monotone_in_time(p):
    h, d, a, b = p
    sys = system(h, d, a, b)
    if abs(2 * h * a - d) < 1e-3 * max(2 * h * a, d) or b == 0:
        return
    t = np.linspace(0.0, 10.0 / min(a, d / (2 * h)), 200)
    v = var_delta_omega(t, sys)
    assert np.all(np.diff(v) >= -1e-12 * v.max())
