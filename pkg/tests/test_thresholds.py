import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mstat.thresholds import (ThresholdError, ThresholdSpec, nu, offline_sl, offline_sl_corrected,
                              offline_threshold_spec, online_arl, online_arl_corrected,
                              online_threshold_spec, solve_offline_threshold,
                              solve_online_threshold, solve_theta)

TABLE = [((0.10, 10), 2.40), ((0.05, 10), 2.72), ((0.01, 10), 3.30),
         ((0.10, 20), 2.60), ((0.05, 20), 2.90), ((0.01, 20), 3.46),
         ((0.10, 50), 2.80), ((0.05, 50), 3.08), ((0.01, 50), 3.62)]


def nu_mp(u):
    """Same closed form evaluated with mpmath's normal CDF at 40 digits."""
    mpmath.mp.dps = 40
    u = mpmath.mpf(u)
    ncdf = lambda x: mpmath.ncdf(x)  # noqa: E731
    npdf = lambda x: mpmath.npdf(x)  # noqa: E731
    return (2 / u) * (ncdf(u / 2) - mpmath.mpf(1) / 2) / ((u / 2) * ncdf(u / 2) + npdf(u / 2))


@pytest.mark.parametrize("u", [1e-3, 0.5, 1.0, 2.0, 4.0, 6.0])
def test_nu_against_high_precision(u):
    assert nu(u) == pytest.approx(float(nu_mp(u)), rel=1e-13)


def test_nu_small_argument_limit():
    assert nu(1e-10) == pytest.approx(1.0, abs=1e-9)


def test_nu_decreasing_on_grid():
    v = np.array([nu(u) for u in np.linspace(1e-4, 6, 4000)])
    assert np.all(np.diff(v) < 0)


@pytest.mark.parametrize("u", [0.0, -1.0])
def test_nu_domain(u):
    with pytest.raises(ValueError):
        nu(u)


@pytest.mark.parametrize("b,B_max,alpha", [(2.72, 10, 0.05), (2.90, 20, 0.05), (3.62, 50, 0.01)])
def test_sl_at_tabulated_thresholds(b, B_max, alpha):
    assert offline_sl(b, B_max) == pytest.approx(alpha, rel=0.05)


@pytest.mark.parametrize("case,b", TABLE)
def test_offline_threshold_table(case, b):
    assert solve_offline_threshold(*case) == pytest.approx(b, abs=0.01)


@pytest.mark.parametrize("B_max", [10, 20, 50, 200])
def test_sl_decreasing_right_of_peak(B_max):
    # b^2 exp(-b^2/2) rises up to b ~ 1.3, so monotonicity is only claimed beyond it
    s = np.array([offline_sl(b, B_max) for b in np.linspace(1.5, 10, 2000)])
    assert np.all(np.diff(s) < 0)


@pytest.mark.parametrize("B0", [10, 20, 50])
def test_arl_increasing_right_of_trough(B0):
    a = np.array([online_arl(b, B0) for b in np.linspace(1.5, 6, 2000)])
    assert np.all(np.diff(a) > 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 0.2), st.sampled_from([5, 10, 20, 50, 100]))
def test_offline_round_trip(alpha, B_max):
    b = solve_offline_threshold(alpha, B_max)
    assert offline_sl(b, B_max) == pytest.approx(alpha, rel=1e-10)


def test_online_round_trip():
    b = solve_online_threshold(5000, 20)
    assert online_arl(b, 20) == pytest.approx(5000, abs=1)


def test_online_threshold_grows_slowly():
    # squaring the target should multiply b by about sqrt(2)
    assert solve_online_threshold(1e8, 50) / solve_online_threshold(1e4, 50) < 1.6


def test_arl_below_formula_minimum_is_rejected():
    # the approximation never drops below ~107 at B0 = 50
    with pytest.raises(ThresholdError):
        solve_online_threshold(1e2, 50)


def test_online_threshold_depends_only_on_window_and_target():
    assert solve_online_threshold(1000, 50) == solve_online_threshold(1000.0, 50)


def test_unreachable_target():
    with pytest.raises(ThresholdError):
        solve_offline_threshold(0.99, 10)
    with pytest.raises(ValueError):
        solve_offline_threshold(1.5, 10)
    with pytest.raises(ValueError):
        solve_online_threshold(0.5, 10)


def test_theta_cases():
    assert solve_theta(3.0, 0.0) == 3.0
    t = solve_theta(3.0, 0.2)
    assert t == pytest.approx((math.sqrt(2.2) - 1) / 0.2, abs=1e-12)
    assert t + 0.1 * t * t == pytest.approx(3.0, abs=1e-10)
    assert solve_theta(3.0, 1e-12) == pytest.approx(3.0, abs=1e-9)
    with pytest.raises(ValueError):
        solve_theta(3.0, -1.0)


@given(st.floats(0.5, 8), st.floats(-0.1, 5))
def test_theta_residual(b, kappa):
    if 1 + 2 * kappa * b < 0:
        return
    t = solve_theta(b, kappa)
    assert t + kappa * t * t / 2 == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("b", [2.0, 3.0, 4.5])
def test_zero_skew_corrections_are_exact(b):
    k0 = {B: 0.0 for B in range(2, 31)}
    assert offline_sl_corrected(b, 30, k0) == pytest.approx(offline_sl(b, 30), rel=1e-12)
    assert online_arl_corrected(b, 25, 0.0) == online_arl(b, 25)


def test_positive_skew_raises_thresholds():
    kap = {B: 0.5 for B in range(2, 21)}
    assert solve_offline_threshold(0.01, 20, kap) > solve_offline_threshold(0.01, 20)
    assert solve_online_threshold(5000, 20, 0.3) > solve_online_threshold(5000, 20)


def test_infeasible_tilt_falls_back():
    # strongly negative skewness has no real tilt; the Gaussian term is used instead
    assert online_arl_corrected(3.0, 20, -1.0) == pytest.approx(online_arl(3.0, 20), rel=1e-12)


def test_threshold_spec_json_round_trip():
    ts = offline_threshold_spec(0.05, 12, {B: 0.1 for B in range(2, 13)})
    back = ThresholdSpec.from_dict(__import__("json").loads(ts.to_json()))
    assert back == ts and ts.corrected and ts.theta_by_B[5] < ts.b
    assert online_threshold_spec(1000, 20).target == "arl"
