import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mstat.baselines import (SingularCovariance, calibrate_offline_threshold,
                             calibrate_online_threshold, first_crossing, glr_offline, glr_scan,
                             hotelling_offline, hotelling_online, hotelling_scan, shewhart_scan)


def random_affine(rng, d):
    while True:
        A = rng.normal(size=(d, d))
        if np.linalg.cond(A) < 50:
            return A, rng.normal(size=d) * 3


def test_scan_matches_pointwise(rng):
    data = rng.normal(size=(40, 3))
    s = hotelling_scan(data)
    for k in (1, 7, 20, 39):
        assert s.series[k - 1] == pytest.approx(hotelling_offline(data, k), rel=1e-9)
    assert s.max == s.series.max() and s.series[s.argmax - 1] == s.max


def test_equal_halves_give_zero(rng):
    half = rng.normal(size=(10, 2))
    data = np.vstack([half, half[::-1]])
    assert hotelling_offline(data, 10) == pytest.approx(0.0, abs=1e-20)


def test_shewhart_is_scalar_t_squared(rng):
    x = rng.normal(size=30)
    k = 12
    a, b = x[:k], x[k:]
    s2 = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / (30 - 2)
    t = (a.mean() - b.mean()) / np.sqrt(s2 * (1 / k + 1 / (30 - k)))
    assert shewhart_scan(x).series[k - 1] == pytest.approx(t * t, rel=1e-10)
    with pytest.raises(ValueError):
        shewhart_scan(rng.normal(size=(30, 2)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_hotelling_affine_invariant(seed, d):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(30, d))
    A, c = random_affine(rng, d)
    a = hotelling_scan(data).series
    b = hotelling_scan(data @ A.T + c).series
    assert np.allclose(a, b, rtol=1e-8, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_glr_linear_invariant(seed, d):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(40, d))
    A, c = random_affine(rng, d)
    a, b = glr_scan(data), glr_scan(data @ A.T + c)
    assert np.allclose(a.series, b.series, rtol=1e-8, atol=1e-8)


def test_glr_range_and_pointwise(rng):
    data = rng.normal(size=(30, 3))
    s = glr_scan(data)
    assert s.index[0] == 5 and s.index[-1] == 25
    assert s.series[3] == pytest.approx(glr_offline(data, int(s.index[3])), rel=1e-9, abs=1e-9)
    assert np.all(np.isfinite(s.series)) and np.all(s.series >= -1e-9)
    with pytest.raises(SingularCovariance):
        glr_offline(data, 3)


def test_glr_skips_degenerate_splits(rng):
    data = rng.normal(size=(30, 2))
    data[:6] = data[0]  # the first segments have no spread
    s = glr_scan(data)
    assert s.skipped and s.index[0] > s.skipped[-1] - 1


def test_singular_covariance(rng):
    x = rng.normal(size=(20, 1))
    with pytest.raises(SingularCovariance):
        hotelling_scan(np.hstack([x, 2 * x]))
    with pytest.raises(SingularCovariance):
        hotelling_scan(rng.normal(size=(5, 4)))
    with pytest.raises(SingularCovariance):
        hotelling_online(x, 5, [0.0, 0.0], np.ones((2, 2)))


def test_online_hotelling(rng):
    mu, S = np.array([1.0, -1.0]), np.array([[2.0, 0.3], [0.3, 1.0]])
    assert np.all(hotelling_online(np.tile(mu, (30, 1)), 5, mu, S) == 0)
    x = rng.normal(size=(25, 2))
    t = hotelling_online(x, 5, mu, S)
    m = x[3:8].mean(axis=0) - mu
    assert len(t) == 21 and t[3] == pytest.approx(5 * m @ np.linalg.solve(S, m), rel=1e-12)
    assert hotelling_online(x[:3], 5, mu, S).size == 0


def test_first_crossing():
    assert first_crossing([0.1, 0.5, 2.0, 3.0], 1.0) == 3
    assert first_crossing([0.1, 0.5, 2.0], 1.0, offset=9) == 12
    assert first_crossing([0.1], 1.0) is None


def test_offline_calibration(rng):
    with pytest.raises(ValueError):
        calibrate_offline_threshold(lambda r: r.normal(), 0.5, 50)
    med = calibrate_offline_threshold(lambda r: r.normal(), 0.5, 4001, seed=3)
    assert abs(med) < 0.06
    # more trials, tighter quantile
    spread = lambda n: np.std([calibrate_offline_threshold(lambda r: r.normal(), 0.05, n, seed=s)  # noqa: E731
                               for s in range(20)])
    assert spread(2000) < spread(200)


def test_online_calibration_geometric():
    # paths of iid uniforms: first exceedance of b is geometric with mean 1/(1-b)
    b = calibrate_online_threshold(lambda r: r.uniform(size=2000), 50.0, 400, seed=1)
    assert b == pytest.approx(1 - 1 / 50, abs=0.006)


def test_null_false_alarm_rate_at_calibrated_threshold():
    null_max = lambda r: glr_scan(r.normal(size=(60, 2))).max  # noqa: E731
    b = calibrate_offline_threshold(null_max, 0.1, 400, seed=1)
    rate = np.mean([null_max(np.random.default_rng([9, s])) > b for s in range(400)])
    assert 0.06 <= rate <= 0.14
