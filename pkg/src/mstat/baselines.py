"""Parametric comparison statistics: Hotelling T^2, GLR and their scans."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .kernels import as_samples

log = logging.getLogger(__name__)

MAX_COND = 1e12


class SingularCovariance(np.linalg.LinAlgError):
    pass


@dataclass
class BaselineScan:
    index: np.ndarray
    series: np.ndarray
    max: float
    argmax: int
    threshold: float | None = None
    alarm: bool | None = None
    skipped: list = field(default_factory=list)


def _check_cov(S: np.ndarray) -> None:
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > MAX_COND:
        raise SingularCovariance(f"covariance condition number {cond:.3g} exceeds {MAX_COND:g}")


def _spd_quad(S: np.ndarray, v: np.ndarray) -> float:
    """``v^T S^{-1} v`` through a Cholesky factorization."""
    _check_cov(S)
    try:
        c = linalg.cho_factor(S, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        raise SingularCovariance(str(e)) from e
    return float(v @ linalg.cho_solve(c, v, check_finite=False))


def _segment_stats(data: np.ndarray):
    """Prefix sums for segment means and scatter matrices."""
    n, d = data.shape
    c1 = np.vstack([np.zeros(d), np.cumsum(data, axis=0)])
    outer = np.einsum("ni,nj->nij", data, data)
    c2 = np.concatenate([np.zeros((1, d, d)), np.cumsum(outer, axis=0)])
    return c1, c2


def _scatter(s1: np.ndarray, s2: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Centered scatter ``sum (x - xbar)(x - xbar)^T`` from raw sums over ``m`` points."""
    mean = s1 / m[..., None]
    return s2 - m[..., None, None] * np.einsum("...i,...j->...ij", mean, mean)


def hotelling_offline(data, k: int) -> float:
    """Two-sample Hotelling ``T^2`` for a split after the first ``k`` samples."""
    data = as_samples(data)
    n, d = data.shape
    if not 1 <= k <= n - 1:
        raise ValueError(f"split k={k} outside [1, {n - 1}]")
    if n - 2 <= d:
        raise SingularCovariance(f"pooled covariance needs n - 2 > d (n={n}, d={d})")
    left, right = data[:k], data[k:]
    ml, mr = left.mean(axis=0), right.mean(axis=0)
    S = ((left - ml).T @ (left - ml) + (right - mr).T @ (right - mr)) / (n - 2)
    diff = ml - mr
    return k * (n - k) / n * _spd_quad(S, diff)


def hotelling_scan(data) -> BaselineScan:
    """``T^2(k)`` for every split ``k = 1..n-1`` (batched)."""
    data = as_samples(data)
    n, d = data.shape
    if n - 2 <= d:
        raise SingularCovariance(f"pooled covariance needs n - 2 > d (n={n}, d={d})")
    c1, c2 = _segment_stats(data)
    ks = np.arange(1, n)
    sl, ql = c1[ks], c2[ks]
    sr, qr = c1[n] - sl, c2[n] - ql
    kl, kr = ks.astype(float), (n - ks).astype(float)
    S = (_scatter(sl, ql, kl) + _scatter(sr, qr, kr)) / (n - 2)
    diff = sl / kl[:, None] - sr / kr[:, None]
    cond = np.linalg.cond(S)
    if np.any(~np.isfinite(cond) | (cond > MAX_COND)):
        raise SingularCovariance("pooled covariance ill-conditioned for some split")
    sol = np.linalg.solve(S, diff[..., None])[..., 0]
    t2 = kl * kr / n * np.einsum("ki,ki->k", diff, sol)
    j = int(np.argmax(t2))
    return BaselineScan(ks, t2, float(t2[j]), int(ks[j]))


def shewhart_scan(data) -> BaselineScan:
    """One-dimensional special case of :func:`hotelling_scan`."""
    data = as_samples(data)
    if data.shape[1] != 1:
        raise ValueError("the Shewhart chart is defined for scalar data")
    return hotelling_scan(data)


def _logdet(S: np.ndarray) -> np.ndarray:
    sign, ld = np.linalg.slogdet(S)
    return np.where(sign > 0, ld, np.nan)


def glr_offline(data, k: int) -> float:
    data = as_samples(data)
    n, d = data.shape
    if not (k > d and n - k > d):
        raise SingularCovariance(f"segment covariances singular for k={k}, n={n}, d={d}")
    left, right = data[:k], data[k:]
    cov = lambda a: np.cov(a, rowvar=False, bias=True).reshape(d, d)  # noqa: E731
    out = n * _logdet(cov(data)) - k * _logdet(cov(left)) - (n - k) * _logdet(cov(right))
    if not np.isfinite(out):
        raise SingularCovariance(f"non-positive-definite covariance at k={k}")
    return float(out)


def glr_scan(data) -> BaselineScan:
    """GLR over ``k`` in ``[d + 2, n - d - 2]``; degenerate splits are skipped and listed."""
    data = as_samples(data)
    n, d = data.shape
    ks = np.arange(d + 2, n - d - 1)
    if ks.size == 0:
        raise ValueError(f"no feasible split for n={n}, d={d}")
    c1, c2 = _segment_stats(data)
    full = _logdet(_scatter(c1[n], c2[n], np.array(float(n))) / n)
    sl, ql = c1[ks], c2[ks]
    sr, qr = c1[n] - sl, c2[n] - ql
    kl, kr = ks.astype(float), (n - ks).astype(float)
    ll = _logdet(_scatter(sl, ql, kl) / kl[:, None, None])
    lr = _logdet(_scatter(sr, qr, kr) / kr[:, None, None])
    stat = n * full - kl * ll - kr * lr
    ok = np.isfinite(stat)
    skipped = ks[~ok].tolist()
    if skipped:
        log.info("GLR skipped %d degenerate splits", len(skipped))
    if not ok.any():
        raise SingularCovariance("every GLR split is degenerate")
    ks, stat = ks[ok], stat[ok]
    j = int(np.argmax(stat))
    return BaselineScan(ks, stat, float(stat[j]), int(ks[j]), skipped=skipped)


def hotelling_online(stream, B0: int, mu_hat, sigma_hat) -> np.ndarray:
    """Sliding-window ``B0 * (xbar_t - mu)^T Sigma^{-1} (xbar_t - mu)`` for ``t = B0..n``."""
    stream = as_samples(stream)
    mu = np.asarray(mu_hat, dtype=np.float64).reshape(-1)
    S = np.atleast_2d(np.asarray(sigma_hat, dtype=np.float64))
    _check_cov(S)
    try:
        c = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as e:
        raise SingularCovariance(str(e)) from e
    if stream.shape[0] < B0:
        return np.empty(0)
    cs = np.vstack([np.zeros(stream.shape[1]), np.cumsum(stream, axis=0)])
    means = (cs[B0:] - cs[:-B0]) / B0
    diff = means - mu
    sol = linalg.cho_solve(c, diff.T).T
    return B0 * np.einsum("ti,ti->t", diff, sol)


def first_crossing(series, b: float, offset: int = 0) -> int | None:
    """1-based time of the first entry above ``b`` (``offset`` added), or None."""
    hit = np.flatnonzero(np.asarray(series) > b)
    return int(hit[0]) + 1 + offset if hit.size else None


def calibrate_offline_threshold(null_max: Callable[[np.random.Generator], float], alpha: float,
                                trials: int, seed: int = 0) -> float:
    """Empirical ``(1 - alpha)`` quantile of a simulated null maximum statistic."""
    if trials < 100:
        raise ValueError("calibration needs at least 100 trials")
    seqs = np.random.SeedSequence(seed).spawn(trials)
    vals = np.array([null_max(np.random.default_rng(s)) for s in seqs])
    return float(np.quantile(vals, 1.0 - alpha))


def calibrate_online_threshold(null_series: Callable[[np.random.Generator], np.ndarray],
                               arl_target: float, trials: int, seed: int = 0,
                               offset: int = 0) -> float:
    """Threshold whose simulated mean run length matches ``arl_target``.

    ``null_series(rng)`` returns one null statistic path; run lengths of paths
    that never cross are censored at the path length, so paths should be long
    compared with the target.
    """
    if trials < 100:
        raise ValueError("calibration needs at least 100 trials")
    seqs = np.random.SeedSequence(seed).spawn(trials)
    paths = [np.asarray(null_series(np.random.default_rng(s))) for s in seqs]
    # running maxima turn "first time above b" into a sorted search
    runmax = [np.maximum.accumulate(p) for p in paths]

    def mean_rl(b):
        tot = 0.0
        for rm in runmax:
            j = np.searchsorted(rm, b, side="right")
            tot += j + 1 + offset if j < rm.size else rm.size + offset
        return tot / len(runmax)

    lo = min(float(rm[0]) for rm in runmax)
    hi = max(float(rm[-1]) for rm in runmax)
    if mean_rl(hi) < arl_target:
        log.warning("null paths too short to reach ARL %.0f; threshold is censored", arl_target)
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_rl(mid) < arl_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9 * max(1.0, abs(hi)):
            break
    return hi
