"""Data generators and Monte-Carlo experiments for SL, ARL, power and detection delay.

All experiments derive one seed per trial from a master seed with
``numpy.random.SeedSequence.spawn``; results do not depend on how trials are
scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .baselines import (calibrate_offline_threshold, calibrate_online_threshold,
                        first_crossing, glr_scan, hotelling_online, hotelling_scan)
from .kernels import KernelSpec, median_bandwidth
from .moments import NullMoments, null_moments
from .offline import build_offline_blocks, scan
from .online import OnlineDetector
from .thresholds import solve_offline_threshold, solve_online_threshold

# --- generators -------------------------------------------------------------


def _vector(value, d: int) -> np.ndarray:
    v = np.asarray(value, dtype=np.float64)
    return np.full(d, float(v)) if v.ndim == 0 else v.reshape(d)


def _gaussian(rng, count, d=1, mean=0.0, var=1.0, **_):
    std = np.sqrt(_vector(var, d))
    if np.any(std < 0):
        raise ValueError("variances must be non-negative")
    return _vector(mean, d) + std * rng.standard_normal((count, d))


def _laplace(rng, count, d=1, mean=0.0, scale=1 / math.sqrt(2.0), **_):
    if scale <= 0:
        raise ValueError("Laplace scale must be positive")
    return _vector(mean, d) + rng.laplace(0.0, scale, size=(count, d))


def _exponential(rng, count, d=1, mean=1.0, **_):
    if mean <= 0:
        raise ValueError("exponential mean must be positive")
    return rng.exponential(mean, size=(count, d))


def _mixture(rng, count, d=1, weights=(0.3, 0.7), variances=(1.0, 0.1), **_):
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not math.isclose(w.sum(), 1.0):
        raise ValueError("mixture weights must be a probability vector")
    comp = rng.choice(len(w), size=count, p=w)
    std = np.sqrt(np.asarray(variances, dtype=float))[comp]
    return std[:, None] * rng.standard_normal((count, d))


def _slope(rng, count, d=1, rate=0.01, tau=0, support=None, support_size=2, start=1, **_):
    """Unit-variance Gaussian whose mean on ``support`` is ``rate * (i - tau)`` for ``i > tau``."""
    if support is None:
        support = rng.choice(d, size=support_size, replace=False)
    i = np.arange(start, start + count)
    ramp = rate * np.clip(i - tau, 0, None)
    mu = np.zeros((count, d))
    mu[:, np.asarray(support)] = ramp[:, None]
    return mu + rng.standard_normal((count, d))


def _erdos_renyi(rng, count, n_nodes=10, p=0.2, community=0, p_in=None, **_):
    """Flattened upper-triangular adjacency of G(n, p); optional denser community on the first nodes."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("edge probability must lie in [0, 1]")
    iu = np.triu_indices(n_nodes, k=1)
    probs = np.full(iu[0].size, p)
    if community:
        if p_in is None or not 0.0 <= p_in <= 1.0:
            raise ValueError("community needs p_in in [0, 1]")
        inside = (iu[0] < community) & (iu[1] < community)
        probs[inside] = p_in
    return (rng.random((count, probs.size)) < probs).astype(np.float64)


GENERATORS: dict[str, Callable] = {
    "gaussian": _gaussian,
    "laplace": _laplace,
    "exponential": _exponential,
    "gaussian_mixture": _mixture,
    "slope": _slope,
    "erdos_renyi": _erdos_renyi,
}


def generate(name: str, params: dict | None, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` samples from a registered generator; ``seed`` may be an int or a Generator."""
    try:
        fn = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; known: {sorted(GENERATORS)}") from None
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return fn(rng, count, **(params or {}))


@dataclass
class Dist:
    name: str
    params: dict = field(default_factory=dict)

    def sample(self, count, rng, **extra):
        return generate(self.name, {**self.params, **extra}, count, rng)


def _first_k(d, k, value, rest=1.0):
    v = [rest] * d
    v[:k] = [value] * k
    return v


# offline power cases: n = B_max = 200, change after tau = 100
OFFLINE_CASES: dict[int, tuple[Dist, Dist]] = {
    1: (Dist("gaussian", {"d": 20}), Dist("gaussian", {"d": 20, "mean": 0.1})),
    2: (Dist("gaussian", {"d": 20}), Dist("gaussian", {"d": 20, "mean": 0.2})),
    3: (Dist("gaussian", {"d": 20}), Dist("gaussian", {"d": 20, "var": _first_k(20, 1, 2.0)})),
    4: (Dist("gaussian", {"d": 20, "mean": 1.0}),
        Dist("gaussian", {"d": 20, "mean": 0.2, "var": _first_k(20, 1, 2.0)})),
    5: (Dist("gaussian", {"d": 20}), Dist("slope", {"d": 20, "rate": 0.02, "support_size": 2})),
    6: (Dist("gaussian", {"d": 1}), Dist("laplace", {"d": 1})),
}

# online detection-delay cases: change at the first monitored sample
ONLINE_CASES: dict[int, tuple[Dist, Dist]] = {
    1: (Dist("gaussian", {"d": 20}), Dist("gaussian", {"d": 20, "mean": 0.2})),
    2: (Dist("gaussian", {"d": 20}), Dist("gaussian", {"d": 20, "mean": 0.3})),
    3: (Dist("gaussian", {"d": 20}), Dist("gaussian", {"d": 20, "var": _first_k(20, 5, 2.0)})),
    4: (Dist("gaussian", {"d": 20}), Dist("gaussian", {"d": 20, "var": 2.0})),
    5: (Dist("gaussian", {"d": 20}), Dist("slope", {"d": 20, "rate": 0.01, "support_size": 2})),
    6: (Dist("gaussian", {"d": 20}), Dist("slope", {"d": 20, "rate": 0.02, "support_size": 2})),
    7: (Dist("gaussian", {"d": 20}), Dist("gaussian_mixture", {"d": 20})),
    8: (Dist("gaussian", {"d": 1}), Dist("laplace", {"d": 1})),
}

NULLS: dict[str, Dist] = {
    "gaussian": Dist("gaussian", {"d": 1}),
    "exponential": Dist("exponential", {"d": 1}),
    "laplace": Dist("laplace", {"d": 1}),
    "erdos_renyi": Dist("erdos_renyi", {"n_nodes": 10, "p": 0.2}),
}


# --- shared machinery -------------------------------------------------------


def trial_seeds(seed: int, trials: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(trials)


def map_trials(fn: Callable, seeds, workers: int = 1) -> list:
    """Evaluate ``fn(seed_seq)`` for every seed; order of results follows ``seeds``."""
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, seeds, chunksize=max(1, len(seeds) // (4 * workers))))
    return [fn(s) for s in seeds]


@dataclass
class Calibration:
    """Kernel and null moments estimated once per scenario from a large null sample."""

    spec: KernelSpec
    moments: NullMoments


def calibrate(null: Dist, N: int, block_sizes, pool_size: int = 5000, n_draws: int = 20000,
              seed: int = 0) -> Calibration:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCA11]))
    pool = null.sample(pool_size, rng)
    spec = KernelSpec(median_bandwidth(pool, seed=seed))
    moments = null_moments(pool, spec, N, block_sizes, n_draws=n_draws, seed=seed)
    return Calibration(spec, moments)


@dataclass
class Scenario:
    null: Dist = field(default_factory=lambda: Dist("gaussian", {"d": 20}))
    alt: Dist | None = None
    tau: int = 0
    horizon: int = 20000
    B: int = 10  # B_max (offline) or B0 (online)
    N: int = 10
    alphas: tuple = (0.10, 0.05, 0.01)
    arl: float = 1000.0
    trials: int = 1000
    seed: int = 0
    n_draws: int = 20000
    pool_size: int = 5000
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.alt is not None and self.tau >= self.horizon:
            raise ValueError("tau must be smaller than the horizon")
        for name in ("null", "alt"):
            v = getattr(self, name)
            if isinstance(v, dict):
                setattr(self, name, Dist(**v))
        for d in (self.null, self.alt):
            if d is not None and d.name not in GENERATORS:
                raise ValueError(f"unknown generator {d.name!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# --- offline ---------------------------------------------------------------


def _offline_null_trial(seq, null: Dist, cal: Calibration, N: int, B_max: int) -> float:
    rng = np.random.default_rng(seq)
    ref = null.sample(N * B_max, rng)
    test = null.sample(B_max, rng)
    blocks, test = build_offline_blocks(ref, test, N, B_max, seed=int(rng.integers(2**31)))
    return scan(blocks, test, cal.moments, cal.spec, np.inf).M


def offline_null_maxima(sc: Scenario, cal: Calibration | None = None) -> np.ndarray:
    cal = cal or calibrate(sc.null, sc.N, range(2, sc.B + 1), sc.pool_size, sc.n_draws, sc.seed)
    fn = partial(_offline_null_trial, null=sc.null, cal=cal, N=sc.N, B_max=sc.B)
    return np.array(map_trials(fn, trial_seeds(sc.seed, sc.trials), sc.workers))


def run_sl_experiment(sc: Scenario, corrected: bool = True) -> dict:
    """Theory vs simulated thresholds for the offline scan under the null."""
    cal = calibrate(sc.null, sc.N, range(2, sc.B + 1), sc.pool_size, sc.n_draws, sc.seed)
    maxima = offline_null_maxima(sc, cal)
    rows = []
    for a in sc.alphas:
        b_th = solve_offline_threshold(a, sc.B)
        row = {
            "alpha": a,
            "B_max": sc.B,
            "b_sim": float(np.quantile(maxima, 1 - a)),
            "b_theory": b_th,
            "sl_at_theory": float(np.mean(maxima > b_th)),
        }
        if corrected:
            row["b_sc"] = solve_offline_threshold(a, sc.B, cal.moments.skew_by_B)
        rows.append(row)
    return {"rows": rows, "bandwidth": cal.spec.bandwidth, "trials": sc.trials}


def _power_trial(seq, pre: Dist, post: Dist, cal: Calibration, N: int, n: int, tau: int,
                 b_m: float, b_t2: float, b_glr: float | None) -> tuple[bool, bool, bool]:
    rng = np.random.default_rng(seq)
    ref = pre.sample(N * n, rng)
    test = np.vstack([pre.sample(tau, rng), post.sample(n - tau, rng, **_post_extra(post, tau + 1, tau))])
    blocks, test = build_offline_blocks(ref, test, N, n, seed=int(rng.integers(2**31)))
    m_alarm = scan(blocks, test, cal.moments, cal.spec, b_m).alarm
    t2_alarm = hotelling_scan(test).max > b_t2
    glr_alarm = glr_scan(test).max > b_glr if b_glr is not None else False
    return m_alarm, t2_alarm, glr_alarm


def _post_extra(dist: Dist, start: int, tau: int) -> dict:
    return {"start": start, "tau": tau} if dist.name == "slope" else {}


def _hotelling_null_max(rng, null: Dist, n: int) -> float:
    return hotelling_scan(null.sample(n, rng)).max


def _glr_null_max(rng, null: Dist, n: int) -> float:
    return glr_scan(null.sample(n, rng)).max


def run_power_experiment(cases=None, n: int = 200, tau: int = 100, N: int = 10, alpha: float = 0.05,
                         trials: int = 100, calib_trials: int = 500, seed: int = 0,
                         n_draws: int = 20000, workers: int = 1) -> dict:
    """Power of the offline M-statistic, Hotelling ``T^2`` and GLR per case.

    The M threshold comes from the SL approximation; baseline thresholds are
    simulated ``(1 - alpha)`` quantiles of their null maxima.
    """
    cases = cases or sorted(OFFLINE_CASES)
    b_m = solve_offline_threshold(alpha, n)
    rows = []
    for c in cases:
        pre, post = OFFLINE_CASES[c]
        cseed = seed + 1000 * c
        cal = calibrate(pre, N, range(2, n + 1), n_draws=n_draws, seed=cseed)
        b_t2 = calibrate_offline_threshold(partial(_hotelling_null_max, null=pre, n=n), alpha,
                                           calib_trials, seed=cseed + 1)
        d = pre.sample(1, np.random.default_rng(0)).shape[1]
        b_glr = None
        if n - 2 * d - 3 > 0:
            b_glr = calibrate_offline_threshold(partial(_glr_null_max, null=pre, n=n), alpha,
                                                calib_trials, seed=cseed + 2)
        fn = partial(_power_trial, pre=pre, post=post, cal=cal, N=N, n=n, tau=tau,
                     b_m=b_m, b_t2=b_t2, b_glr=b_glr)
        res = np.array(map_trials(fn, trial_seeds(cseed + 3, trials), workers))
        rows.append({
            "case": c,
            "M": float(res[:, 0].mean()),
            "hotelling": float(res[:, 1].mean()),
            "glr": float(res[:, 2].mean()) if b_glr is not None else None,
            "b_M": b_m, "b_hotelling": b_t2, "b_glr": b_glr,
        })
    return {"rows": rows, "n": n, "tau": tau, "N": N, "alpha": alpha, "trials": trials}


# --- online ----------------------------------------------------------------


def _online_trial(seq, null: Dist, alt: Dist | None, cal: Calibration, B0: int, N: int,
                  b: float, horizon: int, pool_size: int, tau: int = 0) -> int:
    """Stopping time of one run (``horizon + 1`` when it never stops)."""
    rng = np.random.default_rng(seq)
    pool = null.sample(pool_size, rng)
    det = OnlineDetector(pool, B0, N, cal.spec, cal.moments, b, seed=int(rng.integers(2**31)))
    chunk = 1000
    t = 0
    while t < horizon:
        m = min(chunk, horizon - t)
        if alt is None:
            block = null.sample(m, rng)
        else:
            block = _stream_block(null, alt, rng, t + 1, m, tau)
        for x in block:
            _, alarm = det.step(x)
            if alarm:
                return det.t
        t += m
    return horizon + 1


def _stream_block(null: Dist, alt: Dist, rng, start: int, m: int, tau: int) -> np.ndarray:
    """Samples ``start..start+m-1`` of a stream that follows ``alt`` after time ``tau``."""
    idx = np.arange(start, start + m)
    pre_n = int(np.sum(idx <= tau))
    parts = []
    if pre_n:
        parts.append(null.sample(pre_n, rng))
    if m - pre_n:
        parts.append(alt.sample(m - pre_n, rng, **_post_extra(alt, start + pre_n, tau)))
    return np.vstack(parts)


def run_lengths(null: Dist, B0: int, N: int, b: float, trials: int, seed: int = 0,
                horizon: int = 20000, pool_size: int = 2000, cal: Calibration | None = None,
                alt: Dist | None = None, tau: int = 0, workers: int = 1) -> np.ndarray:
    cal = cal or calibrate(null, N, [B0], seed=seed)
    fn = partial(_online_trial, null=null, alt=alt, cal=cal, B0=B0, N=N, b=b, horizon=horizon,
                 pool_size=pool_size, tau=tau)
    return np.array(map_trials(fn, trial_seeds(seed, trials), workers))


def run_arl_experiment(nulls=("gaussian", "exponential", "laplace"), B0: int = 50, N: int = 5,
                       arl: float = 1000.0, trials: int = 200, seed: int = 0, horizon: int = 20000,
                       corrected: bool = True, workers: int = 1) -> dict:
    """Mean run length at the analytic threshold for several null distributions."""
    b = solve_online_threshold(arl, B0)
    rows = []
    for k, name in enumerate(nulls):
        null = NULLS[name]
        cal = calibrate(null, N, [B0], seed=seed + k)
        rl = run_lengths(null, B0, N, b, trials, seed=seed + 100 + k, horizon=horizon, cal=cal,
                         workers=workers)
        row = {"null": name, "B0": B0, "arl_target": arl, "b_theory": b,
               "mean_run_length": float(rl.mean()), "censored": int(np.sum(rl > horizon)),
               "kappa": cal.moments.skew_by_B[B0]}
        if corrected:
            row["b_sc"] = solve_online_threshold(arl, B0, cal.moments.skew_by_B[B0])
        rows.append(row)
    return {"rows": rows, "N": N, "trials": trials}


def _hotelling_null_path(rng, null: Dist, B0: int, length: int, mu, sigma) -> np.ndarray:
    return hotelling_online(null.sample(length, rng), B0, mu, sigma)


def run_edd_experiment(cases=None, B0: int = 20, N: int = 5, arl: float = 5000.0, trials: int = 100,
                       seed: int = 0, horizon: int = 2000, pool_size: int = 2000,
                       with_hotelling: bool = False, hotelling_calib_trials: int = 200,
                       hotelling_path: int = 25000, workers: int = 1) -> dict:
    """Expected detection delay when the change happens at the first monitored sample."""
    cases = cases or sorted(ONLINE_CASES)
    b = solve_online_threshold(arl, B0)
    rows = []
    for c in cases:
        null, alt = ONLINE_CASES[c]
        cseed = seed + 1000 * c
        cal = calibrate(null, N, [B0], seed=cseed)
        T = run_lengths(null, B0, N, b, trials, seed=cseed + 1, horizon=horizon, cal=cal, alt=alt,
                        tau=0, pool_size=pool_size, workers=workers)
        detected = T <= horizon
        row = {"case": c, "B0": B0, "b": b,
               "edd": float(T[detected].mean()) if detected.any() else None,
               "missed": int((~detected).sum())}
        if with_hotelling:
            row.update(_hotelling_edd(null, alt, B0, arl, trials, cseed, horizon, pool_size,
                                      hotelling_calib_trials, hotelling_path))
        rows.append(row)
    return {"rows": rows, "N": N, "arl": arl, "trials": trials}


def _hotelling_edd(null, alt, B0, arl, trials, seed, horizon, pool_size, calib_trials, path_len):
    ref = null.sample(pool_size, np.random.default_rng(np.random.SeedSequence([seed, 7])))
    mu, sigma = ref.mean(axis=0), np.atleast_2d(np.cov(ref, rowvar=False))
    b = calibrate_online_threshold(
        partial(_hotelling_null_path, null=null, B0=B0, length=path_len, mu=mu, sigma=sigma),
        arl, calib_trials, seed=seed + 5, offset=B0 - 1)
    T = []
    for seq in trial_seeds(seed + 6, trials):
        rng = np.random.default_rng(seq)
        stream = _stream_block(null, alt, rng, 1, horizon, 0)
        hit = first_crossing(hotelling_online(stream, B0, mu, sigma), b, offset=B0 - 1)
        T.append(hit if hit is not None else horizon + 1)
    T = np.array(T)
    ok = T <= horizon
    return {"b_hotelling": b, "edd_hotelling": float(T[ok].mean()) if ok.any() else None,
            "missed_hotelling": int((~ok).sum())}


def optimal_block_sweep(shifts=(0.2,), B0_grid=tuple(range(10, 62, 4)), d: int = 20, N: int = 5,
                        arl: float = 5000.0, trials: int = 200, seed: int = 0, horizon: int = 2000,
                        workers: int = 1) -> dict:
    """EDD over a grid of window sizes for Gaussian mean shifts; reports the minimizing ``B0``."""
    null = Dist("gaussian", {"d": d})
    cal = calibrate(null, N, B0_grid, seed=seed)
    out = []
    for k, shift in enumerate(shifts):
        alt = Dist("gaussian", {"d": d, "mean": shift})
        edd = []
        for B0 in B0_grid:
            b = solve_online_threshold(arl, B0)
            T = run_lengths(null, B0, N, b, trials, seed=seed + 10_000 * (k + 1) + B0, horizon=horizon,
                            cal=cal, alt=alt, workers=workers)
            edd.append(float(T.mean()))
        j = int(np.argmin(edd))
        out.append({"shift": shift, "B0": list(B0_grid), "edd": edd, "optimal_B0": int(B0_grid[j])})
    return {"rows": out, "N": N, "arl": arl, "trials": trials}
