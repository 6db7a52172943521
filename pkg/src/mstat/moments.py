"""Null moments of the block-averaged MMD statistic.

The variance and third moment of ``Z_B`` under the null reduce to a handful of
expectations of products of ``h``; these are estimated by Monte Carlo from the
reference pool and then assembled in closed form for any ``(B, N)``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from math import comb

import numpy as np

from .kernels import KernelSpec, as_samples, h_batch

DEFAULT_N_DRAWS = 10_000
# draws are generated in fixed-size chunks so results do not depend on `workers`
CHUNK = 5_000
# x0..x5 and y0..y2: the largest third-moment pattern needs nine distinct points
TUPLE_SIZE = 9


class MomentError(ValueError):
    """Estimated moments are inconsistent (e.g. a non-positive variance)."""


@dataclass(frozen=True)
class HMoments:
    """Monte-Carlo estimates of the h-moments entering the null variance and third moment.

    ``t1``..``t6`` follow the order of the six expectations in the third-moment
    expression: three "triangle" terms (same block, two blocks, three blocks)
    then three "identical pair" terms.
    """

    e_h2: float
    cov_hh: float
    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float
    n_draws: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HMoments":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def _draw_tuples(rng: np.random.Generator, n_pool: int, n: int, k: int) -> np.ndarray:
    """``n`` rows of ``k`` distinct pool indices (without replacement within a row)."""
    if n_pool >= 4 * k:
        idx = rng.integers(0, n_pool, size=(n, k))
        while True:
            s = np.sort(idx, axis=1)
            bad = np.any(s[:, 1:] == s[:, :-1], axis=1)
            if not bad.any():
                return idx
            idx[bad] = rng.integers(0, n_pool, size=(int(bad.sum()), k))
    return np.argsort(rng.random((n, n_pool)), axis=1)[:, :k]


def _moment_sums(pool: np.ndarray, gamma: float, n: int, seed_seq: np.random.SeedSequence):
    rng = np.random.default_rng(seed_seq)
    idx = _draw_tuples(rng, pool.shape[0], n, TUPLE_SIZE)
    p = pool[idx]  # (n, 9, d)
    x0, x1, x2, x3, x4, x5, y0, y1, y2 = (p[:, j] for j in range(TUPLE_SIZE))

    ha = h_batch(x0, x1, y0, y1, gamma)
    hb = h_batch(x2, x3, y0, y1, gamma)  # shares (y, y') with ha, fresh x's
    hc = h_batch(x4, x5, y0, y1, gamma)
    # triangle on (y0, y1, y2)
    tri1 = h_batch(x1, x2, y1, y2, gamma)
    tri2_same = h_batch(x2, x0, y2, y0, gamma)
    tri2_other = h_batch(x3, x4, y2, y0, gamma)
    tri_b = h_batch(x2, x3, y1, y2, gamma)
    tri_c = h_batch(x4, x5, y2, y0, gamma)

    ha2 = ha * ha
    terms = np.stack(
        [
            ha2,
            ha * hb,
            ha * tri1 * tri2_same,
            ha * tri1 * tri2_other,
            ha * tri_b * tri_c,
            ha2 * ha,
            ha2 * hb,
            ha * hb * hc,
        ]
    )
    if not np.all(np.isfinite(terms)):
        raise MomentError("non-finite kernel values during moment estimation")
    return terms.sum(axis=1)


def estimate_h_moments(
    pool,
    spec: KernelSpec,
    n_draws: int = DEFAULT_N_DRAWS,
    seed: int = 0,
    workers: int = 1,
) -> HMoments:
    """Monte-Carlo estimates of ``E[h^2]``, the shared-``(y, y')`` covariance and ``t1``..``t6``.

    Every draw takes nine distinct points from the pool; all eight expectations
    are averaged over the same draws. Draws are split into chunks of fixed size
    with independently spawned seeds, so the result is identical for any
    ``workers``.
    """
    pool = as_samples(pool)
    if pool.shape[0] < TUPLE_SIZE:
        raise ValueError(f"pool needs at least {TUPLE_SIZE} samples, got {pool.shape[0]}")
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    sizes = [CHUNK] * (n_draws // CHUNK)
    if n_draws % CHUNK:
        sizes.append(n_draws % CHUNK)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, seqs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda j: _moment_sums(pool, spec.gamma, *j), jobs))
    else:
        parts = [_moment_sums(pool, spec.gamma, *j) for j in jobs]
    sums = np.stack(parts)
    # per-term compensated merge of chunk sums; chunk order is fixed
    means = [math.fsum(sums[:, j]) / n_draws for j in range(sums.shape[1])]
    e_h2, cov_hh, t1, t2, t3, t4, t5, t6 = means
    return HMoments(e_h2, cov_hh, t1, t2, t3, t4, t5, t6, n_draws=n_draws, seed=seed)


def var_zb(h: HMoments, B: int, N: int) -> float:
    """Null variance of ``Z_B`` for block size ``B`` and ``N`` reference blocks."""
    if B < 2 or N < 1:
        raise ValueError(f"need B >= 2 and N >= 1, got B={B}, N={N}")
    v = (h.e_h2 / N + (N - 1) / N * h.cov_hh) / comb(B, 2)
    if not v > 0:
        raise MomentError(
            f"non-positive Var[Z_B]={v:.3g} at B={B}, N={N}; increase n_draws or check the pool"
        )
    return v


def third_moment_zb(h: HMoments, B: int, N: int) -> float:
    if B < 2 or N < 1:
        raise ValueError(f"need B >= 2 and N >= 1, got B={B}, N={N}")
    denom = B**2 * (B - 1) ** 2
    w1, w2, w3 = 1 / N**2, 3 * (N - 1) / N**2, (N - 1) * (N - 2) / N**2
    triangle = 8 * (B - 2) / denom * (w1 * h.t1 + w2 * h.t2 + w3 * h.t3)
    same_pair = 4 / denom * (w1 * h.t4 + w2 * h.t5 + w3 * h.t6)
    return triangle + same_pair


def skewness_zb(h: HMoments, B: int, N: int) -> float:
    return third_moment_zb(h, B, N) / var_zb(h, B, N) ** 1.5


def offline_correlation(u: int, v: int) -> float:
    """Null correlation of the standardized offline statistics at block sizes ``u`` and ``v``."""
    if u < 2 or v < 2:
        raise ValueError("block sizes must be >= 2")
    return math.sqrt(comb(u, 2) * comb(v, 2)) / comb(max(u, v), 2)


def online_correlation(B0: int, s: int) -> float:
    """Null correlation of ``M_t`` and ``M_{t+s}``; zero once the windows share no pair."""
    if B0 < 2 or s < 0:
        raise ValueError("need B0 >= 2 and s >= 0")
    if s >= B0 - 1:
        return 0.0
    return (1 - s / B0) * (1 - s / (B0 - 1))


@dataclass(frozen=True)
class NullMoments:
    """h-moments plus the assembled variance and skewness per block size for a fixed ``N``."""

    h: HMoments
    N: int
    var_by_B: dict = field(default_factory=dict)
    skew_by_B: dict = field(default_factory=dict)

    @classmethod
    def build(cls, h: HMoments, N: int, block_sizes) -> "NullMoments":
        Bs = sorted(set(int(b) for b in block_sizes))
        var_by_B = {B: var_zb(h, B, N) for B in Bs}
        skew_by_B = {B: third_moment_zb(h, B, N) / var_by_B[B] ** 1.5 for B in Bs}
        return cls(h=h, N=N, var_by_B=var_by_B, skew_by_B=skew_by_B)

    def var(self, B: int) -> float:
        try:
            return self.var_by_B[B]
        except KeyError:
            raise KeyError(f"no variance entry for B={B}") from None

    def to_dict(self) -> dict:
        return {
            "h": self.h.to_dict(),
            "N": self.N,
            "var_by_B": {str(k): v for k, v in self.var_by_B.items()},
            "skew_by_B": {str(k): v for k, v in self.skew_by_B.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NullMoments":
        return cls(
            h=HMoments.from_dict(d["h"]),
            N=int(d["N"]),
            var_by_B={int(k): float(v) for k, v in d["var_by_B"].items()},
            skew_by_B={int(k): float(v) for k, v in d["skew_by_B"].items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NullMoments":
        return cls.from_dict(json.loads(text))


def null_moments(
    pool,
    spec: KernelSpec,
    N: int,
    block_sizes,
    n_draws: int = DEFAULT_N_DRAWS,
    seed: int = 0,
    workers: int = 1,
) -> NullMoments:
    h = estimate_h_moments(pool, spec, n_draws=n_draws, seed=seed, workers=workers)
    return NullMoments.build(h, N, block_sizes)
