"""Offline M-statistic: scan over block sizes of a single test block."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, as_samples, gram, median_bandwidth
from .moments import DEFAULT_N_DRAWS, NullMoments, null_moments
from .thresholds import solve_offline_threshold


@dataclass
class OfflineScan:
    B: np.ndarray
    z: np.ndarray  # raw Z_B
    z_prime: np.ndarray  # Z_B / sqrt(Var[Z_B])
    M: float
    argmax_B: int
    b: float
    alarm: bool
    N: int
    B_max: int

    @property
    def change_offset(self) -> int:
        """Index inside the test block where the maximizing post-change window starts."""
        return self.B_max - self.argmax_B


def build_offline_blocks(reference, test, N: int, B_max: int, seed: int = 0, contiguous: bool = False):
    """Draw ``N`` reference blocks of size ``B_max`` and validate the test block.

    By default the blocks are a without-replacement sample of the pool (order
    randomized); ``contiguous=True`` instead takes the last ``N * B_max`` points
    of ``reference`` in time order.
    """
    reference = as_samples(reference)
    test = as_samples(test, d=reference.shape[1])
    if test.shape[0] != B_max:
        raise ValueError(f"test block must have B_max={B_max} samples, got {test.shape[0]}")
    need = N * B_max
    if reference.shape[0] < need:
        raise ValueError(f"need at least N*B_max={need} reference samples, got {reference.shape[0]}")
    if contiguous:
        blocks = reference[reference.shape[0] - need:]
    else:
        idx = np.random.default_rng(seed).choice(reference.shape[0], size=need, replace=False)
        blocks = reference[idx]
    return blocks.reshape(N, B_max, -1), test


def _kahan_cumsum(values) -> np.ndarray:
    """Running sum with Neumaier compensation."""
    out = np.empty(len(values))
    s = c = 0.0
    for i, v in enumerate(values):
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out[i] = s + c
    return out


def z_series(ref_blocks: np.ndarray, test_block: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """``Z_B`` for ``B = 2..B_max`` on the right-most ``B`` points of every block.

    Growing the window from ``B`` to ``B + 1`` adds the point at position
    ``B_max - B - 1`` and its ``2B`` ordered pairs with the points already in
    the window, so the whole series costs one pass over the summed
    ``h``-matrix: ``O(N * B_max^2)``.
    """
    N, B_max, _ = ref_blocks.shape
    Kyy = gram(test_block, test_block, spec)
    parts = np.empty((N, B_max, B_max))
    for i, X in enumerate(ref_blocks):
        Kxy = gram(X, test_block, spec)
        parts[i] = gram(X, X, spec) - (Kxy + Kxy.T)
    # sorting along the block axis fixes the summation order, so permuting the
    # reference blocks leaves every Z_B bit-identical
    parts.sort(axis=0)
    Hsum = parts.sum(axis=0) + N * Kyy
    # strict upper-triangle row sums: r[p] = sum_{q > p} Hsum[p, q]
    r = np.triu(Hsum, k=1).sum(axis=1)
    # window of size B covers rows B_max-B .. B_max-1; accumulate from the end
    S = 2.0 * _kahan_cumsum(r[::-1])  # S[B-1] = sum over ordered pairs in the last-B window
    B = np.arange(2, B_max + 1)
    return S[1:] / (N * B * (B - 1))


def scan(ref_blocks, test_block, moments: NullMoments, spec: KernelSpec, b: float) -> OfflineScan:
    ref_blocks = np.asarray(ref_blocks, dtype=np.float64)
    test_block = as_samples(test_block, d=ref_blocks.shape[2])
    N, B_max, _ = ref_blocks.shape
    if test_block.shape[0] != B_max:
        raise ValueError("test block and reference blocks differ in size")
    Bs = np.arange(2, B_max + 1)
    sd = np.sqrt([moments.var(int(B)) for B in Bs])
    z = z_series(ref_blocks, test_block, spec)
    zp = z / sd
    k = int(np.argmax(zp))  # first maximum = smallest B among ties
    M = float(zp[k])
    return OfflineScan(Bs, z, zp, M, int(Bs[k]), b, bool(M > b), N, B_max)


@dataclass
class OfflineOptions:
    bandwidth: float | str = "median"
    n_draws: int = DEFAULT_N_DRAWS
    corrected: bool = False
    contiguous: bool = False
    convention: str = "theorem"
    seed: int = 0
    workers: int = 1


@dataclass
class DetectionReport:
    mode: str
    statistic: list
    threshold: float
    alarm: bool
    change_location: int | None
    stopping_time: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "statistic": [float(v) for v in self.statistic],
            "threshold": float(self.threshold),
            "alarm": bool(self.alarm),
            "change_location": self.change_location,
            "stopping_time": self.stopping_time,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def detect_offline(reference, test, N: int, B_max: int, alpha: float,
                   options: OfflineOptions | None = None) -> tuple[DetectionReport, OfflineScan, NullMoments]:
    """Moments from the reference pool, threshold for ``alpha``, then the scan."""
    opt = options or OfflineOptions()
    reference = as_samples(reference)
    if opt.bandwidth == "median":
        spec = KernelSpec(median_bandwidth(reference, seed=opt.seed))
    else:
        spec = KernelSpec(float(opt.bandwidth))
    seeds = np.random.SeedSequence(opt.seed).generate_state(2)
    moments = null_moments(reference, spec, N, range(2, B_max + 1), n_draws=opt.n_draws,
                           seed=int(seeds[0]), workers=opt.workers)
    kappa = moments.skew_by_B if opt.corrected else None
    b = solve_offline_threshold(alpha, B_max, kappa, opt.convention)
    blocks, test = build_offline_blocks(reference, test, N, B_max, seed=int(seeds[1]),
                                        contiguous=opt.contiguous)
    res = scan(blocks, test, moments, spec, b)
    report = DetectionReport(
        mode="offline",
        statistic=list(res.z_prime),
        threshold=b,
        alarm=res.alarm,
        change_location=res.change_offset if res.alarm else None,
        extra={"M": res.M, "argmax_B": res.argmax_B, "N": N, "B_max": B_max,
               "bandwidth": spec.bandwidth, "alpha": alpha, "corrected": opt.corrected},
    )
    return report, res, moments
