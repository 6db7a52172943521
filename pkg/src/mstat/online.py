"""Online M-statistic with recursive sliding-window Gram updates.

Each step replaces the oldest point of the test window and of every reference
window with a new one. The three cached kernel matrices (reference-reference,
test-test, reference-test) are stored in ring-buffer slot order, so only the
row and column of the replaced slot are recomputed: ``O(N * B0)`` kernel
evaluations per step. Window sums of off-diagonal entries are maintained
incrementally with compensated arithmetic and refreshed exactly once per
window turnover, which keeps the amortized cost linear in ``B0``.

Reference and test windows always replace the same slot, so the position of a
point in its window (its age) is what pairs ``x_j`` with ``y_j`` inside ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .kernels import KernelSpec, as_samples
from .moments import NullMoments


class ReservoirExhausted(RuntimeError):
    """The reference reservoir cannot supply the refresh samples a step needs."""


def _row_kernel(points: np.ndarray, new: np.ndarray, gamma: float) -> np.ndarray:
    """``k(points[..., j, :], new[..., :])`` for every ``j``."""
    diff = points - new[..., None, :]
    return np.exp(-np.einsum("...jk,...jk->...j", diff, diff) * gamma)


class _Comp:
    """Neumaier-compensated accumulator over a vector of sums."""

    __slots__ = ("s", "c")

    def __init__(self, values):
        self.s = np.array(values, dtype=np.float64)
        self.c = np.zeros_like(self.s)

    def add(self, v):
        t = self.s + v
        big = np.abs(self.s) >= np.abs(v)
        self.c += np.where(big, (self.s - t) + v, (v - t) + self.s)
        self.s = t

    def value(self):
        return self.s + self.c


@dataclass
class StoppingResult:
    stopped: bool
    T: int | None
    M_series: list
    b: float
    times: list = field(default_factory=list)


class OnlineDetector:
    """Stateful online M-statistic.

    Parameters
    ----------
    pool : array (n, d)
        Reference data assumed to follow the null. ``N * B0`` points are drawn
        without replacement to fill the reference windows; the rest form the
        reservoir used for refreshes.
    B0 : int
        Window (block) size.
    N : int
        Number of reference windows.
    spec : KernelSpec
    moments : NullMoments
        Must provide ``Var[Z_B0]`` for this ``N``.
    b : float
        Alarm threshold on the standardized statistic.
    seed : int
    resync_every : int, optional
        Recompute window sums from the caches every this many slides
        (default ``B0``).

    Notes
    -----
    The first ``B0`` calls to :meth:`step` fill the test window and return
    ``None``; the statistic is emitted from time ``t = B0`` on.
    """

    def __init__(self, pool, B0: int, N: int, spec: KernelSpec, moments: NullMoments,
                 b: float, seed: int = 0, resync_every: int | None = None):
        pool = as_samples(pool)
        if B0 < 2 or N < 1:
            raise ValueError("need B0 >= 2 and N >= 1")
        if pool.shape[0] < N * B0:
            raise ValueError(f"pool has {pool.shape[0]} samples, need at least N*B0={N * B0}")
        if moments.N != N:
            raise ValueError(f"moments were assembled for N={moments.N}, detector uses N={N}")
        self.B0, self.N, self.d = B0, N, pool.shape[1]
        self.spec = spec
        self.gamma = spec.gamma
        self.b = float(b)
        self.sd = math.sqrt(moments.var(B0))
        self.rng = np.random.default_rng(seed)
        self.resync_every = resync_every or B0

        perm = self.rng.permutation(pool.shape[0])
        self.X = pool[perm[: N * B0]].reshape(N, B0, self.d).copy()
        # reservoir: first `n_res` rows of a buffer that grows as points retire
        rest = pool[perm[N * B0:]]
        self._res = np.empty((max(rest.shape[0], 1) * 2 + N + 1, self.d))
        self._res[: rest.shape[0]] = rest
        self.n_res = rest.shape[0]

        self.Y = np.zeros((B0, self.d))
        diff = self.X[:, :, None, :] - self.X[:, None, :, :]
        self.Kxx = np.exp(-np.einsum("nijk,nijk->nij", diff, diff) * self.gamma)
        self.Kyy = np.zeros((B0, B0))
        self.Kxy = np.zeros((N, B0, B0))
        self.t = 0
        self.slot = 0  # slot holding the oldest point once windows are full
        self.kernel_evals = 0
        self._since_resync = 0
        self.history: list[float] = []
        self._sums: _Comp | None = None

    # -- helpers ---------------------------------------------------------

    @staticmethod
    def _offdiag_sum(K: np.ndarray) -> np.ndarray:
        return K.sum(axis=(-1, -2)) - np.trace(K, axis1=-2, axis2=-1)

    def _resync(self):
        # layout: [S_xx per window | S_xy per window | S_yy]
        self._sums = _Comp(np.concatenate([
            self._offdiag_sum(self.Kxx), self._offdiag_sum(self.Kxy), [self._offdiag_sum(self.Kyy)],
        ]))
        self._since_resync = 0

    @property
    def reservoir(self) -> np.ndarray:
        return self._res[: self.n_res]

    def _retire(self, points: np.ndarray):
        k = points.shape[0]
        if self.n_res + k > self._res.shape[0]:
            grown = np.empty((2 * (self.n_res + k), self.d))
            grown[: self.n_res] = self._res[: self.n_res]
            self._res = grown
        self._res[self.n_res:self.n_res + k] = points
        self.n_res += k

    def _draw(self, k: int) -> np.ndarray:
        if self.n_res < k:
            raise ReservoirExhausted(f"reservoir holds {self.n_res} samples, need {k}")
        picks = self.rng.choice(self.n_res, size=k, replace=False)
        out = self._res[picks].copy()
        # swap-remove, largest index first so no pending pick gets moved
        for p in sorted(picks.tolist(), reverse=True):
            self.n_res -= 1
            self._res[p] = self._res[self.n_res]
        return out

    # -- public API ------------------------------------------------------

    @property
    def ready(self) -> bool:
        return self.t >= self.B0

    def _fill(self, y: np.ndarray):
        j = self.t
        self.Y[j] = y
        kyy = _row_kernel(self.Y[: j + 1], y, self.gamma)
        self.Kyy[j, : j + 1] = kyy
        self.Kyy[: j + 1, j] = kyy
        # column j of Kxy: every reference point vs the new test point
        self.Kxy[:, :, j] = _row_kernel(self.X, np.broadcast_to(y, (self.N, self.d)), self.gamma)
        self.kernel_evals += (j + 1) + self.N * self.B0

    def _slide(self, y: np.ndarray):
        s, B0, N = self.slot, self.B0, self.N
        Kxx, Kyy, Kxy = self.Kxx, self.Kyy, self.Kxy

        # off-diagonal contributions of slot s before replacement
        old_xx = Kxx[:, s, :].sum(axis=1) - Kxx[:, s, s]
        old_yy = Kyy[s, :].sum() - Kyy[s, s]
        old_xy = Kxy[:, s, :].sum(axis=1) + Kxy[:, :, s].sum(axis=1) - 2.0 * Kxy[:, s, s]

        self._retire(self.Y[s][None, :])
        self._retire(self.X[:, s, :])
        x_new = self._draw(N)
        self.Y[s] = y
        self.X[:, s, :] = x_new

        # one batched evaluation: [X_i vs x_new_i | Y vs x_new_i | X_i vs y | Y vs y]
        Yb = np.broadcast_to(self.Y, (N, B0, self.d))
        yb = np.broadcast_to(y, (N, self.d))
        pts = np.concatenate([self.X, Yb, self.X, self.Y[None]])
        ctr = np.concatenate([x_new, x_new, yb, y[None]])
        k = _row_kernel(pts, ctr, self.gamma)
        kxx, kxy_row, kxy_col, kyy = k[:N], k[N:2 * N], k[2 * N:3 * N], k[3 * N]
        self.kernel_evals += (B0 - 1) + N * ((B0 - 1) + B0 + (B0 - 1))

        Kyy[s, :] = kyy
        Kyy[:, s] = kyy
        Kxx[:, s, :] = kxx
        Kxx[:, :, s] = kxx
        Kxy[:, s, :] = kxy_row
        Kxy[:, :, s] = kxy_col

        new_xx = kxx.sum(axis=1) - kxx[:, s]
        new_yy = kyy.sum() - kyy[s]
        new_xy = kxy_row.sum(axis=1) + kxy_col.sum(axis=1) - 2.0 * kxy_row[:, s]
        delta = np.empty(2 * N + 1)
        delta[:N] = 2.0 * (new_xx - old_xx)
        delta[N:2 * N] = new_xy - old_xy
        delta[2 * N] = 2.0 * (new_yy - old_yy)
        self._sums.add(delta)

        self.slot = (s + 1) % B0
        self._since_resync += 1
        if self._since_resync >= self.resync_every:
            self._resync()

    def statistic(self) -> float:
        """Current standardized statistic ``Z_{B0,t} / sd``; requires full windows."""
        if not self.ready:
            raise RuntimeError("test window not yet full")
        B0, N = self.B0, self.N
        v = self._sums.value()
        sxx, sxy, syy = v[:N], v[N:2 * N], v[2 * N]
        z = (math.fsum(sxx - 2.0 * sxy) / N + syy) / (B0 * (B0 - 1))
        return z / self.sd

    def raw_z(self) -> float:
        return self.statistic() * self.sd

    def step(self, sample) -> tuple[float | None, bool]:
        y = np.asarray(sample, dtype=np.float64).reshape(-1)
        if y.shape[0] != self.d:
            raise ValueError(f"sample has dimension {y.shape[0]}, detector expects {self.d}")
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite sample")
        if self.t < self.B0:
            self._fill(y)
            self.t += 1
            if self.t == self.B0:
                self._resync()
        else:
            self._slide(y)
            self.t += 1
        if not self.ready:
            return None, False
        m = self.statistic()
        self.history.append(m)
        return m, bool(m > self.b)

    def run_until_stop(self, stream: Iterable, max_steps: int | None = None) -> StoppingResult:
        series, times = [], []
        for i, x in enumerate(stream):
            if max_steps is not None and i >= max_steps:
                break
            m, alarm = self.step(x)
            if m is not None:
                series.append(m)
                times.append(self.t)
            if alarm:
                return StoppingResult(True, self.t, series, self.b, times)
        return StoppingResult(False, None, series, self.b, times)

    # -- oracle support --------------------------------------------------

    def windows_in_age_order(self) -> tuple[np.ndarray, np.ndarray]:
        """Reference windows (N, B0, d) and test window (B0, d), oldest first."""
        order = (np.arange(self.B0) + self.slot) % self.B0
        return self.X[:, order, :], self.Y[order]


def run_until_stop(detector: OnlineDetector, stream, max_steps: int | None = None) -> StoppingResult:
    return detector.run_until_stop(stream, max_steps)
