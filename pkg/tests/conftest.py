"""Shared fixtures and independent reference implementations."""

import math

import numpy as np
import pytest

from mstat.kernels import KernelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def spec():
    return KernelSpec(1.3)


# --- oracles: plain loops, no shared code with the package -----------------


def k_loop(x, y, bandwidth):
    s = sum((a - b) ** 2 for a, b in zip(x, y))
    return math.exp(-s / (2.0 * bandwidth**2))


def h_loop(x, xp, y, yp, bw):
    return k_loop(x, xp, bw) + k_loop(y, yp, bw) - k_loop(x, yp, bw) - k_loop(xp, y, bw)


def mmd_loop(X, Y, bw):
    B = len(X)
    tot = 0.0
    for i in range(B):
        for j in range(B):
            if i != j:
                tot += h_loop(X[i], X[j], Y[i], Y[j], bw)
    return tot / (B * (B - 1))


def z_brute(ref_blocks, test_block, bw, B):
    """Block-averaged MMD_u^2 on the last B points of every block."""
    Y = test_block[-B:]
    return sum(mmd_loop(X[-B:], Y, bw) for X in ref_blocks) / len(ref_blocks)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        line = mod.VERDICTS.get(n, f"AC{n:<2} SKIP  not run")
        terminalreporter.write_line(line)
