"""Closed-form tail approximations and threshold solvers.

``offline_sl`` approximates the probability that the offline scan exceeds ``b``
under the null; ``online_arl`` approximates the expected run length of the
online stopping rule. Both have skewness-corrected variants in which the
Gaussian tilt ``theta = b`` is replaced by the root of
``theta + kappa * theta**2 / 2 = b``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Mapping

from scipy.optimize import brentq, minimize_scalar

log = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)
B_LO, B_HI = 0.5, 10.0

# Multiplier inside the offline nu argument. "theorem": b*sqrt((2B-1)/(B(B-1)));
# "appendix": b*sqrt(2(2B-1)/(B(B-1))), with an extra factor 2 under the root.
NuConvention = Literal["theorem", "appendix"]
_NU_FACTOR = {"theorem": 1.0, "appendix": 2.0}


class ThresholdError(ValueError):
    """No threshold on the search bracket attains the requested target."""


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / SQRT_2PI


def nu(u: float) -> float:
    """Siegmund-type overshoot correction, in the usual closed-form approximation."""
    if not u > 0:
        raise ValueError(f"nu needs u > 0, got {u}")
    half = 0.5 * u
    # Phi(u/2) - 1/2 via erf avoids cancellation for small u
    num = (2.0 / u) * 0.5 * math.erf(half / math.sqrt(2.0))
    return num / (half * norm_cdf(half) + norm_pdf(half))


def _offline_weight(B: int) -> float:
    return (2 * B - 1) / (2.0 * SQRT_2PI * B * (B - 1))


def _offline_nu(b: float, B: int, convention: NuConvention) -> float:
    return nu(b * math.sqrt(_NU_FACTOR[convention] * (2 * B - 1) / (B * (B - 1))))


def offline_sl(b: float, B_max: int, convention: NuConvention = "theorem") -> float:
    """Approximate null probability that ``max_{2<=B<=B_max} Z_B' > b``."""
    if B_max < 2:
        raise ValueError("B_max must be >= 2")
    s = math.fsum(
        _offline_weight(B) * _offline_nu(b, B, convention) for B in range(2, B_max + 1)
    )
    return b * b * math.exp(-0.5 * b * b) * s


def _online_rate_coef(b: float, B0: int) -> float:
    if B0 < 2:
        raise ValueError("B0 must be >= 2")
    c = (2 * B0 - 1) / (SQRT_2PI * B0 * (B0 - 1))
    return c * nu(b * math.sqrt(2.0 * (2 * B0 - 1) / (B0 * (B0 - 1))))


def online_arl(b: float, B0: int) -> float:
    """Approximate expected stopping time of the online rule under the null."""
    return math.exp(0.5 * b * b) / (b * b) / _online_rate_coef(b, B0)


def solve_theta(b: float, kappa: float) -> float:
    """Tilt ``theta`` solving ``theta + kappa * theta**2 / 2 = b`` (the root continuous at kappa = 0)."""
    if kappa == 0.0:
        return b
    disc = 1.0 + 2.0 * kappa * b
    if disc < 0.0:
        raise ValueError(f"no real tilt for b={b}, kappa={kappa} (1 + 2*kappa*b < 0)")
    # rationalized form of (sqrt(disc) - 1) / kappa; stable as kappa -> 0
    return 2.0 * b / (math.sqrt(disc) + 1.0)


def psi(theta: float, kappa: float) -> float:
    """Cubic log-MGF ``theta^2/2 + kappa*theta^3/6``."""
    return 0.5 * theta * theta + kappa * theta**3 / 6.0


def _tilt_exponent(b: float, kappa: float) -> float:
    """``psi(theta_b) - theta_b * b``; falls back to ``-b^2/2`` when no tilt exists."""
    if kappa == 0.0:
        return -0.5 * b * b
    try:
        theta = solve_theta(b, kappa)
    except ValueError:
        log.warning("skewness correction infeasible (b=%.4g, kappa=%.4g); using Gaussian term", b, kappa)
        return -0.5 * b * b
    return psi(theta, kappa) - theta * b


def offline_sl_corrected(
    b: float,
    B_max: int,
    kappa_by_B: Mapping[int, float],
    convention: NuConvention = "theorem",
) -> float:
    if B_max < 2:
        raise ValueError("B_max must be >= 2")
    missing = [B for B in range(2, B_max + 1) if B not in kappa_by_B]
    if missing:
        raise KeyError(f"kappa_by_B lacks block sizes {missing[:5]}...")
    terms = []
    for B in range(2, B_max + 1):
        kappa = kappa_by_B[B]
        if kappa == 0.0:
            # keeps the kappa = 0 case identical to offline_sl term by term
            terms.append(_offline_weight(B) * _offline_nu(b, B, convention))
            continue
        expo = _tilt_exponent(b, kappa) + 0.5 * b * b
        terms.append(math.exp(expo) * _offline_weight(B) * _offline_nu(b, B, convention))
    return b * b * math.exp(-0.5 * b * b) * math.fsum(terms)


def online_arl_corrected(b: float, B0: int, kappa: float) -> float:
    """ARL with ``exp(-b^2/2)`` in the tail rate replaced by ``exp(psi(theta) - theta*b)``."""
    if kappa == 0.0:
        return online_arl(b, B0)
    return math.exp(-_tilt_exponent(b, kappa)) / (b * b) / _online_rate_coef(b, B0)


# --- solvers ---------------------------------------------------------------


def _turning_point(f, lo: float, hi: float) -> float:
    """Location of the extremum of a unimodal ``f`` on [lo, hi] (argmax)."""
    res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)


def _solve_monotone(g, lo: float, hi: float, what: str) -> float:
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        raise ThresholdError(f"{what}: no sign change on [{lo:.4g}, {hi:.4g}]")
    return brentq(g, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)


def _decreasing_branch_lo(f) -> float:
    # the tail approximations are not monotone for small b (b^2 e^{-b^2/2} peaks
    # near sqrt(2)); restrict to the branch right of the peak
    return max(B_LO, _turning_point(f, B_LO, 4.0))


def solve_offline_threshold(
    alpha: float,
    B_max: int,
    kappa_by_B: Mapping[int, float] | None = None,
    convention: NuConvention = "theorem",
) -> float:
    """Threshold ``b`` with ``offline_sl(b) = alpha`` (corrected if ``kappa_by_B`` is given)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if kappa_by_B is None:
        f = lambda b: offline_sl(b, B_max, convention)  # noqa: E731
    else:
        f = lambda b: offline_sl_corrected(b, B_max, kappa_by_B, convention)  # noqa: E731
    lo = _decreasing_branch_lo(f)
    return _solve_monotone(lambda b: math.log(f(b)) - math.log(alpha), lo, B_HI, "offline SL")


def solve_online_threshold(arl_target: float, B0: int, kappa: float | None = None) -> float:
    """Threshold ``b`` with ``online_arl(b) = arl_target`` (corrected if ``kappa`` is given)."""
    if not arl_target > 1.0:
        raise ValueError("ARL target must exceed 1")
    if kappa is None:
        f = lambda b: online_arl(b, B0)  # noqa: E731
    else:
        f = lambda b: online_arl_corrected(b, B0, kappa)  # noqa: E731
    lo = _decreasing_branch_lo(lambda b: 1.0 / f(b))
    return _solve_monotone(lambda b: math.log(f(b)) - math.log(arl_target), lo, B_HI, "online ARL")


@dataclass
class ThresholdSpec:
    """A solved threshold together with the target it was solved for."""

    b: float
    target: Literal["significance", "arl"]
    value: float
    block: int
    corrected: bool = False
    theta_by_B: dict = field(default_factory=dict)
    convention: str = "theorem"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta_by_B"] = {str(k): v for k, v in self.theta_by_B.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdSpec":
        d = dict(d)
        d["theta_by_B"] = {int(k): float(v) for k, v in d.get("theta_by_B", {}).items()}
        return cls(**d)


def offline_threshold_spec(
    alpha: float,
    B_max: int,
    kappa_by_B: Mapping[int, float] | None = None,
    convention: NuConvention = "theorem",
) -> ThresholdSpec:
    b = solve_offline_threshold(alpha, B_max, kappa_by_B, convention)
    thetas = {}
    if kappa_by_B is not None:
        for B in range(2, B_max + 1):
            try:
                thetas[B] = solve_theta(b, kappa_by_B[B])
            except ValueError:
                thetas[B] = b
    return ThresholdSpec(b, "significance", alpha, B_max, kappa_by_B is not None, thetas, convention)


def online_threshold_spec(arl_target: float, B0: int, kappa: float | None = None) -> ThresholdSpec:
    b = solve_online_threshold(arl_target, B0, kappa)
    thetas = {}
    if kappa is not None:
        try:
            thetas[B0] = solve_theta(b, kappa)
        except ValueError:
            thetas[B0] = b
    return ThresholdSpec(b, "arl", arl_target, B0, kappa is not None, thetas)
