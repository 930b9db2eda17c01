"""Asymptotic performance bounds (infinite delay) for the Gaussian settings.

Rates are in bits; distortions are absolute mean squared errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import InvalidParameterError


@dataclass(frozen=True)
class OptaResult:
    capacities: tuple[float, ...]
    distortion_bound: float
    distortions: tuple[float, ...] = ()
    rate_distortion: Callable[[float], float] | None = None


def awgn_capacity(power: float, noise_variance: float = 1.0) -> float:
    """Capacity of the scalar AWGN channel in bits per use."""
    if not power >= 0:
        raise InvalidParameterError(f"power must be >= 0, got {power!r}")
    if not noise_variance > 0:
        raise InvalidParameterError(f"noise variance must be > 0, got {noise_variance!r}")
    return 0.5 * math.log1p(power / noise_variance) / math.log(2.0)


def _log2_plus(v: float) -> float:
    return max(0.0, math.log2(v)) if v > 0 else math.inf


def opta_side_info(rho: float, sigma_x2: float, power: float, noise_variance: float = 1.0) -> OptaResult:
    """Wyner-Ziv rate-distortion function matched to the channel capacity."""
    if not -1 <= rho <= 1:
        raise InvalidParameterError(f"|rho| must be <= 1, got {rho!r}")
    if not sigma_x2 > 0:
        raise InvalidParameterError("source variance must be positive")
    cap = awgn_capacity(power, noise_variance)
    cond_var = (1.0 - rho * rho) * sigma_x2

    def rate(d: float) -> float:
        if d <= 0:
            return math.inf
        return 0.5 * _log2_plus(cond_var / d)

    bound = cond_var / (1.0 + power / noise_variance)
    return OptaResult((cap,), bound, (bound,), rate)


def _beta(d1: float, d2: float, rho: float) -> float:
    return 1.0 + math.sqrt(1.0 + 4.0 * rho * rho * d1 * d2 / (1.0 - rho * rho) ** 2)


def wagner_region_contains(r1: float, r2: float, d1: float, d2: float, rho: float, sigma_x2: float = 1.0) -> bool:
    """Membership in the quadratic-Gaussian two-encoder rate-distortion region.

    Distortions are normalized by ``sigma_x2`` before the test.
    """
    if not (d1 > 0 and d2 > 0):
        raise InvalidParameterError("distortions must be positive")
    if r1 < 0 or r2 < 0:
        raise InvalidParameterError("rates must be nonnegative")
    if not -1 < rho < 1:
        raise InvalidParameterError(f"|rho| must be < 1, got {rho!r}")
    d1 /= sigma_x2
    d2 /= sigma_x2
    s = 1.0 - rho * rho
    if r1 < 0.5 * _log2_plus((s + rho * rho * 2.0 ** (-2 * r2)) / d1):
        return False
    if r2 < 0.5 * _log2_plus((s + rho * rho * 2.0 ** (-2 * r1)) / d2):
        return False
    return r1 + r2 >= 0.5 * _log2_plus(s * _beta(d1, d2, rho) / (2.0 * d1 * d2))


def _sum_rate_product(r1: float, r2: float, rho: float) -> float:
    """Normalized ``D1*D2`` at which the sum-rate inequality becomes tight.

    The inequality depends on the distortions only through their product
    ``u``; solving ``(1-rho^2)(1 + sqrt(1 + c*u)) = 2^(2(r1+r2)+1) u`` for
    ``u`` gives ``u = (2k + c) / k^2`` with ``k = 2^(2(r1+r2)+1) / (1-rho^2)``.
    """
    s = 1.0 - rho * rho
    c = 4.0 * rho * rho / (s * s)
    k = 2.0 ** (2 * (r1 + r2) + 1) / s
    return (2.0 * k + c) / (k * k)


def opta_distributed(
    power1: float,
    power2: float,
    noise_vars: tuple[float, float] = (1.0, 1.0),
    rho: float = 0.0,
    eta: float = 1.0,
    sigma_x2: float = 1.0,
) -> OptaResult:
    """Minimum of ``D1 + eta * D2`` over the Wagner region at rates ``C(P_i)``.

    The region is ``D1 >= f1``, ``D2 >= f2`` (single-rate inequalities) and
    ``D1*D2 >= u`` (sum rate), so the optimum is either the tangent point of
    ``D1 + eta*D2`` with the hyperbola or a corner on one of the floors.
    """
    if not -1 < rho < 1:
        raise InvalidParameterError(f"|rho| must be < 1, got {rho!r}")
    if not eta > 0:
        raise InvalidParameterError("eta must be positive")
    r1 = awgn_capacity(power1, noise_vars[0])
    r2 = awgn_capacity(power2, noise_vars[1])
    s = 1.0 - rho * rho
    f1 = (s + rho * rho * 2.0 ** (-2 * r2)) * 2.0 ** (-2 * r1)
    f2 = (s + rho * rho * 2.0 ** (-2 * r1)) * 2.0 ** (-2 * r2)
    u = _sum_rate_product(r1, r2, rho)
    d1 = math.sqrt(eta * u)
    d2 = math.sqrt(u / eta)
    if d1 < f1:
        d1, d2 = f1, max(f2, u / f1)
    elif d2 < f2:
        d1, d2 = max(f1, u / f2), f2
    d1 *= sigma_x2
    d2 *= sigma_x2
    return OptaResult((r1, r2), d1 + eta * d2, (d1, d2))
