"""Monte Carlo check of grid-computed distortions on the continuous model."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..cost import DistributedSetting, SideInfoSetting
from ..errors import InvalidParameterError, UnsupportedError
from ..mapping import DecoderTable, DeterministicEncoder, lookup

Sampler = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class McEstimate:
    distortion: float
    stderr: float
    samples: int

    def agrees_with(self, reference: float, n_stderr: float = 3.0, tol_db: float = 0.2) -> bool:
        """Within ``n_stderr`` standard errors or ``tol_db`` decibels of ``reference``."""
        if abs(self.distortion - reference) <= n_stderr * self.stderr:
            return True
        if self.distortion <= 0 or reference <= 0:
            return False
        return abs(10.0 * math.log10(self.distortion / reference)) <= tol_db


def gaussian_sampler(variance: float, rho: float) -> Sampler:
    """Pairs with unit-free covariance ``variance * [[1, rho], [rho, 1]]``."""
    sd = math.sqrt(variance)
    orth = math.sqrt(1.0 - rho * rho)

    def draw(rng: np.random.Generator, n: int):
        u = rng.standard_normal((2, n))
        return sd * u[0], sd * (rho * u[0] + orth * u[1])

    return draw


def mixture_sampler(centers: Sequence[Sequence[float]], mix_weights: Sequence[float], covariance) -> Sampler:
    mu = np.asarray(centers, dtype=float).reshape(-1, 2)
    pi = np.asarray(mix_weights, dtype=float)
    chol = np.linalg.cholesky(np.asarray(covariance, dtype=float))

    def draw(rng: np.random.Generator, n: int):
        comp = rng.choice(len(pi), size=n, p=pi)
        u = rng.standard_normal((n, 2)) @ chol.T + mu[comp]
        return u[:, 0], u[:, 1]

    return draw


def _nearest(x_grid: np.ndarray, values: np.ndarray, samples: np.ndarray) -> np.ndarray:
    step = x_grid[1] - x_grid[0]
    idx = np.clip(np.rint((samples - x_grid[0]) / step).astype(np.int64), 0, x_grid.size - 1)
    return values[idx]


def monte_carlo_validate(
    encoders: Sequence[DeterministicEncoder],
    decoders: Sequence[DecoderTable],
    setting,
    samples: int = 1_000_000,
    seed: int = 0,
    sampler: Sampler | None = None,
    chunk: int = 250_000,
) -> McEstimate:
    """Sample-mean squared error of the mappings on continuous draws.

    Sources come from ``sampler`` (default: the jointly Gaussian law the grid
    was built from), encoders are evaluated at the nearest gridpoint, noise
    is continuous Gaussian and the decoder table is interpolated bilinearly.
    """
    if samples < 10_000:
        raise InvalidParameterError("need at least 10000 samples")
    if sampler is None:
        fam = setting.problem.joint.gaussian
        if fam is None:
            raise UnsupportedError("non-Gaussian sources need an explicit sampler")
        sampler = gaussian_sampler(*fam)
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        a, b = sampler(rng, n)
        if isinstance(setting, SideInfoSetting):
            g = _nearest(setting.x, encoders[0].values, a)
            y = g + math.sqrt(setting.noise.variance) * rng.standard_normal(n)
            loss = (a - lookup(decoders[0], y, b)) ** 2
        elif isinstance(setting, DistributedSetting):
            y1 = _nearest(setting.xs[0], encoders[0].values, a)
            y2 = _nearest(setting.xs[1], encoders[1].values, b)
            y1 = y1 + math.sqrt(setting.noises[0].variance) * rng.standard_normal(n)
            y2 = y2 + math.sqrt(setting.noises[1].variance) * rng.standard_normal(n)
            p = setting.problem
            if p.is_reconstruction:
                loss = (a - lookup(decoders[0], y1, y2)) ** 2 + p.eta * (b - lookup(decoders[1], y1, y2)) ** 2
            else:
                loss = (np.asarray(p.objective(a, b), dtype=float) - lookup(decoders[0], y1, y2)) ** 2
        else:
            raise UnsupportedError(f"unknown setting type {type(setting).__name__}")
        total += math.fsum(loss)
        total_sq += math.fsum(loss * loss)
        done += n
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return McEstimate(mean, math.sqrt(var / samples), samples)
