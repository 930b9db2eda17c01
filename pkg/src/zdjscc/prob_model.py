"""Discretized source and noise densities on uniform grids.

Every expectation in the package is a weighted sum over gridpoints.  Densities
are sampled at the gridpoints, truncated to a bounded support and renormalized,
so probabilistic identities hold exactly on the discrete model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidParameterError, NumericalDomainError

DEFAULT_SPACING = 0.02
DEFAULT_SUPPORT_SIGMAS = 5.0

# rows of a joint weight matrix below this mass are treated as unreachable
UNREACHABLE_MASS = 1e-300


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniformly spaced, strictly increasing sample locations."""

    points: np.ndarray
    spacing: float

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 3:
            raise InvalidParameterError("a grid needs at least 3 points")
        if not self.spacing > 0:
            raise InvalidParameterError(f"grid spacing must be positive, got {self.spacing}")
        steps = np.diff(pts)
        tol = 1e-12 * self.spacing + 8 * np.finfo(float).eps * float(np.max(np.abs(pts)))
        if np.any(np.abs(steps - self.spacing) > tol):
            raise InvalidParameterError("grid points are not uniformly spaced")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spacing", float(self.spacing))

    @classmethod
    def centered(cls, center: float, half_count: int, spacing: float) -> "Grid":
        """Grid ``center + spacing * [-half_count, ..., half_count]``."""
        offsets = np.arange(-half_count, half_count + 1, dtype=float)
        return cls(center + spacing * offsets, spacing)

    @classmethod
    def lattice(cls, first_index: int, count: int, spacing: float) -> "Grid":
        """Nodes ``spacing * j`` for the integers ``first_index .. first_index+count-1``."""
        idx = np.arange(first_index, first_index + count, dtype=float)
        return cls(idx * spacing, spacing)

    def __len__(self) -> int:
        return self.points.size

    @property
    def lo(self) -> float:
        return float(self.points[0])

    @property
    def hi(self) -> float:
        return float(self.points[-1])


@dataclass(frozen=True, eq=False)
class DiscretizedSource:
    """Probability weights on a 1-D grid or on the product of two grids.

    For ``dim == 2`` the weight matrix is indexed ``weights[i, j]`` for the pair
    ``(grids[0].points[i], grids[1].points[j])``.  ``gaussian`` holds
    ``(variance, correlation)`` when the weights sample a zero-mean Gaussian
    with equal variances; closed-form oracles use it.
    """

    grids: tuple[Grid, ...]
    weights: np.ndarray
    gaussian: tuple[float, float] | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        grids = tuple(self.grids)
        if len(grids) not in (1, 2) or w.ndim != len(grids):
            raise InvalidParameterError("a source has one grid per weight axis (1 or 2)")
        if w.shape != tuple(len(g) for g in grids):
            raise InvalidParameterError(f"weights shape {w.shape} does not match the grids")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidParameterError("weights must be finite and nonnegative")
        total = _accurate_sum(w)
        if not total > 0:
            raise InvalidParameterError("weights carry no mass")
        w /= total
        w.setflags(write=False)
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return len(self.grids)

    @property
    def grid(self) -> Grid:
        return self.grids[0]

    def points(self, axis: int = 0) -> np.ndarray:
        return self.grids[axis].points

    def marginal(self, axis: int = 0) -> np.ndarray:
        """Marginal weights along ``axis``."""
        if self.dim == 1:
            return self.weights
        return self.weights.sum(axis=1 - axis)

    def conditional(self, given: int = 0) -> np.ndarray:
        """Weights of the other variable conditioned on axis ``given``.

        Returns a matrix whose row ``i`` is the distribution of the other
        coordinate given ``grids[given].points[i]``.  Unreachable rows are zero.
        """
        if self.dim != 2:
            raise InvalidParameterError("conditionals need a 2-D source")
        w = self.weights if given == 0 else self.weights.T
        mass = w.sum(axis=1)
        out = np.zeros_like(w)
        ok = mass >= UNREACHABLE_MASS
        out[ok] = w[ok] / mass[ok, None]
        return out

    def renormalized(self) -> "DiscretizedSource":
        return DiscretizedSource(self.grids, self.weights, self.gaussian)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Zero-mean additive noise sampled on a symmetric grid."""

    grid: Grid
    weights: np.ndarray
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise InvalidParameterError(f"noise variance must be positive, got {self.variance}")
        n = len(self.grid)
        if n % 2 == 0:
            raise InvalidParameterError("noise grid must be symmetric with an odd point count")
        w = np.array(self.weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidParameterError("noise weights must be finite, nonnegative, one per point")
        w /= _accurate_sum(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "variance", float(self.variance))
        pts = self.grid.points
        mean = float(np.dot(w, pts))
        var = float(np.dot(w, (pts - mean) ** 2))
        if abs(mean) > 1e-3 or abs(var - self.variance) > 0.01 * self.variance:
            raise InvalidParameterError(
                f"discretized noise has mean {mean:.3g} and variance {var:.6g}; "
                f"widen the support or refine the spacing"
            )

    @property
    def spacing(self) -> float:
        return self.grid.spacing

    @property
    def half_width(self) -> int:
        """Number of gridpoints on each side of zero."""
        return len(self.grid) // 2

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def radius(self) -> float:
        """Support half-width; the channel kernel vanishes beyond it."""
        return self.half_width * self.spacing


def _accurate_sum(a: np.ndarray) -> float:
    return math.fsum(np.asarray(a, dtype=float).ravel())


def _half_count(half_width: float, spacing: float) -> int:
    return int(math.floor(half_width / spacing + 1e-9))


def _check_positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not (isinstance(value, (int, float, np.floating)) and math.isfinite(value) and value > 0):
            raise InvalidParameterError(f"{name} must be a positive finite number, got {value!r}")


def build_gaussian_source(
    mean: float = 0.0,
    variance: float = 1.0,
    spacing: float = DEFAULT_SPACING,
    support_sigmas: float = DEFAULT_SUPPORT_SIGMAS,
) -> DiscretizedSource:
    """Scalar Gaussian sampled on ``mean ± support_sigmas·σ``."""
    _check_positive(variance=variance, spacing=spacing, support_sigmas=support_sigmas)
    sigma = math.sqrt(variance)
    grid = Grid.centered(mean, _half_count(support_sigmas * sigma, spacing), spacing)
    offsets = grid.points - mean
    family = (float(variance), 0.0) if mean == 0 else None
    return DiscretizedSource((grid,), np.exp(-0.5 * offsets**2 / variance), family)


def build_noise(
    variance: float = 1.0,
    spacing: float = DEFAULT_SPACING,
    support_sigmas: float = DEFAULT_SUPPORT_SIGMAS,
) -> NoiseModel:
    """Zero-mean Gaussian noise on a symmetric grid through the origin."""
    src = build_gaussian_source(0.0, variance, spacing, support_sigmas)
    return NoiseModel(src.grid, src.weights, variance)


def build_gaussian_mixture(
    centers: Sequence[Sequence[float]],
    mix_weights: Sequence[float],
    covariance,
    spacing: float = DEFAULT_SPACING,
    support_sigmas: float = DEFAULT_SUPPORT_SIGMAS,
) -> DiscretizedSource:
    """Bivariate Gaussian mixture with a shared covariance on a square product grid.

    Each axis covers every center's coordinate ± ``support_sigmas`` standard
    deviations of that axis, symmetric about the midpoint of the extreme centers.
    """
    _check_positive(spacing=spacing, support_sigmas=support_sigmas)
    mu = np.asarray(centers, dtype=float).reshape(-1, 2)
    pi = np.asarray(mix_weights, dtype=float)
    if pi.shape != (mu.shape[0],) or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
        raise InvalidParameterError("mix_weights must be nonnegative, one per center, summing to 1")
    cov = np.asarray(covariance, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T, rtol=0, atol=1e-15):
        raise InvalidParameterError("covariance must be a symmetric 2x2 matrix")
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if not (cov[0, 0] > 0 and det > 0):
        raise InvalidParameterError("covariance must be positive definite")

    grids = []
    for axis in range(2):
        sigma = math.sqrt(cov[axis, axis])
        lo = mu[:, axis].min() - support_sigmas * sigma
        hi = mu[:, axis].max() + support_sigmas * sigma
        grids.append(Grid.centered(0.5 * (lo + hi), _half_count(0.5 * (hi - lo), spacing), spacing))

    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
    x = grids[0].points[:, None]
    z = grids[1].points[None, :]
    dens = np.zeros((len(grids[0]), len(grids[1])))
    for (mx, mz), p in zip(mu, pi):
        dx = x - mx
        dz = z - mz
        quad = inv[0, 0] * dx * dx + (inv[0, 1] + inv[1, 0]) * dx * dz + inv[1, 1] * dz * dz
        dens += p * np.exp(-0.5 * quad)
    return DiscretizedSource(tuple(grids), dens)


def build_joint_gaussian(
    correlation: float,
    variance: float = 1.0,
    spacing: float = DEFAULT_SPACING,
    support_sigmas: float = DEFAULT_SUPPORT_SIGMAS,
) -> DiscretizedSource:
    """Zero-mean bivariate Gaussian with covariance ``variance·[[1, ρ], [ρ, 1]]``."""
    if not (isinstance(correlation, (int, float, np.floating)) and -1 < correlation < 1):
        raise InvalidParameterError(f"|correlation| must be < 1, got {correlation!r}")
    _check_positive(variance=variance)
    cov = variance * np.array([[1.0, correlation], [correlation, 1.0]])
    src = build_gaussian_mixture([(0.0, 0.0)], [1.0], cov, spacing, support_sigmas)
    return DiscretizedSource(src.grids, src.weights, (float(variance), float(correlation)))


def expect(source: DiscretizedSource, integrand: Callable[..., np.ndarray]) -> float:
    """Expectation of a pointwise function under the discrete model.

    The integrand receives one array per axis, broadcast against each other.
    """
    if source.dim == 1:
        vals = np.broadcast_to(integrand(source.points(0)), source.weights.shape)
    else:
        vals = np.broadcast_to(
            integrand(source.points(0)[:, None], source.points(1)[None, :]), source.weights.shape
        )
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = tuple(int(i[0]) for i in np.nonzero(bad))
        where = tuple(float(source.points(a)[i]) for a, i in enumerate(idx))
        raise NumericalDomainError(f"integrand is not finite at gridpoint {where}")
    return math.fsum((source.weights * vals).ravel())
