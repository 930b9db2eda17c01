"""Randomized piecewise-affine encoders and tabulated MMSE decoders.

Channel model
-------------
Channel outputs are observed on the lattice ``y_j = j * dy`` where ``dy`` is
the noise grid spacing.  An input ``g`` reaches node ``j`` with probability
proportional to the noise density at ``y_j - g``, lowered by its value at the
support radius and normalized over the reachable nodes, so costs vary
smoothly with ``g``.  Decoder tables hold the exact posterior
mean at every lattice node inside their window and are extended by their edge
values outside it, so a rebuilt table is MMSE-optimal for the discrete model.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, InvalidParameterError
from .prob_model import UNREACHABLE_MASS, DiscretizedSource, Grid, NoiseModel

Target = Union[str, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class LocalAffineModel:
    slope: float
    intercept: float

    def __post_init__(self):
        if not (math.isfinite(self.slope) and math.isfinite(self.intercept)):
            raise InvalidParameterError("local model parameters must be finite")

    def __call__(self, x):
        return self.slope * np.asarray(x) + self.intercept


@dataclass(frozen=True, eq=False)
class PiecewiseEncoder:
    """``K`` affine models and the association probabilities ``p(k|x)``.

    ``params[k] = (slope, intercept)``; ``assoc[k, n]`` is the probability that
    source gridpoint ``n`` is encoded by model ``k``.
    """

    params: np.ndarray
    assoc: np.ndarray

    def __post_init__(self):
        params = np.array(self.params, dtype=float).reshape(-1, 2)
        assoc = np.array(self.assoc, dtype=float)
        if assoc.ndim == 1:
            assoc = assoc[None, :]
        if params.shape[0] < 1 or assoc.shape[0] != params.shape[0]:
            raise InvalidParameterError("need K >= 1 models and one assoc row per model")
        if not np.all(np.isfinite(params)):
            raise InvalidParameterError("local model parameters must be finite")
        if np.any(assoc < -1e-12) or np.any(assoc > 1 + 1e-12):
            raise InvalidParameterError("association probabilities must lie in [0, 1]")
        if np.any(np.abs(assoc.sum(axis=0) - 1.0) > 1e-9):
            raise InvalidParameterError("association columns must sum to 1")
        params.setflags(write=False)
        assoc.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "assoc", assoc)

    @classmethod
    def from_models(cls, models: Sequence[LocalAffineModel], assoc) -> "PiecewiseEncoder":
        return cls(np.array([(m.slope, m.intercept) for m in models], dtype=float), assoc)

    @classmethod
    def single(cls, slope: float, intercept: float, n_points: int) -> "PiecewiseEncoder":
        return cls(np.array([[slope, intercept]]), np.ones((1, n_points)))

    @property
    def n_models(self) -> int:
        return self.params.shape[0]

    @property
    def models(self) -> list[LocalAffineModel]:
        return [LocalAffineModel(float(a), float(b)) for a, b in self.params]

    def values(self, x) -> np.ndarray:
        """Channel input of every model at every source point, shape (K, N)."""
        x = np.asarray(x, dtype=float)
        return self.params[:, :1] * x[None, :] + self.params[:, 1:]

    def replace(self, params=None, assoc=None) -> "PiecewiseEncoder":
        return PiecewiseEncoder(
            self.params if params is None else params, self.assoc if assoc is None else assoc
        )

    def hard_assignment(self, costs: np.ndarray) -> np.ndarray:
        """Index of the cheapest model at each point; ties go to the lowest index."""
        return np.argmin(costs, axis=0)


@dataclass(frozen=True, eq=False)
class DeterministicEncoder:
    """Channel input per source gridpoint."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("encoder values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


Encoder = Union[PiecewiseEncoder, DeterministicEncoder]


def encoder_arrays(enc: Encoder, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(gvals, assoc)`` of shape (K, N) for either encoder kind."""
    x = np.asarray(x, dtype=float)
    if isinstance(enc, DeterministicEncoder):
        if enc.values.size != x.size:
            raise InvalidArgumentError(
                f"encoder has {enc.values.size} values but the source grid has {x.size} points"
            )
        return enc.values[None, :], np.ones((1, x.size))
    if enc.assoc.shape[1] != x.size:
        raise InvalidArgumentError(
            f"association matrix has {enc.assoc.shape[1]} columns but the source grid has {x.size} points"
        )
    return enc.values(x), enc.assoc


def to_deterministic(enc: PiecewiseEncoder, x: np.ndarray) -> DeterministicEncoder:
    """Evaluate each point with its most probable model."""
    k = np.argmax(enc.assoc, axis=0)
    return DeterministicEncoder(enc.values(x)[k, np.arange(len(x))])


def _source_axis(source: DiscretizedSource, axis: int) -> tuple[np.ndarray, np.ndarray]:
    return source.points(axis), source.marginal(axis)


def encoder_power(enc: Encoder, source: DiscretizedSource, axis: int = 0) -> float:
    """Average channel input power ``E{g_K(X)^2}``."""
    x, f = _source_axis(source, axis)
    g, p = encoder_arrays(enc, x)
    return math.fsum(f * np.sum(p * g * g, axis=0))


def conditional_entropy(enc: Encoder, source: DiscretizedSource, axis: int = 0) -> float:
    """``H(K|X)`` in nats, with ``0 log 0 = 0``."""
    if isinstance(enc, DeterministicEncoder):
        return 0.0
    _, f = _source_axis(source, axis)
    p = enc.assoc
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return 0.0 - math.fsum(f * plogp.sum(axis=0))


# --- channel lattice -------------------------------------------------------


def lattice_window(gvals: np.ndarray, noise: NoiseModel) -> tuple[int, int]:
    """``(first_index, n_rows)`` covering every node reachable from ``gvals``."""
    dy = noise.spacing
    g = np.asarray(gvals, dtype=float)
    first = int(np.floor((g.min() - noise.radius) / dy)) + 1
    last = int(np.ceil((g.max() + noise.radius) / dy)) - 1
    return first, last - first + 1


def _window_from_grid(y_grid: Grid, noise: NoiseModel) -> tuple[int, int]:
    dy = noise.spacing
    if len(y_grid) == 0:
        raise InvalidArgumentError("y_grid is empty")
    if abs(y_grid.spacing - dy) > 1e-12 * dy:
        raise InvalidArgumentError("y_grid spacing must equal the noise grid spacing")
    first = y_grid.lo / dy
    if abs(first - round(first)) > 1e-6:
        raise InvalidArgumentError("y_grid must lie on the lattice of noise-spacing multiples")
    return int(round(first)), len(y_grid)


def channel_likelihood(
    enc: Encoder, x: np.ndarray, noise: NoiseModel, window: tuple[int, int] | None = None
) -> tuple[np.ndarray, int]:
    """Matrix ``L[j, n] = P(output node first+j | source point n)``."""
    g, p = encoder_arrays(enc, x)
    if window is None:
        window = lattice_window(g, noise)
    first, n_rows = window
    return kernels.channel_matrix(g, p, noise.spacing, noise.sigma, noise.radius, first, n_rows), first


@dataclass(frozen=True, eq=False)
class DecoderTable:
    """Estimates on a (channel output) × (side information | second output) grid.

    ``y_index0`` is the lattice index of ``y_grid.points[0]``; for two-channel
    tables ``z_index0`` plays the same role for the second axis.
    """

    y_grid: Grid
    z_axis: Grid
    values: np.ndarray
    y_index0: int
    z_index0: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (len(self.y_grid), len(self.z_axis)):
            raise InvalidParameterError("decoder values do not match the table axes")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("decoder values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def is_distributed(self) -> bool:
        return self.z_index0 is not None


def _axis_position(grid: Grid, q) -> tuple[np.ndarray, np.ndarray]:
    u = np.clip((np.asarray(q, dtype=float) - grid.lo) / grid.spacing, 0.0, len(grid) - 1.0)
    i = np.minimum(np.floor(u).astype(np.int64), len(grid) - 2)
    return i, u - i


def lookup(dec: DecoderTable, y, z):
    """Bilinear interpolation, clamped to the edge cells outside the table."""
    i, s = _axis_position(dec.y_grid, y)
    j, t = _axis_position(dec.z_axis, z)
    v = dec.values
    out = (
        (1 - s) * (1 - t) * v[i, j]
        + s * (1 - t) * v[i + 1, j]
        + (1 - s) * t * v[i, j + 1]
        + s * t * v[i + 1, j + 1]
    )
    return out if np.ndim(out) else float(out)


def _safe_ratio(num: np.ndarray, den: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    ok = den >= UNREACHABLE_MASS
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ok, num / np.where(ok, den, 1.0), fallback)
    return out


def build_decoder_side_info(
    enc: Encoder,
    joint: DiscretizedSource,
    noise: NoiseModel,
    y_grid: Grid | None = None,
) -> DecoderTable:
    """Tabulate ``E{X | y, z}`` for the (possibly randomized) encoder."""
    if joint.dim != 2:
        raise InvalidArgumentError("the side-information decoder needs a joint (X, Z) source")
    x = joint.points(0)
    window = None if y_grid is None else _window_from_grid(y_grid, noise)
    L, first = channel_likelihood(enc, x, noise, window)
    F = joint.weights
    den = L @ F
    num = L @ (x[:, None] * F)
    col_mass = F.sum(axis=0)
    overall = float(np.dot(joint.marginal(0), x))
    prior = _safe_ratio(x @ F, col_mass, np.full_like(col_mass, overall))
    w = _safe_ratio(num, den, np.broadcast_to(prior, den.shape))
    w = np.clip(w, x[0], x[-1])
    grid = y_grid if y_grid is not None else Grid.lattice(first, L.shape[0], noise.spacing)
    return DecoderTable(grid, joint.grids[1], w, first)


def target_components(target: Target, joint: DiscretizedSource) -> list[np.ndarray]:
    """Quantities the decoder estimates, each as a matrix over (x1, x2)."""
    x1 = joint.points(0)[:, None]
    x2 = joint.points(1)[None, :]
    shape = joint.weights.shape
    if isinstance(target, str):
        if target != "reconstruction":
            raise InvalidArgumentError(f"unknown decoder target {target!r}")
        return [np.broadcast_to(x1, shape).copy(), np.broadcast_to(x2, shape).copy()]
    gamma = np.broadcast_to(np.asarray(target(x1, x2), dtype=float), shape).copy()
    if not np.all(np.isfinite(gamma[joint.weights > 0])):
        raise InvalidParameterError("target function must be finite on the source support")
    gamma[~np.isfinite(gamma)] = 0.0
    return [gamma]


def build_decoder_distributed(
    enc1: Encoder,
    enc2: Encoder,
    joint: DiscretizedSource,
    noise1: NoiseModel,
    noise2: NoiseModel,
    y1_grid: Grid | None = None,
    y2_grid: Grid | None = None,
    target: Target = "reconstruction",
) -> tuple[DecoderTable, ...]:
    """Tabulate ``E{X1|y1,y2}, E{X2|y1,y2}`` or ``E{γ(X1,X2)|y1,y2}``."""
    if joint.dim != 2:
        raise InvalidArgumentError("the distributed decoder needs a joint (X1, X2) source")
    w1 = None if y1_grid is None else _window_from_grid(y1_grid, noise1)
    w2 = None if y2_grid is None else _window_from_grid(y2_grid, noise2)
    L1, first1 = channel_likelihood(enc1, joint.points(0), noise1, w1)
    L2, first2 = channel_likelihood(enc2, joint.points(1), noise2, w2)
    F = joint.weights
    den = (L1 @ F) @ L2.T
    g1 = y1_grid if y1_grid is not None else Grid.lattice(first1, L1.shape[0], noise1.spacing)
    g2 = y2_grid if y2_grid is not None else Grid.lattice(first2, L2.shape[0], noise2.spacing)
    tables = []
    support = F > 0
    for gamma in target_components(target, joint):
        num = (L1 @ (F * gamma)) @ L2.T
        prior = float(np.sum(F * gamma))
        w = _safe_ratio(num, den, np.full(den.shape, prior))
        w = np.clip(w, gamma[support].min(), gamma[support].max())
        tables.append(DecoderTable(g1, g2, w, first1, first2))
    return tuple(tables)


# --- CSV dumps ---------------------------------------------------------------


def write_encoder_csv(path, x, values, header=("x", "g")) -> None:
    """One row per source gridpoint; several value columns allowed."""
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n, xv in enumerate(np.asarray(x, dtype=float)):
            w.writerow([repr(float(xv))] + [repr(float(v)) for v in vals[:, n]])


def write_assoc_csv(path, x, enc: PiecewiseEncoder) -> None:
    """Association matrix with the model parameters in the header."""
    header = ["x"] + [f"p{k}(a={a!r};b={b!r})" for k, (a, b) in enumerate(enc.params.tolist())]
    write_encoder_csv(path, x, enc.assoc, header=header)
