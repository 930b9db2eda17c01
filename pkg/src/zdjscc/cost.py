"""Distortion, Lagrangian and free-energy evaluation for both settings.

A *setting* wraps a problem and exposes the pieces every optimizer needs:
marginal source grids, decoder rebuilds, per-encoder cost tables and a full
cost breakdown.  A cost table stores, for one encoder, the expected squared
error given that the channel output landed on lattice node ``j`` and the
source sat at gridpoint ``x``; the average over the lattice nodes reached
from a given channel input is taken when the table is queried.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, InvalidParameterError, InvalidStateError
from .mapping import (
    DecoderTable,
    Encoder,
    Target,
    build_decoder_distributed,
    build_decoder_side_info,
    channel_likelihood,
    conditional_entropy,
    encoder_arrays,
    target_components,
)
from .prob_model import DiscretizedSource, NoiseModel


def _check_lambda(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value >= 0):
        raise InvalidParameterError(f"{name} must be finite and >= 0, got {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class SideInfoProblem:
    joint: DiscretizedSource
    noise: NoiseModel
    lam: float
    power_target: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lam", _check_lambda("lam", self.lam))
        if self.joint.dim != 2:
            raise InvalidParameterError("side-information problems need a joint (X, Z) source")
        if not self.power_target > 0:
            raise InvalidParameterError("power_target must be positive")


@dataclass(frozen=True, eq=False)
class DistributedProblem:
    """Two encoders, one decoder.

    ``objective`` is ``"reconstruction"`` (cost ``|X1-X̂1|² + eta·|X2-X̂2|²``)
    or a callable ``gamma(x1, x2)`` whose value the decoder estimates.
    """

    joint: DiscretizedSource
    noise1: NoiseModel
    noise2: NoiseModel
    lam1: float
    lam2: float
    eta: float = 1.0
    objective: Target = "reconstruction"
    power_targets: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "lam1", _check_lambda("lam1", self.lam1))
        object.__setattr__(self, "lam2", _check_lambda("lam2", self.lam2))
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise InvalidParameterError(f"eta must be positive, got {self.eta!r}")
        if self.joint.dim != 2:
            raise InvalidParameterError("distributed problems need a joint (X1, X2) source")
        if isinstance(self.objective, str) and self.objective != "reconstruction":
            raise InvalidParameterError(f"unknown objective {self.objective!r}")
        # validates finiteness of gamma on the support
        target_components(self.objective, self.joint)

    @property
    def is_reconstruction(self) -> bool:
        return isinstance(self.objective, str)


@dataclass(frozen=True)
class CostBreakdown:
    distortion: float
    powers: tuple[float, ...]
    lagrangian: float
    entropy: float
    free_energy: float
    temperature: float = 0.0
    n_models: tuple[int, ...] = (1,)

    @property
    def power(self) -> float:
        return math.fsum(self.powers)


def make_breakdown(
    distortion: float,
    powers: Sequence[float],
    lambdas: Sequence[float],
    targets: Sequence[float],
    entropy: float,
    temperature: float = 0.0,
    h0: float = 0.0,
    n_models: Sequence[int] = (1,),
) -> CostBreakdown:
    lagrangian = distortion + math.fsum(l * (p - t) for l, p, t in zip(lambdas, powers, targets))
    free = lagrangian - temperature * (entropy - h0)
    return CostBreakdown(
        float(distortion),
        tuple(float(p) for p in powers),
        float(lagrangian),
        float(entropy),
        float(free),
        float(temperature),
        tuple(int(k) for k in n_models),
    )


@dataclass(frozen=True, eq=False)
class CostTable:
    """Pointwise Lagrangian cost of one encoder with everything else fixed.

    ``node_cost[r, n]`` is the expected distortion when the channel output of
    this encoder is lattice node ``first_index + r`` and the source is at
    gridpoint ``n``.  ``node_slope`` (optional) holds the matching
    ``E{w'·(target - w)}`` term used for the functional gradient.
    """

    node_cost: np.ndarray
    noise: NoiseModel
    first_index: int
    lam: float
    node_slope: np.ndarray | None = field(default=None)

    @property
    def spacing(self) -> float:
        return self.noise.spacing

    def _average(self, table: np.ndarray, gvals) -> np.ndarray:
        n = self.noise
        return kernels.smoothed_interp(table, gvals, n.spacing, n.sigma, n.radius, self.first_index)

    def distortion(self, gvals) -> np.ndarray:
        return self._average(self.node_cost, gvals)

    def __call__(self, gvals) -> np.ndarray:
        """``J_k(x)`` for channel inputs of shape (K, N)."""
        g = np.atleast_2d(np.asarray(gvals, dtype=float))
        return self.distortion(g) + self.lam * g * g

    def functional_gradient(self, gvals) -> np.ndarray:
        """Derivative of ``J(x)`` with respect to the channel input ``g(x)``."""
        if self.node_slope is None:
            raise InvalidStateError("cost table was built without the slope term")
        g = np.atleast_2d(np.asarray(gvals, dtype=float))
        s = self._average(self.node_slope, g)
        return 2.0 * self.lam * g - 2.0 * s


def _slope_along_rows(w: np.ndarray, dy: float) -> np.ndarray:
    """Central differences along axis 0, one-sided at the ends."""
    return np.gradient(w, dy, axis=0)


class SideInfoSetting:
    """One encoder, decoder with side information ``Z``."""

    n_encoders = 1

    def __init__(self, problem: SideInfoProblem):
        self.problem = problem
        joint = problem.joint
        self.x = joint.points(0)
        self.fx = joint.marginal(0)
        # cond[x, z] = f(z | x)
        self.cond = joint.conditional(given=0)
        self.noise = problem.noise
        self.lambdas = (problem.lam,)
        self.power_targets = (problem.power_target,)

    def source_points(self, i: int = 0) -> np.ndarray:
        return self.x

    def source_weights(self, i: int = 0) -> np.ndarray:
        return self.fx

    def with_lambdas(self, lambdas: Sequence[float]) -> "SideInfoSetting":
        p = self.problem
        return SideInfoSetting(SideInfoProblem(p.joint, p.noise, lambdas[0], p.power_target))

    def build_decoders(self, encoders: Sequence[Encoder]) -> tuple[DecoderTable, ...]:
        return (build_decoder_side_info(encoders[0], self.problem.joint, self.noise),)

    def cost_table(
        self,
        encoders: Sequence[Encoder],
        decoders: Sequence[DecoderTable],
        i: int = 0,
        slope: bool = False,
    ) -> CostTable:
        if not decoders:
            raise InvalidStateError("decoder has not been built")
        dec = decoders[0]
        w = dec.values
        x = self.x[None, :]
        a = w @ self.cond.T
        b = (w * w) @ self.cond.T
        c = x * x - 2.0 * x * a + b
        e = None
        if slope:
            wp = _slope_along_rows(w, self.noise.spacing)
            e = x * (wp @ self.cond.T) - (wp * w) @ self.cond.T
        return CostTable(c, self.noise, dec.y_index0, self.problem.lam, e)

    def breakdown(
        self,
        encoders: Sequence[Encoder],
        decoders: Sequence[DecoderTable],
        temperature: float = 0.0,
        h0: float = 0.0,
        table: CostTable | None = None,
        table_index: int = 0,
    ) -> CostBreakdown:
        """Full cost; ``table`` may be a current cost table of the encoder."""
        enc = encoders[0]
        if table is None:
            table = self.cost_table(encoders, decoders)
        g, p = encoder_arrays(enc, self.x)
        dist = math.fsum(self.fx * np.sum(p * table.distortion(g), axis=0))
        power = math.fsum(self.fx * np.sum(p * g * g, axis=0))
        ent = conditional_entropy(enc, self.problem.joint)
        return make_breakdown(
            dist, (power,), self.lambdas, self.power_targets, ent, temperature, h0, (p.shape[0],)
        )


class DistributedSetting:
    """Two encoders observing ``X1`` and ``X2``; one decoder sees both outputs."""

    n_encoders = 2

    def __init__(self, problem: DistributedProblem):
        self.problem = problem
        joint = problem.joint
        self.xs = (joint.points(0), joint.points(1))
        self.fs = (joint.marginal(0), joint.marginal(1))
        # conds[i][x_i, x_other] = f(x_other | x_i)
        self.conds = (joint.conditional(given=0), joint.conditional(given=1))
        self.noises = (problem.noise1, problem.noise2)
        self.lambdas = (problem.lam1, problem.lam2)
        self.power_targets = tuple(problem.power_targets)
        gammas = target_components(problem.objective, joint)
        weights = [1.0, problem.eta] if problem.is_reconstruction else [1.0]
        self.components = list(zip(weights, gammas))

    def source_points(self, i: int) -> np.ndarray:
        return self.xs[i]

    def source_weights(self, i: int) -> np.ndarray:
        return self.fs[i]

    def with_lambdas(self, lambdas: Sequence[float]) -> "DistributedSetting":
        p = self.problem
        return DistributedSetting(
            DistributedProblem(
                p.joint, p.noise1, p.noise2, lambdas[0], lambdas[1], p.eta, p.objective, p.power_targets
            )
        )

    def build_decoders(self, encoders: Sequence[Encoder]) -> tuple[DecoderTable, ...]:
        p = self.problem
        return build_decoder_distributed(
            encoders[0], encoders[1], p.joint, p.noise1, p.noise2, target=p.objective
        )

    def _other_likelihood(self, encoders, decoders, i: int) -> np.ndarray:
        o = 1 - i
        dec = decoders[0]
        first = dec.z_index0 if o == 1 else dec.y_index0
        n_rows = dec.values.shape[o]
        lik, _ = channel_likelihood(encoders[o], self.xs[o], self.noises[o], (first, n_rows))
        return lik

    def cost_table(
        self,
        encoders: Sequence[Encoder],
        decoders: Sequence[DecoderTable],
        i: int = 0,
        slope: bool = False,
    ) -> CostTable:
        if not decoders:
            raise InvalidStateError("decoders have not been built")
        lik = self._other_likelihood(encoders, decoders, i)
        cond = self.conds[i]
        noise = self.noises[i]
        c = 0.0
        e = 0.0 if slope else None
        for (q, gamma), dec in zip(self.components, decoders):
            w = dec.values if i == 0 else dec.values.T
            gam = gamma if i == 0 else gamma.T
            cg = cond * gam
            v = w @ lik
            u = (w * w) @ lik
            c = c + q * (np.sum(cg * gam, axis=1)[None, :] - 2.0 * v @ cg.T + u @ cond.T)
            if slope:
                wp = _slope_along_rows(w, noise.spacing)
                e = e + q * ((wp @ lik) @ cg.T - ((wp * w) @ lik) @ cond.T)
        first = decoders[0].y_index0 if i == 0 else decoders[0].z_index0
        return CostTable(c, noise, first, self.lambdas[i], e)

    def breakdown(
        self,
        encoders: Sequence[Encoder],
        decoders: Sequence[DecoderTable],
        temperature: float = 0.0,
        h0: float = 0.0,
        table: CostTable | None = None,
        table_index: int = 0,
    ) -> CostBreakdown:
        """Full cost; ``table`` may be a current cost table of encoder ``table_index``."""
        if table is None:
            table = self.cost_table(encoders, decoders, table_index)
        i = table_index
        gi, pi = encoder_arrays(encoders[i], self.xs[i])
        dist = math.fsum(self.fs[i] * np.sum(pi * table.distortion(gi), axis=0))
        powers = []
        ks = []
        ent = 0.0
        for i in range(2):
            g, p = encoder_arrays(encoders[i], self.xs[i])
            powers.append(math.fsum(self.fs[i] * np.sum(p * g * g, axis=0)))
            ks.append(p.shape[0])
            ent += conditional_entropy(encoders[i], self.problem.joint, axis=i)
        return make_breakdown(dist, powers, self.lambdas, self.power_targets, ent, temperature, h0, ks)


Setting = Union[SideInfoSetting, DistributedSetting]


def make_setting(problem) -> Setting:
    if isinstance(problem, SideInfoProblem):
        return SideInfoSetting(problem)
    if isinstance(problem, DistributedProblem):
        return DistributedSetting(problem)
    raise InvalidArgumentError(f"unknown problem type {type(problem).__name__}")


# --- direct evaluation -------------------------------------------------------


def _reached_rows(g: float, noise: NoiseModel, index0: int, n_rows: int) -> dict[int, float]:
    """Table rows reached from channel input ``g`` and their probabilities."""
    dy, sigma, radius = noise.spacing, noise.sigma, noise.radius
    floor_val = math.exp(-0.5 * (radius / sigma) ** 2)
    weights: dict[int, float] = {}
    for node in range(math.floor((g - radius) / dy), math.ceil((g + radius) / dy) + 1):
        d = node * dy - g
        if abs(d) < radius:
            rr = min(max(node - index0, 0), n_rows - 1)
            weights[rr] = weights.get(rr, 0.0) + max(math.exp(-0.5 * (d / sigma) ** 2) - floor_val, 0.0)
    total = math.fsum(weights.values())
    return {r: v / total for r, v in weights.items()}


def pointwise_cost_side_info(
    problem: SideInfoProblem, x_index: int, model_k: int, decoder: DecoderTable | None, encoder: Encoder
) -> float:
    """``J_k(x)`` summed directly over noise and side-information gridpoints."""
    if decoder is None:
        raise InvalidStateError("decoder has not been built")
    x = problem.joint.points(0)
    g, _ = encoder_arrays(encoder, x)
    gk = float(g[model_k, x_index])
    cond = problem.joint.conditional(given=0)[x_index]
    xv = x[x_index]
    total = 0.0
    for r, wt in _reached_rows(gk, problem.noise, decoder.y_index0, len(decoder.y_grid)).items():
        total += wt * float(np.dot(cond, (xv - decoder.values[r]) ** 2))
    return total + problem.lam * gk * gk


def pointwise_cost_distributed(
    problem: DistributedProblem,
    encoder_index: int,
    x_index: int,
    model_k: int,
    encoders: Sequence[Encoder],
    decoders: Sequence[DecoderTable] | None,
) -> float:
    """``J_{k_i}(x_i)`` summed directly over the other source, its model and both noises."""
    if not decoders:
        raise InvalidStateError("decoders have not been built")
    i, o = encoder_index, 1 - encoder_index
    joint = problem.joint
    noises = (problem.noise1, problem.noise2)
    xs = (joint.points(0), joint.points(1))
    g, _ = encoder_arrays(encoders[i], xs[i])
    gk = float(g[model_k, x_index])
    cond = joint.conditional(given=i)[x_index]
    dec0 = decoders[0]
    index0 = (dec0.y_index0, dec0.z_index0)
    n_rows = dec0.values.shape
    lik, _ = channel_likelihood(encoders[o], xs[o], noises[o], (index0[o], n_rows[o]))
    gammas = target_components(problem.objective, joint)
    weights = [1.0, problem.eta] if problem.is_reconstruction else [1.0]
    total = 0.0
    for r, wt in _reached_rows(gk, noises[i], index0[i], n_rows[i]).items():
        for q, gamma, dec in zip(weights, gammas, decoders):
            w_line = dec.values[r, :] if i == 0 else dec.values[:, r]
            gam = gamma[x_index, :] if i == 0 else gamma[:, x_index]
            err = (gam[None, :] - w_line[:, None]) ** 2
            total += wt * q * float(np.sum(lik * err * cond[None, :]))
    lam = problem.lam1 if i == 0 else problem.lam2
    return total + lam * gk * gk


def lagrangian_side_info(
    problem: SideInfoProblem,
    encoder: Encoder,
    decoder: DecoderTable | None,
    temperature: float = 0.0,
    h0: float = 0.0,
) -> CostBreakdown:
    if decoder is None:
        raise InvalidStateError("decoder has not been built")
    return SideInfoSetting(problem).breakdown((encoder,), (decoder,), temperature, h0)


def lagrangian_distributed(
    problem: DistributedProblem,
    enc1: Encoder,
    enc2: Encoder,
    decoders: Sequence[DecoderTable] | None,
    temperature: float = 0.0,
    h0: float = 0.0,
) -> CostBreakdown:
    if not decoders:
        raise InvalidStateError("decoders have not been built")
    return DistributedSetting(problem).breakdown((enc1, enc2), tuple(decoders), temperature, h0)
