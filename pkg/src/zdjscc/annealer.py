"""Deterministic annealing over piecewise-affine encoders.

The loop works on any setting from :mod:`zdjscc.cost`.  At each temperature
the current models are duplicated and jittered, the system is driven to
thermal equilibrium (decoder rebuild, Gibbs associations, one line-searched
gradient step per model, repeated until the free energy settles), and models
that ended up on top of each other are merged.  Below ``t_min`` every source
point is handed to its cheapest model.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .cost import CostBreakdown, CostTable
from .errors import InvalidParameterError, InvalidStateError
from .mapping import DecoderTable, DeterministicEncoder, LocalAffineModel, PiecewiseEncoder, encoder_arrays

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnealConfig:
    t_max: float = 100.0
    t_min: float = 1e-4
    alpha: float = 0.95
    epsilon: float = 0.01
    delta_f: float = 1e-5
    delta_g: float = 1e-3
    max_models: int = 64
    rng_seed: int = 0
    max_sweeps: int = 500
    fd_step: float = 1e-4
    max_halvings: int = 20
    max_doublings: int = 10
    max_restarts: int = 3
    final_sweeps: int = 2
    max_extrapolations: int = 8

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max):
            raise InvalidParameterError("need 0 < t_min < t_max")
        if not (0 < self.alpha < 1):
            raise InvalidParameterError("alpha must lie in (0, 1)")
        for name in ("epsilon", "delta_f", "delta_g", "fd_step"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.max_models < 1 or self.max_sweeps < 1:
            raise InvalidParameterError("max_models and max_sweeps must be >= 1")


@dataclass(frozen=True, eq=False)
class AnnealState:
    """Snapshot of the annealing system.

    ``decoders`` and ``cost`` are ``None`` right after an operation that
    invalidates them (duplication, merging); ``history`` lists the free
    energy after every sub-step of the last equilibrium run.
    """

    temperature: float
    encoders: tuple[PiecewiseEncoder, ...]
    decoders: tuple[DecoderTable, ...] | None = None
    cost: CostBreakdown | None = None
    trace: tuple[CostBreakdown, ...] = ()
    history: tuple[float, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def n_models(self) -> tuple[int, ...]:
        return tuple(e.n_models for e in self.encoders)


def gibbs_probabilities(costs: np.ndarray, temperature: float) -> np.ndarray:
    """Column-wise ``exp(-J/T)`` normalization, shifted by the column minimum."""
    if not temperature > 0:
        raise InvalidStateError("Gibbs update needs T > 0; use zero_entropy_finalize at T = 0")
    costs = np.atleast_2d(costs)
    z = np.exp(-(costs - costs.min(axis=0, keepdims=True)) / temperature)
    return z / z.sum(axis=0, keepdims=True)


def _require_decoders(state: AnnealState) -> tuple[DecoderTable, ...]:
    if state.decoders is None:
        raise InvalidStateError("decoders are stale; rebuild them first")
    return state.decoders


def gibbs_update(setting, state: AnnealState) -> tuple[PiecewiseEncoder, ...]:
    """Gibbs associations for every encoder, one encoder after the other."""
    decoders = _require_decoders(state)
    encoders = list(state.encoders)
    for i in range(setting.n_encoders):
        table = setting.cost_table(encoders, decoders, i)
        g, _ = encoder_arrays(encoders[i], setting.source_points(i))
        encoders[i] = encoders[i].replace(assoc=gibbs_probabilities(table(g), state.temperature))
    return tuple(encoders)


def _model_objective(table: CostTable, x: np.ndarray, weight: np.ndarray, params) -> float:
    g = params[0] * x + params[1]
    return float(np.dot(weight, table(g[None, :])[0]))


def _parameter_gradient(table: CostTable, x, weight, params, h: float) -> np.ndarray:
    """``sum_x f(x) p(k|x) dJ_k(x)/dphi`` with central differences of ``J_k``."""
    a, b = params
    g = a * x + b
    probes = np.stack([g + h * x, g - h * x, g + h, g - h])
    j = table(probes)
    d_slope = (j[0] - j[1]) / (2 * h)
    d_int = (j[2] - j[3]) / (2 * h)
    return np.array([np.dot(weight, d_slope), np.dot(weight, d_int)])


def _line_search(objective: Callable[[np.ndarray], float], params, direction, f0, cfg) -> tuple[np.ndarray, float]:
    """Step from 1 along ``direction``: double while it helps, otherwise halve."""
    step = 1.0
    best = objective(params + step * direction)
    if best < f0:
        for _ in range(cfg.max_doublings):
            trial = objective(params + 2 * step * direction)
            if not trial < best:
                break
            step *= 2
            best = trial
        return params + step * direction, best
    for _ in range(cfg.max_halvings):
        step *= 0.5
        trial = objective(params + step * direction)
        if trial < f0:
            return params + step * direction, trial
    return params, f0


def _step_model(table: CostTable, x, fx, enc: PiecewiseEncoder, k: int, cfg: AnnealConfig) -> np.ndarray:
    weight = fx * enc.assoc[k]
    params = enc.params[k].copy()
    grad = _parameter_gradient(table, x, weight, params, cfg.fd_step)
    if not np.any(grad) or not np.all(np.isfinite(grad)):
        return params
    f0 = _model_objective(table, x, weight, params)
    # unit-length direction: the raw gradient scales with the cost, which
    # spans orders of magnitude across settings and power levels
    direction = -grad / np.linalg.norm(grad)
    new, f1 = _line_search(lambda p: _model_objective(table, x, weight, p), params, direction, f0, cfg)
    if f1 >= f0:
        log.debug("line search failed for model %d; parameters kept", k)
    return new


def model_gradient_step(
    setting,
    state: AnnealState,
    model_k: int,
    encoder_index: int = 0,
    config: AnnealConfig | None = None,
    table: CostTable | None = None,
) -> LocalAffineModel:
    """One line-searched gradient step on the parameters of one local model."""
    cfg = config or AnnealConfig()
    decoders = _require_decoders(state)
    if table is None:
        table = setting.cost_table(state.encoders, decoders, encoder_index)
    enc = state.encoders[encoder_index]
    a, b = _step_model(
        table, setting.source_points(encoder_index), setting.source_weights(encoder_index), enc, model_k, cfg
    )
    return LocalAffineModel(float(a), float(b))


def free_energy_gradient(setting, state: AnnealState, encoder_index: int = 0, h: float = 1e-4) -> np.ndarray:
    """Gradient of F with respect to every (slope, intercept), decoder and associations held fixed."""
    decoders = _require_decoders(state)
    table = setting.cost_table(state.encoders, decoders, encoder_index)
    enc = state.encoders[encoder_index]
    x = setting.source_points(encoder_index)
    fx = setting.source_weights(encoder_index)
    return np.array([_parameter_gradient(table, x, fx * enc.assoc[k], enc.params[k], h) for k in range(enc.n_models)])


def _sweep(setting, encoders: list, temperature: float, h0: float, cfg: AnnealConfig, hard: bool, history: list, decoders=None):
    if decoders is None:
        decoders = setting.build_decoders(encoders)
    for i in range(setting.n_encoders):
        table = setting.cost_table(encoders, decoders, i)
        history.append(setting.breakdown(encoders, decoders, temperature, h0, table, i).free_energy)
        x = setting.source_points(i)
        fx = setting.source_weights(i)
        enc = encoders[i]
        costs = table(enc.values(x))
        if hard:
            assoc = np.zeros_like(costs)
            assoc[np.argmin(costs, axis=0), np.arange(x.size)] = 1.0
        else:
            assoc = gibbs_probabilities(costs, temperature)
        enc = enc.replace(assoc=assoc)
        encoders[i] = enc
        history.append(setting.breakdown(encoders, decoders, temperature, h0, table, i).free_energy)
        params = enc.params.copy()
        for k in range(enc.n_models):
            params[k] = _step_model(table, x, fx, enc, k, cfg)
            enc = enc.replace(params=params.copy())
            encoders[i] = enc
            history.append(setting.breakdown(encoders, decoders, temperature, h0, table, i).free_energy)
    return decoders, setting.breakdown(encoders, decoders, temperature, h0)


def _extrapolate(setting, before, after, temperature: float, h0: float, cfg: AnnealConfig, history: list):
    """Continue along a sweep's net parameter move while F keeps falling.

    Alternating encoder and decoder updates crawl when the two are tightly
    coupled: with the decoder frozen, each encoder step is short because the
    decoder is already matched to the old encoder.  Every trial here rebuilds
    the decoders, so accepted points lower F.  Associations are held fixed.
    """
    decoders = setting.build_decoders(after)
    best = (after, decoders, setting.breakdown(after, decoders, temperature, h0))
    history.append(best[2].free_energy)
    if any(a.n_models != b.n_models for a, b in zip(after, before)):
        return best
    moves = [a.params - b.params for a, b in zip(after, before)]
    if not any(np.any(m) for m in moves):
        return best
    step = 1.0
    for _ in range(cfg.max_extrapolations):
        trial = [e.replace(params=e.params + step * m) for e, m in zip(after, moves)]
        dec = setting.build_decoders(trial)
        cost = setting.breakdown(trial, dec, temperature, h0)
        if not cost.free_energy < best[2].free_energy:
            break
        best = (trial, dec, cost)
        history.append(cost.free_energy)
        step *= 2.0
    return best


def thermal_equilibrium(
    setting,
    state: AnnealState,
    delta_f: float | None = None,
    config: AnnealConfig | None = None,
    h0: float = 0.0,
    hard: bool = False,
    max_sweeps: int | None = None,
) -> AnnealState:
    """Repeat sweeps until the free-energy drop is at most ``delta_f`` times the distortion.

    A sweep rebuilds the decoder(s), then for each encoder in turn updates its
    associations and takes one gradient step per model.  The sweep's net
    parameter move is then extrapolated (see ``_extrapolate``).  With
    ``hard=True`` associations are argmin assignments instead of Gibbs
    distributions.
    """
    cfg = config or AnnealConfig()
    delta_f = cfg.delta_f if delta_f is None else delta_f
    cap = cfg.max_sweeps if max_sweeps is None else max_sweeps
    encoders = list(state.encoders)
    history: list[float] = []
    warnings = list(state.warnings)
    f_old = None
    decoders, cost, fresh = None, None, None
    for sweep in range(cap):
        start = len(history)
        before = list(encoders)
        decoders, cost = _sweep(setting, encoders, state.temperature, h0, cfg, hard, history, fresh)
        fresh = None
        if cfg.max_extrapolations > 0:
            encoders, decoders, cost = _extrapolate(setting, before, encoders, state.temperature, h0, cfg, history)
            encoders = list(encoders)
            fresh = decoders
        if f_old is None:
            f_old = history[start]
        # |F| is dominated by T*H at high temperature, so progress is measured
        # against the distortion, the part the sweeps actually move
        if f_old - cost.free_energy <= delta_f * abs(cost.distortion):
            break
        f_old = cost.free_energy
    else:
        if max_sweeps is None:
            msg = f"equilibrium not reached after {cap} sweeps at T={state.temperature:.6g}"
            log.warning(msg)
            warnings.append(msg)
    return replace(
        state,
        encoders=tuple(encoders),
        decoders=decoders,
        cost=cost,
        history=tuple(history),
        warnings=tuple(warnings),
    )


def duplicate_and_perturb(
    state: AnnealState, epsilon: float, rng: np.random.Generator, max_models: int = 64
) -> AnnealState:
    """Give every model a twin sharing its association mass, then jitter all parameters."""
    if any(2 * k > max_models for k in state.n_models):
        log.info("duplication skipped: %s models would exceed %d", state.n_models, max_models)
        return state
    encoders = []
    for enc in state.encoders:
        params = np.vstack([enc.params, enc.params])
        assoc = np.vstack([enc.assoc, enc.assoc]) * 0.5
        params = params + epsilon * rng.standard_normal(params.shape)
        encoders.append(PiecewiseEncoder(params, assoc))
    return replace(state, encoders=tuple(encoders), decoders=None, cost=None)


def _merge_encoder(enc: PiecewiseEncoder, delta_g: float) -> PiecewiseEncoder:
    params = [p for p in enc.params]
    assoc = [a.copy() for a in enc.assoc]
    changed = True
    while changed:
        changed = False
        for i in range(len(params)):
            for j in range(len(params) - 1, i, -1):
                if np.linalg.norm(params[i] - params[j]) < delta_g:
                    assoc[i] = assoc[i] + assoc[j]
                    del params[j], assoc[j]
                    changed = True
    if len(params) == enc.n_models:
        return enc
    return PiecewiseEncoder(np.array(params), np.array(assoc))


def merge_models(state: AnnealState, delta_g: float) -> AnnealState:
    """Fold models closer than ``delta_g`` into the lower-index survivor."""
    encoders = tuple(_merge_encoder(e, delta_g) for e in state.encoders)
    if all(a is b for a, b in zip(encoders, state.encoders)):
        return state
    return replace(state, encoders=encoders, decoders=None, cost=None)


def _drop_empty(enc: PiecewiseEncoder) -> PiecewiseEncoder:
    keep = enc.assoc.sum(axis=1) > 0
    if keep.all():
        return enc
    return PiecewiseEncoder(enc.params[keep], enc.assoc[keep])


@dataclass(frozen=True, eq=False)
class FinalResult:
    encoders: tuple[DeterministicEncoder, ...]
    decoders: tuple[DecoderTable, ...]
    cost: CostBreakdown
    piecewise: tuple[PiecewiseEncoder, ...]
    history: tuple[float, ...] = ()
    trace: tuple[CostBreakdown, ...] = ()
    warnings: tuple[str, ...] = field(default=())


def hard_assignments(setting, state: AnnealState) -> tuple[PiecewiseEncoder, ...]:
    """Assign every point to its cheapest model under the current decoders.

    Ties go to the lowest model index.  Encoders are processed in order, each
    seeing the new assignments of the ones before it.
    """
    decoders = _require_decoders(state)
    encoders = list(state.encoders)
    for i in range(setting.n_encoders):
        table = setting.cost_table(encoders, decoders, i)
        x = setting.source_points(i)
        costs = table(encoders[i].values(x))
        assoc = np.zeros_like(costs)
        assoc[np.argmin(costs, axis=0), np.arange(x.size)] = 1.0
        encoders[i] = encoders[i].replace(assoc=assoc)
    return tuple(encoders)


def zero_entropy_finalize(setting, state: AnnealState, config: AnnealConfig | None = None) -> FinalResult:
    """Hard-assign every point to its cheapest model and polish at T = 0."""
    cfg = config or AnnealConfig()
    if state.decoders is None:
        state = replace(state, decoders=setting.build_decoders(state.encoders))
    encoders = tuple(_drop_empty(e) for e in hard_assignments(setting, state))
    hard = replace(state, temperature=0.0, encoders=encoders, decoders=None, cost=None)
    hard = thermal_equilibrium(setting, hard, config=cfg, hard=True, max_sweeps=cfg.final_sweeps)
    pieces = tuple(_drop_empty(e) for e in hard.encoders)
    dets = []
    for i, enc in enumerate(pieces):
        x = setting.source_points(i)
        k = np.argmax(enc.assoc, axis=0)
        dets.append(DeterministicEncoder(enc.values(x)[k, np.arange(x.size)]))
    decoders = setting.build_decoders(dets)
    cost = setting.breakdown(dets, decoders)
    cost = replace(cost, n_models=tuple(e.n_models for e in pieces))
    return FinalResult(tuple(dets), decoders, cost, pieces, hard.history, state.trace, hard.warnings)


def initial_encoders(setting, rng: np.random.Generator) -> tuple[PiecewiseEncoder, ...]:
    """One random affine model per encoder."""
    out = []
    for i in range(setting.n_encoders):
        n = setting.source_points(i).size
        slope, intercept = rng.standard_normal(2) * (1.0, 0.1)
        out.append(PiecewiseEncoder.single(float(slope), float(intercept), n))
    return tuple(out)


def _cool(setting, cfg: AnnealConfig, state: AnnealState, rng, callback, watch_split: bool):
    """Cooling loop from ``state.temperature``; stops early on a split in the first two steps if asked."""
    trace = list(state.trace)
    temperature = state.temperature
    step = 0
    while temperature >= cfg.t_min:
        state = replace(state, temperature=temperature)
        state = duplicate_and_perturb(state, cfg.epsilon, rng, cfg.max_models)
        state = thermal_equilibrium(setting, state, config=cfg)
        state = merge_models(state, cfg.delta_g)
        if state.decoders is None:
            decoders = setting.build_decoders(state.encoders)
            state = replace(state, decoders=decoders, cost=setting.breakdown(state.encoders, decoders, temperature))
        trace.append(state.cost)
        state = replace(state, trace=tuple(trace))
        if callback is not None:
            callback(state)
        if watch_split and step < 2 and max(state.n_models) > 1:
            return state, True
        step += 1
        temperature *= cfg.alpha
    return state, False


def run_da(setting, config: AnnealConfig | None = None, callback=None) -> FinalResult:
    """Full annealing run from a single random model down to ``t_min``.

    If the models split within the first two temperatures, ``t_max`` was not
    above the first critical temperature and the run restarts at ``10 * t_max``
    (at most ``max_restarts`` times).
    """
    cfg = config or AnnealConfig()
    t_max = cfg.t_max
    rng = np.random.default_rng(cfg.rng_seed)
    warnings: list[str] = []
    for attempt in range(cfg.max_restarts + 1):
        state = AnnealState(t_max, initial_encoders(setting, rng))
        state = thermal_equilibrium(setting, state, config=cfg)
        state, split = _cool(setting, cfg, state, rng, callback, attempt < cfg.max_restarts)
        if not split:
            break
        msg = f"models split right below t_max={t_max:.6g}; restarting at {10 * t_max:.6g}"
        log.info(msg)
        warnings.append(msg)
        t_max *= 10.0
    result = zero_entropy_finalize(setting, state, cfg)
    return replace(result, warnings=tuple(warnings) + state.warnings + result.warnings)
