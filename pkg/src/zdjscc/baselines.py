"""Comparison optimizers: greedy descent, noisy channel relaxation, linear mappings.

Greedy descent works on free per-gridpoint encoder values.  Each sweep
rebuilds the MMSE decoder(s) and then moves every encoder value along the
pointwise functional gradient, with a per-point step that doubles after a
success and halves on failure.  With the decoder fixed the cost separates
over source points, so every accepted move lowers the Lagrangian.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .cost import CostBreakdown, DistributedSetting, SideInfoSetting
from .errors import InvalidParameterError, UnsupportedError
from .mapping import DecoderTable, DeterministicEncoder

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GreedyConfig:
    tol: float = 1e-6
    max_sweeps: int = 1000
    initial_step: float = 1.0
    max_halvings: int = 20


@dataclass(frozen=True, eq=False)
class GreedyResult:
    encoders: tuple[DeterministicEncoder, ...]
    decoders: tuple[DecoderTable, ...]
    cost: CostBreakdown
    history: tuple[float, ...] = ()
    sweeps: int = 0
    warnings: tuple[str, ...] = ()
    # NCR only: schedule level of every history entry, and each level's multipliers
    levels: tuple[int, ...] = ()
    level_lambdas: tuple[tuple[float, ...], ...] = ()


def random_smooth_encoder(x: np.ndarray, rng: np.random.Generator, scale: float = 1.0) -> DeterministicEncoder:
    """Random slope plus three random sinusoids, for greedy initialization."""
    slope = rng.standard_normal()
    amps = 0.5 * rng.standard_normal(3)
    freqs = rng.uniform(0.5, 3.0, 3)
    phases = rng.uniform(0.0, 2 * np.pi, 3)
    g = slope * x + np.sum(amps[:, None] * np.sin(freqs[:, None] * x[None, :] + phases[:, None]), axis=0)
    return DeterministicEncoder(scale * g)


def _descend_encoder(table, g: np.ndarray, steps: np.ndarray, cfg: GreedyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-point backtracking along ``-dJ/dg``; returns new values and step sizes."""
    j0 = table(g)[0]
    grad = table.functional_gradient(g)[0]
    new = g.copy()
    next_steps = steps.copy()
    pending = grad != 0
    trial_steps = steps.copy()
    for _ in range(cfg.max_halvings + 1):
        if not pending.any():
            break
        idx = np.nonzero(pending)[0]
        cand = g[idx] - trial_steps[idx] * grad[idx]
        vals = table(_scatter(g, idx, cand))[0][idx]
        ok = vals < j0[idx]
        acc = idx[ok]
        new[acc] = cand[ok]
        next_steps[acc] = 2.0 * trial_steps[acc]
        pending[acc] = False
        trial_steps[idx[~ok]] *= 0.5
    stuck = np.nonzero(pending)[0]
    next_steps[stuck] = trial_steps[stuck]
    return new, next_steps


def _scatter(g: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    out = g.copy()
    out[idx] = vals
    return out[None, :]


def greedy_descent(
    setting,
    init: Sequence[DeterministicEncoder],
    config: GreedyConfig | None = None,
) -> GreedyResult:
    """Alternate MMSE decoder rebuilds with encoder descent until the Lagrangian settles."""
    cfg = config or GreedyConfig()
    encoders = [DeterministicEncoder(e.values) for e in init]
    if len(encoders) != setting.n_encoders:
        raise InvalidParameterError(f"need {setting.n_encoders} initial encoder(s)")
    steps = [np.full(e.values.size, cfg.initial_step) for e in encoders]
    history: list[float] = []
    warnings: list[str] = []
    j_old = None
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        decoders = setting.build_decoders(encoders)
        for i in range(setting.n_encoders):
            table = setting.cost_table(encoders, decoders, i, slope=True)
            history.append(setting.breakdown(encoders, decoders, table=table, table_index=i).lagrangian)
            g, steps[i] = _descend_encoder(table, encoders[i].values, steps[i], cfg)
            encoders[i] = DeterministicEncoder(g)
            history.append(setting.breakdown(encoders, decoders, table=table, table_index=i).lagrangian)
        j_new = history[-1]
        if j_old is None:
            j_old = history[0]
        if j_old - j_new <= cfg.tol * abs(j_old):
            break
        j_old = j_new
    else:
        msg = f"greedy descent stopped at the {cfg.max_sweeps}-sweep cap"
        log.warning(msg)
        warnings.append(msg)
    decoders = setting.build_decoders(encoders)
    cost = setting.breakdown(encoders, decoders)
    history.append(cost.lagrangian)
    return GreedyResult(tuple(encoders), decoders, cost, tuple(history), sweeps, tuple(warnings))


# an NCR level counts as collapsed when an encoder keeps less than this
# fraction of the power it started the run with
COLLAPSE_FRACTION = 1e-3


@dataclass(frozen=True)
class NcrSchedule:
    """Power multipliers decrease geometrically by ``decay`` over ``steps`` levels.

    ``lambda_start`` refers to the first encoder's multiplier; ``None`` picks
    ``target / decay**steps`` so that the last level lands on the target.
    """

    lambda_start: float | None = None
    decay: float = 0.8
    steps: int = 50

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise InvalidParameterError("decay must lie in (0, 1)")
        if self.steps < 1:
            raise InvalidParameterError("steps must be >= 1")

    def levels(self, targets: Sequence[float]) -> list[tuple[float, ...]]:
        """Multipliers for every level; the last one equals ``targets``."""
        targets = tuple(float(t) for t in targets)
        if self.lambda_start is None:
            factors = [self.decay ** (k - self.steps) for k in range(1, self.steps + 1)]
        else:
            if self.lambda_start < targets[0]:
                raise InvalidParameterError("lambda_start must be >= the target multiplier")
            base = self.lambda_start / targets[0] if targets[0] > 0 else 1.0
            factors = [max(1.0, base * self.decay**k) for k in range(1, self.steps + 1)]
            factors[-1] = 1.0
        return [tuple(t * f for t in targets) for f in factors]


def ncr_run(
    setting,
    schedule: NcrSchedule,
    init: Sequence[DeterministicEncoder],
    config: GreedyConfig | None = None,
) -> GreedyResult:
    """Greedy descent at decreasing power multipliers, warm-started level to level.

    At a large multiplier the descent can drive an encoder to zero, and the
    zero map is stationary (the decoder then ignores the channel), so no later
    level could recover.  A level whose result keeps less than
    ``COLLAPSE_FRACTION`` of an encoder's initial power is therefore not
    adopted: the next level starts from the previous warm start again.  The
    final level is always adopted.

    The Lagrangian carries the constant ``-lambda * P_target``, so ``history``
    only descends within a level; ``levels`` tells the levels apart.
    """
    encoders = tuple(init)
    history: list[float] = []
    level_of: list[int] = []
    warnings: list[str] = []
    result = None
    levels = schedule.levels(setting.lambdas)
    skipped = 0
    floors = None
    for n, lambdas in enumerate(levels):
        level = setting if tuple(lambdas) == tuple(setting.lambdas) else setting.with_lambdas(lambdas)
        result = greedy_descent(level, encoders, config)
        if floors is None:
            floors = [COLLAPSE_FRACTION * p for p in level.breakdown(encoders, level.build_decoders(encoders)).powers]
        if n < len(levels) - 1 and any(p < f for p, f in zip(result.cost.powers, floors)):
            skipped += 1
            continue
        encoders = result.encoders
        history.extend(result.history)
        level_of.extend([n] * len(result.history))
        warnings.extend(result.warnings)
    if skipped:
        msg = f"{skipped} of {len(levels)} levels collapsed an encoder and were not adopted"
        log.info(msg)
        warnings.append(msg)
    return replace(
        result,
        history=tuple(history),
        warnings=tuple(warnings),
        levels=tuple(level_of),
        level_lambdas=tuple(tuple(float(v) for v in lam) for lam in levels),
    )


# --- linear mappings -----------------------------------------------------------


@dataclass(frozen=True)
class LinearSolution:
    gains: tuple[float, ...]
    distortion: float
    powers: tuple[float, ...]
    lagrangian: float
    method: str = "closed_form"


def _gaussian_params(setting) -> tuple[float, float]:
    fam = setting.problem.joint.gaussian
    if fam is None:
        raise UnsupportedError("closed-form linear analysis needs a jointly Gaussian source")
    return fam


def _objective_weights(setting) -> np.ndarray:
    """Matrix ``Q`` with distortion ``trace(Q @ error_cov)`` for linear targets."""
    p = setting.problem
    if p.is_reconstruction:
        return np.diag([1.0, p.eta])
    _, gamma = setting.components[0]
    joint = p.joint
    x1 = np.broadcast_to(joint.points(0)[:, None], gamma.shape).ravel()
    x2 = np.broadcast_to(joint.points(1)[None, :], gamma.shape).ravel()
    design = np.stack([x1, x2, np.ones_like(x1)], axis=1)
    coef, *_ = np.linalg.lstsq(design, gamma.ravel(), rcond=None)
    resid = np.max(np.abs(design @ coef - gamma.ravel()))
    if resid > 1e-9 * max(1.0, np.max(np.abs(gamma))) or abs(coef[2]) > 1e-9:
        raise UnsupportedError("closed-form linear analysis needs a linear target function")
    c = coef[:2]
    return np.outer(c, c)


def _error_covariance(cov: np.ndarray, gains: np.ndarray, noise_vars: np.ndarray) -> np.ndarray:
    a = np.diag(gains)
    s_yy = a @ cov @ a.T + np.diag(noise_vars)
    s_xy = cov @ a.T
    return cov - s_xy @ np.linalg.solve(s_yy, s_xy.T)


def linear_mmse_oracle(setting, gains: Sequence[float]) -> float:
    """Continuous-model distortion of ``g_i(x) = a_i x`` with the MMSE decoder."""
    var, rho = _gaussian_params(setting)
    gains = np.asarray(gains, dtype=float)
    if isinstance(setting, SideInfoSetting):
        s = var * (1.0 - rho * rho)
        nv = setting.noise.variance
        return s * nv / (gains[0] ** 2 * s + nv)
    cov = var * np.array([[1.0, rho], [rho, 1.0]])
    nvs = np.array([n.variance for n in setting.noises])
    err = _error_covariance(cov, gains, nvs)
    return float(np.trace(_objective_weights(setting) @ err))


def _solution(setting, gains, distortion, powers, method) -> LinearSolution:
    lag = distortion + math.fsum(l * (p - t) for l, p, t in zip(setting.lambdas, powers, setting.power_targets))
    return LinearSolution(tuple(float(a) for a in gains), float(distortion), tuple(float(p) for p in powers), lag, method)


def grid_linear_cost(setting, gains: Sequence[float]) -> CostBreakdown:
    """Grid cost of linear encoders with the tabulated MMSE decoder."""
    encs = [DeterministicEncoder(a * setting.source_points(i)) for i, a in enumerate(gains)]
    return setting.breakdown(encs, setting.build_decoders(encs))


def _closed_form(setting, powers) -> LinearSolution:
    var, rho = _gaussian_params(setting)
    if powers is not None:
        gains = [math.sqrt(p / var) for p in powers]
        d = linear_mmse_oracle(setting, gains)
        return _solution(setting, gains, d, [a * a * var for a in gains], "closed_form")
    if isinstance(setting, SideInfoSetting):
        lam = setting.lambdas[0]
        if lam <= 0:
            raise InvalidParameterError("the linear optimum needs lambda > 0 (or fixed powers)")
        s = var * (1.0 - rho * rho)
        nv = setting.noise.variance
        t = max(0.0, nv * (1.0 / (math.sqrt(var * nv * lam)) - 1.0 / s))
        gains = [math.sqrt(t)]
        d = linear_mmse_oracle(setting, gains)
        return _solution(setting, gains, d, [t * var], "closed_form")
    lams = np.asarray(setting.lambdas)
    if np.any(lams <= 0):
        raise InvalidParameterError("the linear optimum needs lambda_i > 0 (or fixed powers)")

    def lagr(t):
        t = np.maximum(t, 0.0)
        return linear_mmse_oracle(setting, np.sqrt(t)) + float(np.dot(lams, t)) * var

    best = None
    for start in ([1.0, 1.0], [10.0, 0.1], [0.1, 10.0], [100.0, 100.0]):
        res = minimize(lagr, start, method="L-BFGS-B", bounds=[(0, None), (0, None)], options={"ftol": 1e-15, "gtol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    gains = np.sqrt(np.maximum(best.x, 0.0))
    d = linear_mmse_oracle(setting, gains)
    return _solution(setting, gains, d, list(gains**2 * var), "closed_form")


def _numeric(setting, powers) -> LinearSolution:
    n = setting.n_encoders
    second = [float(np.dot(setting.source_weights(i), setting.source_points(i) ** 2)) for i in range(n)]
    if powers is not None:
        gains = [math.sqrt(p / m) for p, m in zip(powers, second)]
    else:
        if any(l <= 0 for l in setting.lambdas):
            raise InvalidParameterError("the linear optimum needs lambda > 0 (or fixed powers)")
        prior = grid_linear_cost(setting, [0.0] * n).distortion
        gains = [0.0] * n
        for _ in range(1 if n == 1 else 8):
            before = list(gains)
            for i in range(n):
                top = math.sqrt(max(prior, 1e-12) / (setting.lambdas[i] * second[i]))

                def lagr(a, i=i):
                    trial = list(gains)
                    trial[i] = a
                    return grid_linear_cost(setting, trial).lagrangian

                res = minimize_scalar(lagr, bounds=(0.0, top), method="bounded", options={"xatol": 1e-7 * top})
                gains[i] = float(res.x) if res.fun < lagr(gains[i]) else gains[i]
            if max(abs(a - b) for a, b in zip(gains, before)) < 1e-6:
                break
    cost = grid_linear_cost(setting, gains)
    return _solution(setting, gains, cost.distortion, cost.powers, "numeric")


def optimal_linear(setting, powers: Sequence[float] | None = None, method: str = "auto") -> LinearSolution:
    """Best ``g_i(x) = a_i x`` for the setting's multipliers, or at fixed ``powers``.

    ``method`` is ``"closed_form"`` (jointly Gaussian only), ``"numeric"``
    (grid search with decoder rebuilds) or ``"auto"``.
    """
    if method not in ("auto", "closed_form", "numeric"):
        raise InvalidParameterError(f"unknown method {method!r}")
    if method == "numeric":
        return _numeric(setting, powers)
    try:
        return _closed_form(setting, powers)
    except UnsupportedError:
        if method == "closed_form":
            raise
        return _numeric(setting, powers)
