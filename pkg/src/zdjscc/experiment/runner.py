"""Build settings from configs, dispatch optimizers and write result files."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..annealer import run_da
from ..baselines import (
    GreedyResult,
    LinearSolution,
    greedy_descent,
    ncr_run,
    optimal_linear,
    random_smooth_encoder,
)
from ..bounds import opta_distributed, opta_side_info
from ..cost import DistributedProblem, DistributedSetting, SideInfoProblem, SideInfoSetting
from ..errors import ConfigError, InvalidParameterError
from ..mapping import DecoderTable, DeterministicEncoder, write_encoder_csv
from ..prob_model import build_gaussian_mixture, build_joint_gaussian, build_noise
from .config import FUNCTIONS, METHODS, ExperimentConfig
from .montecarlo import McEstimate, Sampler, gaussian_sampler, mixture_sampler, monte_carlo_validate
from .report import METRIC_COLUMNS, MetricsRow, check_bounds, compare_table, db, metrics_record, write_csv, write_metrics

log = logging.getLogger(__name__)

# calibration accuracy on the linear CSNR, in dB
CALIBRATION_TOL_DB = 0.05
_BISECTION_TOL_DB = 1e-3


def build_source(cfg: ExperimentConfig):
    src = cfg.source
    if src.family == "gaussian":
        return build_joint_gaussian(src.rho, src.variance, cfg.spacing, cfg.support_sigmas)
    return build_gaussian_mixture(src.centers, src.mix_weights, src.covariance, cfg.spacing, cfg.support_sigmas)


def source_sampler(cfg: ExperimentConfig) -> Sampler:
    src = cfg.source
    if src.family == "gaussian":
        return gaussian_sampler(src.variance, src.rho)
    return mixture_sampler(src.centers, src.mix_weights, src.covariance)


class SettingFactory:
    """Builds the optimization setting for any multiplier vector, reusing grids."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.joint = build_source(cfg)
        step = cfg.noise_spacing or cfg.spacing
        self.noises = tuple(build_noise(v, step, cfg.support_sigmas) for v in cfg.noise_variances)

    @property
    def n_encoders(self) -> int:
        return 2 if self.cfg.is_distributed else 1

    def __call__(self, lambdas: Sequence[float]):
        cfg = self.cfg
        if not cfg.is_distributed:
            return SideInfoSetting(SideInfoProblem(self.joint, self.noises[0], lambdas[0]))
        objective = "reconstruction" if cfg.setting == "distributed_reconstruction" else FUNCTIONS[cfg.function]
        return DistributedSetting(
            DistributedProblem(self.joint, self.noises[0], self.noises[1], lambdas[0], lambdas[1], cfg.eta, objective)
        )


def _linear_csnrs(sol: LinearSolution) -> tuple[float, ...]:
    return tuple(db(p) for p in sol.powers)


def _marginal_lambdas(factory: SettingFactory, powers: Sequence[float]) -> tuple[float, ...]:
    """Multipliers ``-dD/dP_i`` of the linear scheme at fixed powers.

    The linear distortion is convex in each power, so these are the
    multipliers at which the unconstrained linear optimum lands on ``powers``.
    """
    probe = factory([1.0] * factory.n_encoders)
    out = []
    for i, p in enumerate(powers):
        h = 1e-4 * p
        up = list(powers)
        dn = list(powers)
        up[i] += h
        dn[i] -= h
        d_up = optimal_linear(probe, powers=up).distortion
        d_dn = optimal_linear(probe, powers=dn).distortion
        out.append(max(-(d_up - d_dn) / (2 * h), 0.0))
    return tuple(out)


def _bisect_common_lambda(factory: SettingFactory, target_db: float, start: float) -> float:
    """Common multiplier whose linear optimum has average CSNR ``target_db``."""

    def csnr(lam: float) -> float:
        sol = optimal_linear(factory([lam] * factory.n_encoders))
        return db(math.fsum(sol.powers) / len(sol.powers)) if sum(sol.powers) > 0 else -math.inf

    lo, hi = start / 4.0, start * 4.0
    for _ in range(40):
        if csnr(lo) >= target_db:
            break
        lo /= 4.0
    for _ in range(40):
        if csnr(hi) <= target_db:
            break
        hi *= 4.0
    mid = math.sqrt(lo * hi)
    for _ in range(100):
        mid = math.sqrt(lo * hi)
        c = csnr(mid)
        if abs(c - target_db) <= _BISECTION_TOL_DB:
            break
        if c > target_db:
            lo = mid
        else:
            hi = mid
    return mid


def calibrate_lambdas(cfg: ExperimentConfig, factory: SettingFactory) -> tuple[float, ...]:
    """Power multipliers for the config's power mode."""
    pw = cfg.power
    n = factory.n_encoders
    if pw.mode == "lambda":
        lams = (pw.lam1,) if n == 1 else (pw.lam1, pw.lam2 if pw.lam2 is not None else pw.lam1)
        return tuple(lams)
    if pw.mode == "total_calibrate":
        p = 10.0 ** (pw.csnr1 / 10.0)
        guess = sum(_marginal_lambdas(factory, [p] * n)) / n
        lam = _bisect_common_lambda(factory, pw.csnr1, max(guess, 1e-12))
        return (lam,) * n
    targets = [pw.csnr1] if n == 1 else [pw.csnr1, pw.csnr2]
    powers = [10.0 ** (t / 10.0) for t in targets]
    lams = _marginal_lambdas(factory, powers)
    if n == 1:
        lams = (_bisect_common_lambda(factory, pw.csnr1, max(lams[0], 1e-12)),)
    sol = optimal_linear(factory(lams))
    off = max(abs(c - t) for c, t in zip(_linear_csnrs(sol), targets))
    if off > CALIBRATION_TOL_DB:
        raise ConfigError(f"power calibration missed the CSNR targets by {off:.3f} dB")
    return tuple(lams)


def opta_bound(cfg: ExperimentConfig, powers: Sequence[float]) -> float | None:
    """Asymptotic distortion bound at the given powers, if one is known."""
    if cfg.source.family != "gaussian" or cfg.setting == "distributed_function":
        return None
    var, rho = cfg.source.variance, cfg.source.rho
    if cfg.setting == "side_info":
        return opta_side_info(rho, var, powers[0], cfg.noise_variances[0]).distortion_bound
    return opta_distributed(powers[0], powers[1], cfg.noise_variances, rho, cfg.eta, var).distortion_bound


@dataclass
class MethodResult:
    row: MetricsRow
    encoders: tuple[DeterministicEncoder, ...] = ()
    decoders: tuple[DecoderTable, ...] = ()
    trace_header: tuple[str, ...] = ()
    trace: list = field(default_factory=list)
    warnings: tuple[str, ...] = ()
    seconds: float = 0.0


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    lambdas: tuple[float, ...]
    setting: object
    methods: dict[str, MethodResult]

    @property
    def rows(self) -> list[MetricsRow]:
        return [m.row for m in self.methods.values()]


def _row(cfg: ExperimentConfig, method: str, cost, lambdas, n_models=()) -> MetricsRow:
    scale = 2.0 if cfg.setting == "distributed_reconstruction" else 1.0
    return MetricsRow(
        method,
        cfg.setting,
        float(cost.distortion),
        tuple(float(p) for p in cost.powers),
        float(cost.lagrangian),
        cfg.seed,
        scale,
        tuple(n_models),
        tuple(lambdas),
        opta_bound(cfg, cost.powers),
    )


def _greedy_trace(res: GreedyResult) -> list:
    return [(k, j) for k, j in enumerate(res.history)]


def _linear_encoders(setting, sol: LinearSolution) -> list[DeterministicEncoder]:
    return [DeterministicEncoder(a * setting.source_points(i)) for i, a in enumerate(sol.gains)]


def _run_method(method: str, cfg: ExperimentConfig, setting, lambdas, linear: LinearSolution, progress) -> MethodResult:
    rng = np.random.default_rng(cfg.seed)
    if method == "da":
        res = run_da(setting, cfg.anneal, progress)
        trace = []
        for c in res.trace:
            ks = list(c.n_models) + [None] * (2 - len(c.n_models))
            ps = list(c.powers) + [None] * (2 - len(c.powers))
            trace.append((c.temperature, ks[0], ks[1], c.distortion, ps[0], ps[1], c.lagrangian, c.entropy, c.free_energy))
        header = ("T", "K1", "K2", "D", "P1", "P2", "J", "H", "F")
        return MethodResult(_row(cfg, method, res.cost, lambdas, res.cost.n_models), res.encoders, res.decoders, header, trace, res.warnings)
    if method == "greedy":
        init = [
            random_smooth_encoder(setting.source_points(i), rng, cfg.greedy_init_scale * max(a, 1e-3))
            for i, a in enumerate(linear.gains)
        ]
        res = greedy_descent(setting, init, cfg.greedy)
        return MethodResult(_row(cfg, method, res.cost, lambdas), res.encoders, res.decoders, ("step", "J"), _greedy_trace(res), res.warnings)
    if method == "ncr":
        if cfg.ncr_init == "linear":
            init = _linear_encoders(setting, linear)
        else:
            init = [
                random_smooth_encoder(setting.source_points(i), rng, cfg.greedy_init_scale * max(a, 1e-3))
                for i, a in enumerate(linear.gains)
            ]
        res = ncr_run(setting, cfg.ncr, init, cfg.greedy)
        names = tuple(f"lambda{i + 1}" for i in range(setting.n_encoders))
        trace = [(k, n, *res.level_lambdas[n], j) for k, (n, j) in enumerate(zip(res.levels, res.history))]
        return MethodResult(_row(cfg, method, res.cost, lambdas), res.encoders, res.decoders, ("step", "level", *names, "J"), trace, res.warnings)
    if method == "linear":
        encs = _linear_encoders(setting, linear)
        decs = setting.build_decoders(encs)
        return MethodResult(_row(cfg, method, setting.breakdown(encs, decs), lambdas), tuple(encs), decs)
    if method == "opta":
        bound = opta_bound(cfg, linear.powers)
        if bound is None:
            raise ConfigError("experiment.method: no asymptotic bound is known for this setting")
        scale = 2.0 if cfg.setting == "distributed_reconstruction" else 1.0
        row = MetricsRow("opta", cfg.setting, bound, linear.powers, None, cfg.seed, scale, (), tuple(lambdas), bound)
        return MethodResult(row)
    raise ConfigError(f"experiment.method: unknown method {method!r}")


def run_experiment(
    cfg: ExperimentConfig,
    output_dir: str | Path | None = None,
    progress: Callable | None = None,
) -> ExperimentResult:
    """Run every configured method and, if ``output_dir`` is given, write the result files.

    Methods always run in the order DA, NCR, greedy, linear, OPTA.  Any
    optimizer warning is logged and kept in the result.
    """
    factory = SettingFactory(cfg)
    lambdas = calibrate_lambdas(cfg, factory)
    setting = factory(lambdas)
    linear = optimal_linear(setting)
    methods = [m for m in METHODS if m in cfg.methods]
    if "opta" in methods and opta_bound(cfg, linear.powers) is None:
        if cfg.methods != METHODS:
            raise ConfigError("experiment.method: no asymptotic bound is known for this setting")
        methods.remove("opta")
    results: dict[str, MethodResult] = {}
    for m in methods:
        t0 = time.perf_counter()
        r = _run_method(m, cfg, setting, lambdas, linear, progress if m == "da" else None)
        r.seconds = time.perf_counter() - t0
        for w in r.warnings:
            log.warning("%s: %s", m, w)
        results[m] = r
    out = ExperimentResult(cfg, lambdas, setting, results)
    check_bounds(out.rows)
    if output_dir is not None:
        write_outputs(out, output_dir)
    return out


def run_sweep(
    cfg: ExperimentConfig,
    output_dir: str | Path | None = None,
    progress: Callable | None = None,
) -> list[ExperimentResult]:
    """Run the experiment once per target CSNR in ``cfg.sweep_csnr``.

    Each point writes its own files under ``csnr_<target>/``; ``sweep.csv``
    collects every metric row with its target in the first column.
    """
    if not cfg.sweep_csnr:
        raise ConfigError("experiment.sweep_csnr: no sweep values given")
    results = []
    for target in cfg.sweep_csnr:
        point = replace(cfg, power=replace(cfg.power, csnr1=target), sweep_csnr=())
        sub = None if output_dir is None else Path(output_dir) / f"csnr_{target:g}"
        results.append(run_experiment(point, sub, progress))
    if output_dir is not None:
        records = [[repr(float(t))] + metrics_record(row) for t, r in zip(cfg.sweep_csnr, results) for row in r.rows]
        write_csv(Path(output_dir) / "sweep.csv", ("target_csnr",) + METRIC_COLUMNS, records)
    return results


def write_outputs(res: ExperimentResult, output_dir: str | Path) -> None:
    """Metrics, timings, traces, encoders, channel-space samples and the comparison table.

    Timings go to their own file so that every other file is reproducible
    byte for byte.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = res.config
    setting = res.setting
    write_metrics(out / "metrics.csv", res.rows)
    write_csv(out / "timings.csv", ("method", "seconds"), [(m, r.seconds) for m, r in res.methods.items()])
    for m, r in res.methods.items():
        if r.trace_header:
            write_csv(out / f"trace_{m}.csv", r.trace_header, r.trace)
        for i, enc in enumerate(r.encoders):
            name = m if len(r.encoders) == 1 else f"{m}_{i + 1}"
            write_encoder_csv(out / f"encoder_{name}.csv", setting.source_points(i), enc.values)
        if r.warnings:
            (out / f"warnings_{m}.txt").write_text("\n".join(r.warnings) + "\n")
    if cfg.is_distributed:
        x = setting.source_points(0)
        cols = ["x"]
        data = [x]
        for m, r in res.methods.items():
            if len(r.encoders) == 2:
                cols += [f"{m}_g1", f"{m}_g2"]
                data += [r.encoders[0].values, np.interp(x, setting.source_points(1), r.encoders[1].values)]
        write_csv(out / "channel_space.csv", cols, zip(*[[float(v) for v in d] for d in data]))
    rows = [r.row for m, r in res.methods.items() if m != "opta"]
    opta = res.methods["opta"].row if "opta" in res.methods else None
    if rows:
        text, table = compare_table(rows, opta)
        (out / "comparison.txt").write_text(text)
        (out / "comparison.csv").write_text(table)
    elif opta is not None:
        write_csv(out / "comparison.csv", ("Method", "SNR (dB)"), [("OPTA", f"{opta.snr:.2f}")])


@dataclass(frozen=True)
class ValidationRow:
    method: str
    grid_distortion: float
    estimate: McEstimate

    @property
    def agrees(self) -> bool:
        return self.estimate.agrees_with(self.grid_distortion)


def validate_experiment(
    res: ExperimentResult, samples: int | None = None, seed: int | None = None, output_dir: str | Path | None = None
) -> list[ValidationRow]:
    """Monte Carlo check of every method's final mappings."""
    cfg = res.config
    samples = samples or cfg.mc_samples
    seed = cfg.seed if seed is None else seed
    sampler = source_sampler(cfg)
    rows = []
    for m, r in res.methods.items():
        if not r.encoders:
            continue
        est = monte_carlo_validate(r.encoders, r.decoders, res.setting, samples, seed, sampler)
        rows.append(ValidationRow(m, r.row.distortion, est))
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(
            out / "validation.csv",
            ("method", "grid_distortion", "mc_distortion", "mc_stderr", "samples", "agrees"),
            [(v.method, v.grid_distortion, v.estimate.distortion, v.estimate.stderr, v.estimate.samples, str(v.agrees)) for v in rows],
        )
    return rows
