"""Experiment configuration: INI text with dotted ``section.key`` overrides."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from ..annealer import AnnealConfig
from ..baselines import GreedyConfig, NcrSchedule
from ..errors import ConfigError, ZdjsccError

SETTINGS = ("side_info", "distributed_reconstruction", "distributed_function")
METHODS = ("da", "ncr", "greedy", "linear", "opta")
POWER_MODES = ("lambda", "calibrate", "total_calibrate")
FUNCTIONS = {
    "difference": lambda x1, x2: x1 - x2,
    "sum": lambda x1, x2: x1 + x2,
    "product": lambda x1, x2: x1 * x2,
}


@dataclass(frozen=True)
class SourceSpec:
    family: str = "gaussian"
    rho: float = 0.0
    variance: float = 1.0
    centers: tuple[tuple[float, float], ...] = ()
    mix_weights: tuple[float, ...] = ()
    covariance: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))


@dataclass(frozen=True)
class PowerSpec:
    """How the power multipliers are chosen.

    ``lambda`` uses ``lam1``/``lam2`` as given.  ``calibrate`` searches for the
    multipliers at which the optimal linear scheme reaches ``csnr1`` (and
    ``csnr2`` for two encoders).  ``total_calibrate`` ties both multipliers and
    targets the average power ``csnr1``.
    """

    mode: str = "lambda"
    lam1: float = 1e-3
    lam2: float | None = None
    csnr1: float | None = None
    csnr2: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    setting: str = "side_info"
    function: str = "difference"
    eta: float = 1.0
    source: SourceSpec = SourceSpec()
    noise_variances: tuple[float, float] = (1.0, 1.0)
    power: PowerSpec = PowerSpec()
    methods: tuple[str, ...] = METHODS
    spacing: float = 0.04
    noise_spacing: float | None = None
    support_sigmas: float = 5.0
    seed: int = 0
    anneal: AnnealConfig = AnnealConfig()
    ncr: NcrSchedule = NcrSchedule()
    ncr_init: str = "linear"
    greedy: GreedyConfig = GreedyConfig()
    greedy_init_scale: float = 1.0
    mc_samples: int = 1_000_000
    output_dir: str = "out"
    sweep_csnr: tuple[float, ...] = ()

    @property
    def is_distributed(self) -> bool:
        return self.setting != "side_info"


def _to_float(key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite, got {text!r}")
    return value


def _to_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _to_vector(key: str, text: str) -> tuple[float, ...]:
    return tuple(_to_float(key, t) for t in text.replace(",", " ").split())


def _to_rows(key: str, text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_to_vector(key, row) for row in text.split(";") if row.strip())


def _choice(key: str, text: str, allowed: Iterable[str]) -> str:
    allowed = tuple(allowed)
    if text not in allowed:
        raise ConfigError(f"{key}: expected one of {', '.join(allowed)}, got {text!r}")
    return text


def _typed_section(key_prefix: str, base: Any, items: Mapping[str, str]) -> Any:
    """Override fields of a frozen dataclass from string values."""
    known = {f.name: f for f in fields(base)}
    updates = {}
    for key, text in items.items():
        full = f"{key_prefix}.{key}"
        if key not in known:
            raise ConfigError(f"{full}: unknown key")
        current = getattr(base, key)
        if text.strip().lower() == "none":
            updates[key] = None
        elif isinstance(current, bool):
            updates[key] = text.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            updates[key] = _to_int(full, text)
        else:
            updates[key] = _to_float(full, text)
    try:
        return replace(base, **updates)
    except ZdjsccError as exc:
        raise ConfigError(f"{key_prefix}: {exc}") from None


def _read_sections(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def apply_overrides(sections: dict[str, dict[str, str]], overrides: Iterable[str]) -> dict[str, dict[str, str]]:
    """Merge ``section.key=value`` strings into parsed sections."""
    merged = {s: dict(v) for s, v in sections.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} needs a section prefix")
        section, key = dotted.strip().split(".", 1)
        merged.setdefault(section, {})[key] = value.strip()
    return merged


_SECTIONS = ("experiment", "source", "channel", "power", "grid", "anneal", "ncr", "greedy", "validate")


def build_config(sections: Mapping[str, Mapping[str, str]]) -> ExperimentConfig:
    """Validate parsed sections into an :class:`ExperimentConfig`."""
    unknown = set(sections) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    exp = dict(sections.get("experiment", {}))
    src = dict(sections.get("source", {}))
    chan = dict(sections.get("channel", {}))
    pw = dict(sections.get("power", {}))
    grid = dict(sections.get("grid", {}))
    val = dict(sections.get("validate", {}))

    cfg = ExperimentConfig()
    updates: dict[str, Any] = {}
    if "name" in exp:
        updates["name"] = exp.pop("name")
    if "setting" in exp:
        updates["setting"] = _choice("experiment.setting", exp.pop("setting"), SETTINGS)
    if "function" in exp:
        updates["function"] = _choice("experiment.function", exp.pop("function"), FUNCTIONS)
    if "eta" in exp:
        updates["eta"] = _to_float("experiment.eta", exp.pop("eta"))
        if updates["eta"] <= 0:
            raise ConfigError("experiment.eta: must be positive")
    if "method" in exp:
        names = tuple(m.strip() for m in exp.pop("method").replace(",", " ").split())
        if names == ("all",):
            names = METHODS
        for m in names:
            _choice("experiment.method", m, METHODS + ("all",))
        if not names or "all" in names:
            raise ConfigError("experiment.method: give 'all' or a list of methods")
        updates["methods"] = names
    if "seed" in exp:
        updates["seed"] = _to_int("experiment.seed", exp.pop("seed"))
    if "output_dir" in exp:
        updates["output_dir"] = exp.pop("output_dir")
    if "ncr_init" in exp:
        updates["ncr_init"] = _choice("experiment.ncr_init", exp.pop("ncr_init"), ("linear", "random"))
    if "sweep_csnr" in exp:
        updates["sweep_csnr"] = _to_vector("experiment.sweep_csnr", exp.pop("sweep_csnr"))
    if "greedy_init_scale" in exp:
        updates["greedy_init_scale"] = _to_float("experiment.greedy_init_scale", exp.pop("greedy_init_scale"))
    if exp:
        raise ConfigError(f"experiment.{sorted(exp)[0]}: unknown key")

    source = SourceSpec()
    if "family" in src:
        source = replace(source, family=_choice("source.family", src.pop("family"), ("gaussian", "mixture")))
    if "rho" in src:
        rho = _to_float("source.rho", src.pop("rho"))
        if not -1 < rho < 1:
            raise ConfigError("source.rho: must lie strictly between -1 and 1")
        source = replace(source, rho=rho)
    if "variance" in src:
        var = _to_float("source.variance", src.pop("variance"))
        if var <= 0:
            raise ConfigError("source.variance: must be positive")
        source = replace(source, variance=var)
    if "centers" in src:
        rows = _to_rows("source.centers", src.pop("centers"))
        if not rows or any(len(r) != 2 for r in rows):
            raise ConfigError("source.centers: expected 'x z; x z; ...'")
        source = replace(source, centers=rows)
    if "mix_weights" in src:
        source = replace(source, mix_weights=_to_vector("source.mix_weights", src.pop("mix_weights")))
    if "covariance" in src:
        rows = _to_rows("source.covariance", src.pop("covariance"))
        if len(rows) != 2 or any(len(r) != 2 for r in rows):
            raise ConfigError("source.covariance: expected 'a b; c d'")
        source = replace(source, covariance=rows)
    if src:
        raise ConfigError(f"source.{sorted(src)[0]}: unknown key")
    if source.family == "mixture":
        if not source.centers or len(source.mix_weights) != len(source.centers):
            raise ConfigError("source.mix_weights: need one weight per center")
    updates["source"] = source

    nv = list(cfg.noise_variances)
    for i, key in enumerate(("noise_variance1", "noise_variance2")):
        if key in chan:
            nv[i] = _to_float(f"channel.{key}", chan.pop(key))
            if nv[i] <= 0:
                raise ConfigError(f"channel.{key}: must be positive")
    if chan:
        raise ConfigError(f"channel.{sorted(chan)[0]}: unknown key")
    updates["noise_variances"] = tuple(nv)

    power = PowerSpec()
    if "mode" in pw:
        power = replace(power, mode=_choice("power.mode", pw.pop("mode"), POWER_MODES))
    for key in ("lam1", "lam2", "csnr1", "csnr2"):
        if key in pw:
            value = _to_float(f"power.{key}", pw.pop(key))
            if key.startswith("lam") and value < 0:
                raise ConfigError(f"power.{key}: must be >= 0")
            power = replace(power, **{key: value})
    if pw:
        raise ConfigError(f"power.{sorted(pw)[0]}: unknown key")
    if power.mode != "lambda" and power.csnr1 is None:
        raise ConfigError(f"power.csnr1: required when power.mode = {power.mode}")
    distributed = updates.get("setting", cfg.setting) != "side_info"
    if power.mode == "calibrate" and distributed and power.csnr2 is None:
        raise ConfigError("power.csnr2: required for per-encoder calibration")
    if power.mode == "total_calibrate" and not distributed:
        raise ConfigError("power.mode: total_calibrate needs a distributed setting")
    updates["power"] = power
    if updates.get("sweep_csnr") and (power.mode != "calibrate" or distributed):
        raise ConfigError("experiment.sweep_csnr: sweeps need side_info with power.mode = calibrate")

    for key in ("spacing", "noise_spacing", "support_sigmas"):
        if key in grid:
            value = _to_float(f"grid.{key}", grid.pop(key))
            if value <= 0:
                raise ConfigError(f"grid.{key}: must be positive")
            updates[key] = value
    if grid:
        raise ConfigError(f"grid.{sorted(grid)[0]}: unknown key")

    if "samples" in val:
        updates["mc_samples"] = _to_int("validate.samples", val.pop("samples"))
        if updates["mc_samples"] < 10_000:
            raise ConfigError("validate.samples: need at least 10000 samples")
    if val:
        raise ConfigError(f"validate.{sorted(val)[0]}: unknown key")

    anneal = _typed_section("anneal", AnnealConfig(), sections.get("anneal", {}))
    seed = updates.get("seed", cfg.seed)
    if "rng_seed" not in sections.get("anneal", {}):
        anneal = replace(anneal, rng_seed=seed)
    updates["anneal"] = anneal
    updates["ncr"] = _typed_section("ncr", NcrSchedule(), sections.get("ncr", {}))
    updates["greedy"] = _typed_section("greedy", GreedyConfig(), sections.get("greedy", {}))
    return replace(cfg, **updates)


def load_config(path: str | Path | None = None, text: str | None = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Parse a config file (or text) and apply ``section.key=value`` overrides."""
    if (path is None) == (text is None):
        raise ConfigError("give exactly one of a path or config text")
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return build_config(apply_overrides(_read_sections(text), overrides))
