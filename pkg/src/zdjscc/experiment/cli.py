"""Command line entry point: ``zdjscc run|validate|presets``."""
from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from ..errors import BoundViolationError, ConfigError, ZdjsccError
from .config import load_config
from .runner import run_experiment, run_sweep, validate_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERTION = 3


def preset_names() -> list[str]:
    root = resources.files("zdjscc.experiment") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def preset_text(name: str) -> str:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return (resources.files("zdjscc.experiment") / "presets" / f"{name}.ini").read_text()


def _load(args) -> "ExperimentConfig":  # noqa: F821
    overrides = list(args.set or [])
    if args.output:
        overrides.append(f"experiment.output_dir={args.output}")
    if Path(args.config).exists() or args.config not in preset_names():
        return load_config(path=args.config, overrides=overrides)
    return load_config(text=preset_text(args.config), overrides=overrides)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zdjscc", description="Design and evaluate zero-delay source-channel mappings.")
    p.add_argument("-v", "--verbose", action="store_true", help="log annealing progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="config file path or preset name")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config key")
        sp.add_argument("-o", "--output", help="output directory (overrides experiment.output_dir)")

    common(sub.add_parser("run", help="run the configured optimizers and write result files"))
    val = sub.add_parser("validate", help="run, then Monte Carlo check the final mappings")
    common(val)
    val.add_argument("--samples", type=int, help="Monte Carlo sample count")
    val.add_argument("--seed", type=int, help="Monte Carlo seed")

    pre = sub.add_parser("presets", help="list or print the shipped preset configs")
    psub = pre.add_subparsers(dest="action", required=True)
    psub.add_parser("list")
    emit = psub.add_parser("emit")
    emit.add_argument("name")
    emit.add_argument("-o", "--output", help="write to this file instead of stdout")
    return p


def _progress(state) -> None:
    c = state.cost
    logging.getLogger("zdjscc").info(
        "T=%.4g K=%s D=%.6g P=%s F=%.6g", state.temperature, state.n_models, c.distortion, c.powers, c.free_energy
    )


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "presets":
            if args.action == "list":
                print("\n".join(preset_names()))
            else:
                text = preset_text(args.name)
                if args.output:
                    Path(args.output).write_text(text)
                else:
                    sys.stdout.write(text)
            return EXIT_OK
        cfg = _load(args)
        if cfg.sweep_csnr:
            if args.command == "validate":
                raise ConfigError("experiment.sweep_csnr: validate one sweep point at a time")
            run_sweep(cfg, cfg.output_dir, _progress if args.verbose else None)
            print((Path(cfg.output_dir) / "sweep.csv").read_text())
            return EXIT_OK
        res = run_experiment(cfg, cfg.output_dir, _progress if args.verbose else None)
        if args.command == "run":
            print((Path(cfg.output_dir) / "comparison.txt").read_text() if (Path(cfg.output_dir) / "comparison.txt").exists() else "")
            return EXIT_OK
        rows = validate_experiment(res, args.samples, args.seed, cfg.output_dir)
        failed = [v for v in rows if not v.agrees]
        for v in rows:
            e = v.estimate
            print(f"{v.method:8s} grid D={v.grid_distortion:.6g}  MC D={e.distortion:.6g} ± {e.stderr:.2g}  {'ok' if v.agrees else 'MISMATCH'}")
        if failed:
            raise BoundViolationError(f"Monte Carlo disagrees with the grid for {', '.join(v.method for v in failed)}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except ZdjsccError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
