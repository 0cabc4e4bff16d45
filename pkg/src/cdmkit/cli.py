"""Command-line entry point: gen-data, train, sample, eval, ablate.

Every command is non-interactive and writes its outputs under --out.
The effective configuration (defaults, then config file, then flags) is
echoed into the run directory so a run can be reproduced byte for byte.
Timing goes to stderr only; written artifacts are deterministic.

Exit codes: 0 success, 2 usage, 3 configuration or data errors,
4 numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, DataSplits
from .errors import (
    ConfigError,
    DivergedTrainingError,
    DomainError,
    SampleRejectionError,
    SamplerDivergenceError,
    ShapeError,
    VariantMismatchError,
)
from .evalbench import (
    METHODS,
    SplitSpec,
    SWEEP_KINDS,
    run_method_matrix,
    sweep,
    write_curves,
    write_report,
)
from .model import (
    CdmModel,
    VARIANT_TIME_DEPENDENT,
    VARIANT_TIME_INDEPENDENT,
    load_checkpoint,
    save_checkpoint,
)
from .physics import default_benchmark, generate_benchmark_dataset, parse_constraint_file
from .samplers import SAMPLER_KINDS, SamplerConfig, batch_sample
from .training import TrainConfig, train_cdm, train_regressor

log = logging.getLogger("cdmkit")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4

_CONFIG_KEYS = {
    "variant": str,
    "sigma_max": float,
    "schedule_s": float,
    "schedule_T": int,
    "refine_K": int,
    "batch_size": int,
    "lr": float,
    "min_epochs": int,
    "max_epochs": int,
    "patience": int,
    "physics_weight": float,
    "seed": int,
    "val_probes": int,
    "eta": float,
    "eta_base": float,
    "n_max": int,
    "eps_conv": float,
    "init_sigma": float,
    "n_splits": int,
}


def read_config_file(path: str | Path) -> dict:
    """Flat key=value text; # comments; unknown keys are rejected."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return values


def effective_config(args) -> dict:
    """Merge defaults, config file, flags, and the CDM_SEED override."""
    cfg = {
        "variant": VARIANT_TIME_DEPENDENT,
        "sigma_max": 1.0,
        "schedule_s": 0.008,
        "batch_size": 128,
        "lr": 1e-3,
        "min_epochs": 4500,
        "patience": 20,
        "physics_weight": 1.0,
        "seed": 0,
        "val_probes": 16,
        "n_splits": 10,
    }
    if getattr(args, "config", None):
        cfg.update(read_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = key.replace("-", "_")
        if getattr(args, flag, None) is not None:
            cfg[key] = getattr(args, flag)
    env_seed = os.environ.get("CDM_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"CDM_SEED must be an integer, got {env_seed!r}") from exc
    return cfg


def echo_config(cfg: dict, out_dir: Path) -> None:
    lines = [f"{key}={cfg[key]}" for key in sorted(cfg)]
    lines.append(f"version={__version__}")
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n")


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        variant=cfg.get("variant", VARIANT_TIME_DEPENDENT),
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        min_epochs=cfg["min_epochs"],
        patience=cfg["patience"],
        sigma_max=cfg["sigma_max"],
        schedule_s=cfg["schedule_s"],
        seed=cfg["seed"],
        physics_weight=cfg["physics_weight"],
        val_probes=cfg["val_probes"],
        max_epochs=cfg.get("max_epochs"),
    )


def _sampler_config(cfg: dict, kind: str) -> SamplerConfig:
    kwargs = {"kind": kind}
    for key, field in (
        ("eta", "eta"),
        ("eta_base", "eta_base"),
        ("n_max", "n_max"),
        ("eps_conv", "eps_conv"),
        ("init_sigma", "init_sigma"),
        ("schedule_T", "schedule_t"),
        ("refine_K", "refine_k"),
    ):
        if cfg.get(key) is not None:
            kwargs[field] = cfg[key]
    return SamplerConfig(**kwargs)


def cmd_gen_data(args) -> int:
    cfg = effective_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset, meta = generate_benchmark_dataset(args.n_samples, cfg["seed"])
    if meta["rejected"]:
        log.warning("solver rejected %d draws (redrawn)", meta["rejected"])
    dataset.save_csv(out_dir / "dataset.csv")
    meta["columns"] = {"inputs": 3, "outputs": 5}
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    echo_config({**cfg, "n_samples": args.n_samples}, out_dir)
    log.info("wrote %d samples to %s", dataset.n, out_dir / "dataset.csv")
    return EXIT_OK


_TRAIN_METHODS = ("cdm-t", "cdm-0", "nn", "nn-physics")


def cmd_train(args) -> int:
    cfg = effective_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = Dataset.load_csv(args.data)
    splits = DataSplits.from_dataset(dataset, seed=[cfg["seed"], 0])
    method = args.method
    cfg["variant"] = method if method.startswith("cdm") else cfg.get("variant", "cdm-t")
    train_cfg = _train_config(cfg)
    if method in (VARIANT_TIME_DEPENDENT, VARIANT_TIME_INDEPENDENT):
        model, report = train_cdm(splits, replace(train_cfg, variant=method))
    elif method in ("nn", "nn-physics"):
        physics = None
        if method == "nn-physics":
            if args.constraints:
                physics = parse_constraint_file(args.constraints, dataset.dim_x, dataset.dim_y)
            else:
                _, physics, _ = default_benchmark()
            physics = physics.with_scale_from_data(dataset.y[splits.train_idx])
        model, report = train_regressor(splits, train_cfg, physics=physics)
    else:
        raise ConfigError(f"unknown method {method!r}; pick from {_TRAIN_METHODS}")
    save_checkpoint(model, out_dir / "checkpoint.json")
    (out_dir / "train_report.json").write_text(
        json.dumps(report.to_jsonable(), indent=1) + "\n"
    )
    echo_config(cfg, out_dir)
    log.info(
        "trained %s: %d epochs, best val %.4e (%.1fs)",
        method, report.epochs_run, report.best_val_loss, report.wall_time,
    )
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = effective_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(args.checkpoint)
    if not isinstance(model, CdmModel):
        raise ConfigError("sampling needs a denoising-model checkpoint")
    sampler_cfg = _sampler_config(cfg, args.sampler)
    if sampler_cfg.time_dependent != model.time_dependent:
        raise ConfigError(
            f"sampler {args.sampler!r} does not fit checkpoint variant {model.variant!r}"
        )
    dataset = Dataset.load_csv(args.data)
    sampler_cfg = replace(sampler_cfg, keep_iterates=False)
    result = batch_sample(model, dataset.x, sampler_cfg, seed=cfg["seed"])
    with open(out_dir / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [f"x_{i+1}" for i in range(model.dim_x)]
            + [f"y_{i+1}" for i in range(model.dim_y)]
        )
        for xi, yi in zip(dataset.x, result.states):
            writer.writerow([repr(float(v)) for v in (*xi, *yi)])
    with open(out_dir / "trajectories.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "evals", "converged", "final_residual"])
        for i, traj in enumerate(result.trajectories):
            final = traj.residual_norms[-1] if traj.evals else float("nan")
            writer.writerow([i, traj.evals, int(traj.converged), repr(float(final))])
    if args.trace:
        with open(out_dir / "residual_traces.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "iteration", "residual_norm", "eta"])
            for i, traj in enumerate(result.trajectories):
                for j, r in enumerate(traj.residual_norms):
                    eta = traj.eta_trace[j] if j < traj.eta_trace.size else ""
                    writer.writerow([i, j, repr(float(r)), eta])
    echo_config(cfg, out_dir)
    for i, traj in enumerate(result.trajectories):
        log.info("row %d: %d evals, converged=%s", i, traj.evals, traj.converged)
    if result.failures:
        log.error("%d rows failed: %s", len(result.failures), result.failures[:3])
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = effective_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = Dataset.load_csv(args.data)
    if args.constraints:
        cs = parse_constraint_file(args.constraints, dataset.dim_x, dataset.dim_y)
    else:
        _, cs, _ = default_benchmark()
    methods = [m.strip() for m in args.methods.split(",")]
    spec = SplitSpec(n_splits=cfg["n_splits"], master_seed=cfg["seed"])
    reports = run_method_matrix(
        methods, dataset, spec, cs, _train_config(cfg), jobs=args.jobs
    )
    write_report(reports, out_dir)
    echo_config(cfg, out_dir)
    for method, rep in reports.items():
        agg = rep.aggregates.get("test_rmse", {})
        log.info(
            "%s: test_rmse %.4f +- %.4f", method,
            agg.get("mean", float("nan")), agg.get("std", float("nan")),
        )
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = effective_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = Dataset.load_csv(args.data)
    if args.constraints:
        cs = parse_constraint_file(args.constraints, dataset.dim_x, dataset.dim_y)
    else:
        _, cs, _ = default_benchmark()
    methods = [m.strip() for m in args.methods.split(",")]
    grid = [float(v) for v in args.grid.split(",")] if args.grid else []
    spec = SplitSpec(n_splits=cfg["n_splits"], master_seed=cfg["seed"])
    results = sweep(
        args.kind, grid, methods, dataset, spec, cs, _train_config(cfg), jobs=args.jobs
    )
    coord_key = {
        "sigma_max": "sigma_max",
        "schedule_T": "schedule_T",
        "refine_K": "refine_K",
        "param_count": "param_count",
        "data_fraction": "data_fraction",
        "convergence_profile": "profile",
    }[args.kind]
    for i, point in enumerate(results):
        write_report(point, out_dir / f"point_{i:02d}")
    write_curves(results, coord_key, out_dir)
    echo_config(cfg, out_dir)
    log.info("wrote %d grid points under %s", len(results), out_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdmkit",
        description="Conditional denoising surrogates for steady-state systems",
    )
    parser.add_argument("--version", action="version", version=f"cdmkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", required=True, help="run directory for outputs")
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("gen-data", help="generate the synthetic benchmark dataset")
    p.add_argument("--n-samples", type=int, default=3000)
    add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=_TRAIN_METHODS)
    p.add_argument("--constraints", help="constraint definition file (nn-physics)")
    for key, typ in _CONFIG_KEYS.items():
        if key != "seed":
            p.add_argument(f"--{key.replace('_', '-')}", type=typ, dest=key)
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample states for conditions in a CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="CSV with x columns (y ignored)")
    p.add_argument("--sampler", required=True,
                   choices=[k for k in SAMPLER_KINDS])
    p.add_argument("--trace", action="store_true", help="write residual traces")
    for key in ("eta", "eta_base", "n_max", "eps_conv", "init_sigma",
                "schedule_T", "refine_K"):
        p.add_argument(f"--{key.replace('_', '-')}", type=_CONFIG_KEYS[key], dest=key)
    add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="train+evaluate methods over seeded splits")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", required=True,
                   help=f"comma-separated from {', '.join(METHODS)}")
    p.add_argument("--constraints")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    for key in ("min_epochs", "max_epochs", "patience", "batch_size", "lr",
                "sigma_max", "physics_weight", "n_splits"):
        p.add_argument(f"--{key.replace('_', '-')}", type=_CONFIG_KEYS[key], dest=key)
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", required=True, choices=SWEEP_KINDS)
    p.add_argument("--grid", help="comma-separated grid values")
    p.add_argument("--methods", required=True)
    p.add_argument("--constraints")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    for key in ("min_epochs", "max_epochs", "patience", "batch_size", "lr",
                "sigma_max", "physics_weight", "n_splits"):
        p.add_argument(f"--{key.replace('_', '-')}", type=_CONFIG_KEYS[key], dest=key)
    add_common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, DomainError, ShapeError, VariantMismatchError) as exc:
        _write_error(args, exc)
        return EXIT_CONFIG
    except (DivergedTrainingError, SamplerDivergenceError, SampleRejectionError) as exc:
        _write_error(args, exc)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        _write_error(args, exc)
        return EXIT_CONFIG


def _write_error(args, exc: Exception) -> None:
    log.error("%s: %s", type(exc).__name__, exc)
    out = getattr(args, "out", None)
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(
                json.dumps({"error": type(exc).__name__, "message": str(exc)}, indent=1)
                + "\n"
            )
        except OSError:
            pass


if __name__ == "__main__":
    sys.exit(main())
