"""Metrics, seeded-split ensembles, and ablation sweeps.

A run trains one model per backbone per split and evaluates any number of
method variants against the held-out test part: the four denoising
samplers share their backbone's checkpoint, and the projection baseline
shares the physics regressor's. Aggregates are mean and sample standard
deviation over splits, always recomputable from the persisted per-split
values.

Results serialize to runs/<name>/report.json plus a flat curves.csv per
sweep so the ablation figures can be replotted directly.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Dataset, DataSplits
from .errors import ConfigError, ShapeError
from .model import VARIANT_TIME_DEPENDENT, VARIANT_TIME_INDEPENDENT
from .physics import ConstraintSet, project_batch, residuals_batch
from .samplers import (
    KIND_CDM_0_ADAPT,
    KIND_CDM_0_CONST,
    KIND_CDM_T_DENSE,
    KIND_CDM_T_SPARSE,
    SamplerConfig,
    batch_sample,
)
from .training import (
    TrainConfig,
    cdm_param_count,
    match_regressor_widths,
    train_cdm,
    train_regressor,
)

log = logging.getLogger(__name__)

METHOD_NN = "nn"
METHOD_NN_PROJECTION = "nn+projection"
METHODS = (
    KIND_CDM_T_DENSE,
    KIND_CDM_T_SPARSE,
    KIND_CDM_0_CONST,
    KIND_CDM_0_ADAPT,
    METHOD_NN,
    METHOD_NN_PROJECTION,
)

_BACKBONE_OF_METHOD = {
    KIND_CDM_T_DENSE: VARIANT_TIME_DEPENDENT,
    KIND_CDM_T_SPARSE: VARIANT_TIME_DEPENDENT,
    KIND_CDM_0_CONST: VARIANT_TIME_INDEPENDENT,
    KIND_CDM_0_ADAPT: VARIANT_TIME_INDEPENDENT,
    METHOD_NN: "nn",
    METHOD_NN_PROJECTION: "nn",
}

SWEEP_KINDS = (
    "sigma_max",
    "schedule_T",
    "refine_K",
    "param_count",
    "data_fraction",
    "convergence_profile",
)


def rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Root mean squared error over all entries; standardized space."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def physics_rmse(cs: ConstraintSet, x: np.ndarray, y_pred: np.ndarray) -> float:
    """RMS of the normalized constraint residuals; physical-space inputs."""
    r = residuals_batch(cs, x, y_pred)
    return float(np.sqrt(np.mean(r * r)))


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.85, 0.105, 0.045)
    n_splits: int = 10
    master_seed: int = 0

    def __post_init__(self):
        if self.n_splits < 1:
            raise ConfigError("n_splits must be >= 1")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")


@dataclass
class RunReport:
    method: str
    sweep_coords: dict = field(default_factory=dict)
    per_split: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    degenerate: bool = False
    partial: bool = False
    failures: list = field(default_factory=list)

    def recompute_aggregates(self) -> dict:
        keys = ("test_rmse", "physics_rmse", "evals_mean", "median_iterations")
        agg = {}
        for key in keys:
            vals = [s[key] for s in self.per_split if s.get(key) is not None]
            if not vals:
                continue
            arr = np.asarray(vals, dtype=np.float64)
            std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
            agg[key] = {"mean": float(arr.mean()), "std": std}
        return agg

    def to_jsonable(self) -> dict:
        return {
            "method": self.method,
            "sweep_coords": self.sweep_coords,
            "per_split": self.per_split,
            "aggregates": self.aggregates,
            "degenerate": self.degenerate,
            "partial": self.partial,
            "failures": self.failures,
        }

    @classmethod
    def from_jsonable(cls, doc: dict) -> "RunReport":
        return cls(
            method=doc["method"],
            sweep_coords=doc.get("sweep_coords", {}),
            per_split=doc["per_split"],
            aggregates=doc["aggregates"],
            degenerate=doc.get("degenerate", False),
            partial=doc.get("partial", False),
            failures=doc.get("failures", []),
        )


def split_seed(master_seed: int, split_index: int, stream: int = 0) -> int:
    """Stable derived seed for one (split, purpose) pair."""
    ss = np.random.SeedSequence([int(master_seed), int(split_index), int(stream)])
    return int(ss.generate_state(1)[0])


def _needed_backbones(methods) -> list[str]:
    seen = []
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; pick from {METHODS}")
        kind = _BACKBONE_OF_METHOD[m]
        if kind not in seen:
            seen.append(kind)
    return seen

_BACKBONE_STREAM = {VARIANT_TIME_DEPENDENT: 1, VARIANT_TIME_INDEPENDENT: 2, "nn": 3}


def _train_backbone(kind, splits, cs_scaled, train_config: TrainConfig, seed: int):
    cfg = replace(train_config, seed=seed)
    if kind == "nn":
        target = cdm_param_count(
            splits.x_train.shape[1],
            splits.y_train.shape[1],
            train_config.widths,
            time_dependent=True,
        )
        cfg = replace(cfg, widths=match_regressor_widths(
            target, splits.x_train.shape[1], splits.y_train.shape[1], train_config.widths
        ))
        return train_regressor(splits, cfg, physics=cs_scaled)
    cfg = replace(cfg, variant=kind)
    return train_cdm(splits, cfg)


def _predict_for_method(method, backbone_model, splits, sampler_overrides, sample_seed):
    """Physical-space test predictions plus sampler bookkeeping."""
    x_test_phys = splits.standardizer.inverse_x(splits.x_test)
    if method in (METHOD_NN, METHOD_NN_PROJECTION):
        y_pred = backbone_model.predict(x_test_phys)
        return y_pred, None
    overrides = dict(sampler_overrides or {})
    kind = overrides.pop("kind", method)
    cfg = SamplerConfig(kind=kind, **overrides)
    result = batch_sample(backbone_model, x_test_phys, cfg, seed=sample_seed)
    if result.failures:
        rows = [r for r, _ in result.failures]
        raise ConfigError(f"sampler failed on rows {rows}: {result.failures[0][1]}")
    return result.states, result.trajectories


def _evaluate_split(
    split_index: int,
    methods,
    dataset: Dataset,
    spec: SplitSpec,
    cs: ConstraintSet,
    train_config: TrainConfig,
    sampler_overrides,
    train_fraction: float,
):
    splits = DataSplits.from_dataset(
        dataset, seed=[spec.master_seed, split_index], fractions=spec.fractions,
        train_fraction=train_fraction,
    )
    cs_scaled = cs.with_scale_from_data(
        splits.standardizer.inverse_y(splits.y_train)
    )
    x_test_phys = splits.standardizer.inverse_x(splits.x_test)
    backbones = {}
    for kind in _needed_backbones(methods):
        seed = split_seed(spec.master_seed, split_index, _BACKBONE_STREAM[kind])
        model, report = _train_backbone(kind, splits, cs_scaled, train_config, seed)
        backbones[kind] = (model, report)
        log.info(
            "split %d backbone %s: epochs=%d best_val=%.3e",
            split_index, kind, report.epochs_run, report.best_val_loss,
        )
    out = {}
    for method in methods:
        model, report = backbones[_BACKBONE_OF_METHOD[method]]
        sample_seed = split_seed(spec.master_seed, split_index, 17)
        y_pred, trajectories = _predict_for_method(
            method, model, splits, sampler_overrides, sample_seed
        )
        if method == METHOD_NN_PROJECTION:
            y_pred = project_batch(cs_scaled, x_test_phys, y_pred)
        entry = {
            "split": split_index,
            "test_rmse": rmse(
                splits.standardizer.transform_y(y_pred), splits.y_test
            ),
            "physics_rmse": physics_rmse(cs_scaled, x_test_phys, y_pred),
            "epochs_run": report.epochs_run,
            "best_epoch": report.best_epoch,
            "n_params": model.params.n_params(),
            "evals_mean": None,
            "median_iterations": None,
            "converged_fraction": None,
        }
        if trajectories is not None:
            evals = np.array([t.evals for t in trajectories], dtype=np.float64)
            entry["evals_mean"] = float(evals.mean())
            entry["median_iterations"] = float(np.median(evals))
            entry["converged_fraction"] = float(
                np.mean([t.converged for t in trajectories])
            )
            entry["mean_residual_trace"] = _mean_residual_trace(trajectories)
        out[method] = entry
    return out


def _mean_residual_trace(trajectories) -> list[float]:
    """Mean residual norm per iteration; finished rows carry their last value."""
    max_len = max(t.residual_norms.size for t in trajectories)
    acc = np.zeros(max_len)
    for t in trajectories:
        r = t.residual_norms
        if r.size == 0:
            continue
        padded = np.concatenate([r, np.full(max_len - r.size, r[-1])])
        acc += padded
    return (acc / len(trajectories)).tolist()


def run_method_matrix(
    methods,
    dataset: Dataset,
    spec: SplitSpec,
    cs: ConstraintSet,
    train_config: TrainConfig,
    *,
    sampler_overrides: dict | None = None,
    train_fraction: float = 1.0,
    sweep_coords: dict | None = None,
    jobs: int = 1,
) -> dict[str, RunReport]:
    """Train shared backbones per split and evaluate every method on them."""
    methods = list(methods)
    _needed_backbones(methods)  # validate early
    reports = {
        m: RunReport(method=m, sweep_coords=dict(sweep_coords or {})) for m in methods
    }

    def job(i):
        return _evaluate_split(
            i, methods, dataset, spec, cs, train_config, sampler_overrides,
            train_fraction,
        )

    results: list = [None] * spec.n_splits
    errors: list = [None] * spec.n_splits
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {i: pool.submit(job, i) for i in range(spec.n_splits)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001 - recorded per split
                    errors[i] = exc
    else:
        for i in range(spec.n_splits):
            try:
                results[i] = job(i)
            except Exception as exc:  # noqa: BLE001
                errors[i] = exc
    for i in range(spec.n_splits):
        if errors[i] is not None:
            for rep in reports.values():
                rep.partial = True
                rep.failures.append({"split": i, "error": str(errors[i])})
            continue
        for m in methods:
            reports[m].per_split.append(results[i][m])
    for rep in reports.values():
        rep.degenerate = spec.n_splits == 1
        rep.aggregates = rep.recompute_aggregates()
    return reports


def run_ensemble(
    method: str,
    dataset: Dataset,
    spec: SplitSpec,
    cs: ConstraintSet,
    train_config: TrainConfig,
    **kwargs,
) -> RunReport:
    return run_method_matrix([method], dataset, spec, cs, train_config, **kwargs)[method]


def sweep(
    kind: str,
    grid,
    methods,
    dataset: Dataset,
    spec: SplitSpec,
    cs: ConstraintSet,
    train_config: TrainConfig,
    *,
    jobs: int = 1,
) -> list[dict[str, RunReport]]:
    """One method-matrix run per grid point.

    sigma_max, param_count and data_fraction retrain per point; schedule_T
    and refine_K vary only the sampler; convergence_profile records the
    residual traces of the fixed-point variants at the base config.
    """
    if kind not in SWEEP_KINDS:
        raise ConfigError(f"unknown sweep kind {kind!r}; pick from {SWEEP_KINDS}")
    grid = list(grid)
    if kind != "convergence_profile" and not grid:
        raise ConfigError("sweep grid must be nonempty")
    out = []
    if kind == "sigma_max":
        for value in grid:
            cfg = replace(train_config, sigma_max=float(value))
            out.append(
                run_method_matrix(
                    methods, dataset, spec, cs, cfg,
                    sweep_coords={"sigma_max": float(value)}, jobs=jobs,
                )
            )
    elif kind == "schedule_T":
        for value in grid:
            out.append(
                run_method_matrix(
                    methods, dataset, spec, cs, train_config,
                    sampler_overrides={"kind": "cdm-t-custom",
                                       "schedule_t": int(value), "refine_k": 1},
                    sweep_coords={"schedule_T": int(value)}, jobs=jobs,
                )
            )
    elif kind == "refine_K":
        for value in grid:
            out.append(
                run_method_matrix(
                    methods, dataset, spec, cs, train_config,
                    sampler_overrides={"kind": "cdm-t-custom",
                                       "schedule_t": 3, "refine_k": int(value)},
                    sweep_coords={"refine_K": int(value)}, jobs=jobs,
                )
            )
    elif kind == "param_count":
        for factor in grid:
            widths = train_config.widths.scaled(float(factor))
            cfg = replace(train_config, widths=widths)
            count = cdm_param_count(
                dataset.dim_x, dataset.dim_y, widths, time_dependent=True
            )
            out.append(
                run_method_matrix(
                    methods, dataset, spec, cs, cfg,
                    sweep_coords={"width_factor": float(factor), "param_count": count},
                    jobs=jobs,
                )
            )
    elif kind == "data_fraction":
        for value in grid:
            out.append(
                run_method_matrix(
                    methods, dataset, spec, cs, train_config,
                    train_fraction=float(value),
                    sweep_coords={"data_fraction": float(value)}, jobs=jobs,
                )
            )
    else:  # convergence_profile
        out.append(
            run_method_matrix(
                methods, dataset, spec, cs, train_config,
                sweep_coords={"profile": "convergence"}, jobs=jobs,
            )
        )
    return out


def pooled_std(a, b) -> float:
    """Pooled sample standard deviation of two equally sized ensembles."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    va = a.var(ddof=1) if a.size > 1 else 0.0
    vb = b.var(ddof=1) if b.size > 1 else 0.0
    return float(np.sqrt(0.5 * (va + vb)))


def write_report(reports: dict[str, RunReport], out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    doc = {m: r.to_jsonable() for m, r in reports.items()}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def write_curves(
    sweep_results: list[dict[str, RunReport]],
    coord_key: str,
    out_dir: str | Path,
    metric: str = "test_rmse",
) -> Path:
    """Flat (coordinate, method, mean, std) table for plotting."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "curves.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([coord_key, "method", f"{metric}_mean", f"{metric}_std"])
        for point in sweep_results:
            for method, rep in point.items():
                agg = rep.aggregates.get(metric)
                if agg is None:
                    continue
                writer.writerow(
                    [rep.sweep_coords.get(coord_key), method,
                     repr(agg["mean"]), repr(agg["std"])]
                )
    return path
