"""Generative inference: schedule-driven and fixed-point samplers.

Both samplers start from Gaussian noise in standardized space and move the
state a fraction eta along the restoration vector v = y_hat - y at every
model call. The schedule-driven sampler (time-conditioned models) walks a
decreasing sigma ladder with K refinement calls per level; the fixed-point
samplers (time-independent models) iterate a single static map until the
residual norm drops below a tolerance, with either a constant step or a
step scaled by the relative residual.

States returned to callers are de-standardized. Every model call is
instrumented: trajectories carry one residual norm per call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SamplerDivergenceError, VariantMismatchError
from .model import CdmModel
from .schedule import SigmaLadder, discretize

KIND_CDM_T_DENSE = "cdm-t-dense"
KIND_CDM_T_SPARSE = "cdm-t-sparse"
KIND_CDM_T_CUSTOM = "cdm-t-custom"
KIND_CDM_0_CONST = "cdm-0-const"
KIND_CDM_0_ADAPT = "cdm-0-adapt"

SAMPLER_KINDS = (
    KIND_CDM_T_DENSE,
    KIND_CDM_T_SPARSE,
    KIND_CDM_T_CUSTOM,
    KIND_CDM_0_CONST,
    KIND_CDM_0_ADAPT,
)

_T_K_PRESETS = {KIND_CDM_T_DENSE: (130, 10), KIND_CDM_T_SPARSE: (10, 130)}


@dataclass
class SamplerConfig:
    kind: str = KIND_CDM_0_CONST
    schedule_t: int | None = None
    refine_k: int | None = None
    eta: float = 0.1
    eta_base: float = 1.0
    n_max: int = 1300
    eps_conv: float = 1e-5
    delta: float = 1e-8
    init_sigma: float | None = None
    keep_iterates: bool = False

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind {self.kind!r}")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if self.eta_base <= 0.0:
            raise ConfigError(f"eta_base must be positive, got {self.eta_base}")
        if self.eps_conv <= 0.0 or self.n_max < 1 or self.delta <= 0.0:
            raise ConfigError("eps_conv, delta must be positive and n_max >= 1")

    @property
    def time_dependent(self) -> bool:
        return self.kind in (KIND_CDM_T_DENSE, KIND_CDM_T_SPARSE, KIND_CDM_T_CUSTOM)

    def resolve_t_k(self) -> tuple[int, int]:
        if self.kind in _T_K_PRESETS:
            return _T_K_PRESETS[self.kind]
        if self.schedule_t is None or self.refine_k is None:
            raise ConfigError("cdm-t-custom needs schedule_t and refine_k")
        return int(self.schedule_t), int(self.refine_k)


@dataclass
class Trajectory:
    """Per-sample convergence record; one residual norm per model call."""

    residual_norms: np.ndarray
    eta_trace: np.ndarray
    evals: int
    converged: bool
    iterates: np.ndarray | None = None


@dataclass
class BatchSampleResult:
    states: np.ndarray  # (n, dim_y), physical units; NaN rows for failures
    trajectories: list[Trajectory]
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def adaptive_eta(v: np.ndarray, y: np.ndarray, eta_base: float, delta: float):
    """Relative-residual step size, clamped into (0, 1].

    The raw ratio eta_base * |v|_1 / (|y|_1 + delta) is unbounded above;
    the clamp keeps every update a partial move toward the prediction.
    """
    v = np.atleast_2d(v)
    y = np.atleast_2d(y)
    raw = eta_base * np.abs(v).sum(axis=1) / (np.abs(y).sum(axis=1) + delta)
    return np.minimum(raw, 1.0)


def _denoise_y(model, y_std, x_std, sigma):
    if model.time_dependent:
        return model.denoise(y_std, x_std, sigma)[0]
    return model.denoise(y_std, x_std)[0]


def _init_state_rows(rngs, dim_y: int, init_sigma: float) -> np.ndarray:
    return np.stack([rng.standard_normal(dim_y) * init_sigma for rng in rngs])


def _resolve_init_sigma(model: CdmModel, init_sigma: float | None) -> float:
    # Default start scale matches the training noise ceiling, so a model
    # trained at sigma_max=1 starts from a standard normal.
    return model.sigma_max if init_sigma is None else float(init_sigma)


def _run_cdm_t(model, x_std, y0, ladder: SigmaLadder, refine_k: int, keep_iterates: bool):
    """Vectorized ladder walk. Returns final states plus per-row records."""
    n, dim_y = y0.shape
    total = ladder.n_steps * refine_k
    norms = np.zeros((n, total))
    etas = np.zeros((n, total))
    evals = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    failures: list[tuple[int, str]] = []
    iterates = [y0.copy()] if keep_iterates else None

    y = y0.copy()
    sigmas = ladder.sigmas
    step = 0
    for level in range(ladder.n_steps):
        sigma_curr = sigmas[level]
        eta = (sigma_curr - sigmas[level + 1]) / sigma_curr
        for _ in range(refine_k):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            y_hat = _denoise_y(model, y[idx], x_std[idx], sigma_curr)
            v = y_hat - y[idx]
            bad = ~np.isfinite(v).all(axis=1)
            if bad.any():
                for row in idx[bad]:
                    failures.append(
                        (int(row), f"non-finite state at schedule level {level}")
                    )
                active[idx[bad]] = False
                y[idx[bad]] = np.nan
                idx = idx[~bad]
                v = v[~bad]
            if idx.size:
                norms[idx, step] = np.sqrt((v * v).sum(axis=1))
                etas[idx, step] = eta
                evals[idx] += 1
                y[idx] += eta * v
            if keep_iterates:
                iterates.append(y.copy())
            step += 1
    converged = active.copy()
    return y, norms, etas, evals, converged, failures, iterates


def _run_cdm_0(model, x_std, y0, config: SamplerConfig):
    """Vectorized fixed-point iteration with an active-row mask."""
    n, dim_y = y0.shape
    norms = np.zeros((n, config.n_max))
    etas = np.zeros((n, config.n_max))
    evals = np.zeros(n, dtype=int)
    n_updates = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)
    failures: list[tuple[int, str]] = []
    adaptive = config.kind == KIND_CDM_0_ADAPT
    iterates = [y0.copy()] if config.keep_iterates else None

    y = y0.copy()
    for k in range(config.n_max):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        y_hat = _denoise_y(model, y[idx], x_std[idx], None)
        v = y_hat - y[idx]
        bad = ~np.isfinite(v).all(axis=1)
        if bad.any():
            for row in idx[bad]:
                failures.append((int(row), f"non-finite state at iteration {k}"))
            active[idx[bad]] = False
            y[idx[bad]] = np.nan
            idx = idx[~bad]
            v = v[~bad]
        if idx.size == 0:
            continue
        res = np.sqrt((v * v).sum(axis=1))
        norms[idx, k] = res
        evals[idx] += 1
        done = res < config.eps_conv
        if done.any():
            converged[idx[done]] = True
            active[idx[done]] = False
        move = ~done
        idx_move = idx[move]
        if idx_move.size:
            if adaptive:
                eta_k = adaptive_eta(v[move], y[idx_move], config.eta_base, config.delta)
                etas[idx_move, k] = eta_k
                y[idx_move] += eta_k[:, None] * v[move]
            else:
                etas[idx_move, k] = config.eta
                y[idx_move] += config.eta * v[move]
            n_updates[idx_move] += 1
        if config.keep_iterates:
            iterates.append(y.copy())
    return y, norms, etas, evals, n_updates, converged, failures, iterates


def _trajectory_for_row(i, norms, etas, evals, n_updates, converged, iterates):
    return Trajectory(
        residual_norms=norms[i, : evals[i]].copy(),
        eta_trace=etas[i, : n_updates[i]].copy(),
        evals=int(evals[i]),
        converged=bool(converged[i]),
        iterates=None if iterates is None else np.stack([it[i] for it in iterates]),
    )


def sample_cdm_t(
    model: CdmModel,
    x: np.ndarray,
    ladder: SigmaLadder,
    refine_k: int,
    rng: np.random.Generator,
    *,
    init_sigma: float | None = None,
    keep_iterates: bool = False,
):
    """Draw one state for condition x by walking the sigma ladder.

    Per level i the step is eta_i = (sigma_i - sigma_{i-1}) / sigma_i and
    the model is called refine_k times. x is physical, the returned state
    is physical; the trajectory lives in standardized space.
    """
    if not model.time_dependent:
        raise VariantMismatchError("schedule-driven sampling needs a cdm-t model")
    if refine_k < 1:
        raise ConfigError(f"refine_k must be >= 1, got {refine_k}")
    x_std = np.atleast_2d(model.standardizer.transform_x(x))
    sigma0 = _resolve_init_sigma(model, init_sigma)
    y0 = rng.standard_normal((1, model.dim_y)) * sigma0
    y, norms, etas, evals, converged, failures, iterates = _run_cdm_t(
        model, x_std, y0, ladder, refine_k, keep_iterates
    )
    if failures:
        raise SamplerDivergenceError(failures[0][1], step_index=int(evals[0]))
    traj = _trajectory_for_row(0, norms, etas, evals, evals, converged, iterates)
    return model.standardizer.inverse_y(y[0]), traj


def sample_cdm_0(
    model: CdmModel,
    x: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
):
    """Fixed-point iterate toward the learned manifold for condition x.

    Stops when the residual 2-norm drops below config.eps_conv or after
    config.n_max model calls. The state at the converged check (before any
    further update) is returned, de-standardized.
    """
    if model.time_dependent:
        raise VariantMismatchError("fixed-point sampling needs a cdm-0 model")
    if config.time_dependent:
        raise ConfigError(f"sampler kind {config.kind!r} is not a fixed-point kind")
    x_std = np.atleast_2d(model.standardizer.transform_x(x))
    sigma0 = _resolve_init_sigma(model, config.init_sigma)
    y0 = rng.standard_normal((1, model.dim_y)) * sigma0
    y, norms, etas, evals, n_updates, converged, failures, iterates = _run_cdm_0(
        model, x_std, y0, config
    )
    if failures:
        raise SamplerDivergenceError(failures[0][1], step_index=int(evals[0]))
    traj = _trajectory_for_row(0, norms, etas, evals, n_updates, converged, iterates)
    return model.standardizer.inverse_y(y[0]), traj


def batch_sample(
    model: CdmModel,
    x: np.ndarray,
    config: SamplerConfig,
    seed: int,
    row_keys=None,
) -> BatchSampleResult:
    """Sample one state per row of x with independent per-row noise streams.

    Row i draws its start state from default_rng([seed, row_keys[i]]);
    row_keys defaults to 0..n-1. Keys travel with rows, so feeding a
    permuted x with correspondingly permuted keys permutes the outputs
    identically. Per-row failures are recorded and the remaining rows
    complete normally.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    if x.shape[1] != model.dim_x:
        raise ConfigError(f"condition width {x.shape[1]} != dim_x {model.dim_x}")
    if config.time_dependent != model.time_dependent:
        raise VariantMismatchError(
            f"sampler kind {config.kind!r} does not fit variant {model.variant!r}"
        )
    if row_keys is None:
        row_keys = range(n)
    row_keys = [int(k) for k in row_keys]
    if len(row_keys) != n:
        raise ConfigError("row_keys length must match the number of rows")
    rngs = [np.random.default_rng([int(seed), key]) for key in row_keys]

    x_std = model.standardizer.transform_x(x)
    sigma0 = _resolve_init_sigma(model, config.init_sigma)
    y0 = _init_state_rows(rngs, model.dim_y, sigma0)

    if config.time_dependent:
        t_steps, refine_k = config.resolve_t_k()
        sched = model.schedule()
        if sched is None:
            raise ConfigError("cannot build a sigma ladder for a sigma_max=0 model")
        ladder = discretize(sched, t_steps)
        y, norms, etas, evals, converged, failures, iterates = _run_cdm_t(
            model, x_std, y0, ladder, refine_k, config.keep_iterates
        )
        n_updates = evals
    else:
        y, norms, etas, evals, n_updates, converged, failures, iterates = _run_cdm_0(
            model, x_std, y0, config
        )
    trajectories = [
        _trajectory_for_row(i, norms, etas, evals, n_updates, converged, iterates)
        for i in range(n)
    ]
    states = model.standardizer.inverse_y(y)
    return BatchSampleResult(states=states, trajectories=trajectories, failures=failures)
