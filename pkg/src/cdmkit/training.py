"""Training loops for the denoising models and the regressor baselines.

Both loops share the same skeleton: Adam on shuffled mini-batches, a
deterministic validation loss evaluated every epoch, and early stopping
that activates only after a minimum number of epochs, returning the
parameters from the best validation epoch.

The denoising validation loss is stochastic by nature (it averages over
corruption draws), so each run freezes a set of (t, eps) probes per
validation sample up front; successive evaluations are then comparable
and the patience rule is well defined.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .data import DataSplits, Standardizer
from .errors import ConfigError
from .model import (
    CdmModel,
    VARIANT_TIME_DEPENDENT,
    VARIANTS,
    build_cdm,
    make_training_batch,
)
from .netcore import AdamState, NetWidths, RegressorParams
from .physics import ConstraintSet, residuals_batch
from .schedule import SineSchedule


@dataclass
class TrainConfig:
    variant: str = VARIANT_TIME_DEPENDENT
    batch_size: int = 128
    lr: float = 1e-3
    min_epochs: int = 4500
    patience: int = 20
    sigma_max: float = 1.0
    schedule_s: float = 0.008
    seed: int = 0
    physics_weight: float = 1.0
    val_probes: int = 16
    max_epochs: int | None = None
    widths: NetWidths = field(default_factory=NetWidths)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.batch_size < 1 or self.patience < 1 or self.min_epochs < 1:
            raise ConfigError("batch_size, patience and min_epochs must be >= 1")
        if self.sigma_max < 0.0:
            raise ConfigError(f"sigma_max must be nonnegative, got {self.sigma_max}")
        if self.physics_weight < 0.0:
            raise ConfigError("physics_weight must be nonnegative")
        if self.max_epochs is not None and self.max_epochs < self.min_epochs:
            raise ConfigError("max_epochs must be >= min_epochs")

    def schedule(self) -> SineSchedule | None:
        """The corruption schedule; None when sigma_max is zero."""
        if self.sigma_max == 0.0:
            return None
        return SineSchedule(self.sigma_max, self.schedule_s)


@dataclass
class TrainReport:
    epochs_run: int
    train_loss_trace: list[float]
    val_loss_trace: list[float]
    best_epoch: int
    best_val_loss: float
    wall_time: float

    def to_jsonable(self, include_wall_time: bool = False) -> dict:
        """Report dict; wall_time is volatile and excluded by default so
        written artifacts stay bit-identical across runs."""
        doc = {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "train_loss_trace": self.train_loss_trace,
            "val_loss_trace": self.val_loss_trace,
        }
        if include_wall_time:
            doc["wall_time"] = self.wall_time
        return doc


@dataclass
class ValProbes:
    """Frozen corruption draws for the validation split."""

    t: np.ndarray    # (n_val, n_probes)
    eps: np.ndarray  # (n_val, n_probes, dim_y)

    @classmethod
    def draw(cls, n_val: int, dim_y: int, n_probes: int, rng: np.random.Generator):
        return cls(
            t=rng.random((n_val, n_probes)),
            eps=rng.standard_normal((n_val, n_probes, dim_y)),
        )


@dataclass
class RegressorModel:
    """Condition-to-state regressor sharing the decoder backbone."""

    params: RegressorParams
    dim_x: int
    dim_y: int
    standardizer: Standardizer
    physics_weight: float = 0.0

    def predict_std(self, xs: np.ndarray) -> np.ndarray:
        return netcore.regressor_forward(self.params, xs)

    def predict(self, x: np.ndarray) -> np.ndarray:
        xs = self.standardizer.transform_x(x)
        return self.standardizer.inverse_y(netcore.regressor_forward(self.params, xs))


def validation_loss(model, x_val: np.ndarray, y_val: np.ndarray, probes: ValProbes | None = None) -> float:
    """Deterministic validation loss, standardized-space inputs.

    Denoising models average the reconstruction loss over the frozen
    probes; regressors use plain MSE of squared norms. Identical inputs
    always give the identical value.
    """
    if isinstance(model, RegressorModel):
        pred = netcore.regressor_forward(model.params, x_val)
        resid = pred - y_val
        return float((resid * resid).sum() / y_val.shape[0])
    if probes is None:
        raise ConfigError("denoising validation needs frozen probes")
    n_val, n_probes = probes.t.shape
    schedule = model.schedule()
    if schedule is None:
        sig = np.zeros((n_val, n_probes))
    else:
        sig = schedule.sigma_of_t(probes.t)
    y_noisy = (y_val[:, None, :] + sig[..., None] * probes.eps).reshape(
        n_val * n_probes, -1
    )
    x_rep = np.repeat(x_val, n_probes, axis=0)
    sig_flat = sig.reshape(-1)
    target = np.concatenate([y_val, x_val], axis=1)
    target_rep = np.repeat(target, n_probes, axis=0)
    z = netcore.forward(
        model.params, y_noisy, x_rep, sig_flat if model.time_dependent else None
    )
    resid = z - target_rep
    return float((resid * resid).sum() / resid.shape[0])


def _check_splits(splits: DataSplits) -> None:
    if splits.x_train.shape[0] == 0 or splits.x_val.shape[0] == 0:
        raise ConfigError("train and validation splits must be nonempty")


def train_cdm(splits: DataSplits, config: TrainConfig) -> tuple[CdmModel, TrainReport]:
    """Denoising training: per step, each sample draws its own noise level
    t ~ U(0,1), is corrupted at sigma(t), and the network regresses the
    clean [y, x] concatenation. Returns the best-validation-epoch model.
    """
    _check_splits(splits)
    t_start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    model = build_cdm(
        dim_x=splits.x_train.shape[1],
        dim_y=splits.y_train.shape[1],
        standardizer=splits.standardizer,
        rng=rng,
        variant=config.variant,
        widths=config.widths,
        sigma_max=config.sigma_max,
        schedule_s=config.schedule_s,
    )
    probes = ValProbes.draw(
        splits.x_val.shape[0], splits.y_train.shape[1], config.val_probes, rng
    )
    schedule = config.schedule()
    adam = AdamState.for_params(model.params, lr=config.lr)
    n = splits.x_train.shape[0]
    time_dep = model.time_dependent

    best_val = np.inf
    best_epoch = 0
    best_params = model.params.copy()
    since_best = 0
    train_trace: list[float] = []
    val_trace: list[float] = []
    epoch = 0
    while True:
        epoch += 1
        perm = rng.permutation(n)
        sq_sum = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            xb, yb = splits.x_train[idx], splits.y_train[idx]
            y_noisy, sigmas, target = make_training_batch(xb, yb, schedule, rng)
            loss, grads = netcore.loss_and_grad(
                model.params,
                y_noisy,
                xb,
                sigmas if time_dep else None,
                target,
                batch_index=b,
                epoch=epoch,
            )
            netcore.adam_step(model.params, grads, adam)
            sq_sum += loss * idx.size
        train_trace.append(sq_sum / n)
        val = validation_loss(model, splits.x_val, splits.y_val, probes)
        val_trace.append(val)
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_params = model.params.copy()
            since_best = 0
        else:
            since_best += 1
        if epoch >= config.min_epochs and since_best >= config.patience:
            break
        if config.max_epochs is not None and epoch >= config.max_epochs:
            break
    model.params = best_params
    report = TrainReport(
        epochs_run=epoch,
        train_loss_trace=train_trace,
        val_loss_trace=val_trace,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        wall_time=time.perf_counter() - t_start,
    )
    return model, report


def _physics_grad_terms(
    cs: ConstraintSet,
    standardizer: Standardizer,
    x_phys: np.ndarray,
    pred_std: np.ndarray,
    weight: float,
):
    """Loss and gradient (w.r.t. standardized predictions) of the penalty
    mean ||G(x, f(x))||^2 over the batch."""
    n = pred_std.shape[0]
    y_phys = standardizer.inverse_y(pred_std)
    r = residuals_batch(cs, x_phys, y_phys)  # (n, m [+ nl])
    loss = float((r * r).sum() / n) * weight
    m = cs.m_affine
    # affine rows: d r_i / d f = A_i * y_scale / scale_i
    mat = (cs.a_matrix * standardizer.y_scale[None, :]) / cs.scale[:, None]
    grad = (2.0 * weight / n) * (r[:, :m] @ mat)
    if cs.nonlinear:
        h = 1e-6
        for i, f in enumerate(cs.nonlinear):
            s_i = cs.nonlinear_scale[i]
            for row in range(n):
                base_r = r[row, m + i]
                for j in range(y_phys.shape[1]):
                    bump = np.zeros(y_phys.shape[1])
                    bump[j] = h
                    d = (f(x_phys[row], y_phys[row] + bump) -
                         f(x_phys[row], y_phys[row] - bump)) / (2 * h * s_i)
                    grad[row, j] += (2.0 * weight / n) * base_r * d * standardizer.y_scale[j]
    return loss, grad


def train_regressor(
    splits: DataSplits,
    config: TrainConfig,
    physics: ConstraintSet | None = None,
) -> tuple[RegressorModel, TrainReport]:
    """Composite-loss regressor: MSE plus physics_weight times the mean
    squared normalized constraint residual of the de-standardized
    predictions. With physics None (or weight 0) this is plain regression.
    """
    _check_splits(splits)
    t_start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    dim_x = splits.x_train.shape[1]
    dim_y = splits.y_train.shape[1]
    params = netcore.init_regressor(dim_x, dim_y, rng, widths=config.widths)
    model = RegressorModel(
        params=params,
        dim_x=dim_x,
        dim_y=dim_y,
        standardizer=splits.standardizer,
        physics_weight=config.physics_weight if physics is not None else 0.0,
    )
    adam = AdamState.for_params(params, lr=config.lr)
    n = splits.x_train.shape[0]
    weight = config.physics_weight if physics is not None else 0.0
    x_train_phys = splits.standardizer.inverse_x(splits.x_train) if weight > 0.0 else None

    best_val = np.inf
    best_epoch = 0
    best_params = params.copy()
    since_best = 0
    train_trace: list[float] = []
    val_trace: list[float] = []
    epoch = 0
    while True:
        epoch += 1
        perm = rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb, yb = splits.x_train[idx], splits.y_train[idx]
            pred, cache = netcore.regressor_forward_cached(model.params, xb)
            resid = pred - yb
            loss = float((resid * resid).sum() / idx.size)
            d_out = (2.0 / idx.size) * resid
            if weight > 0.0:
                p_loss, p_grad = _physics_grad_terms(
                    physics, splits.standardizer, x_train_phys[idx], pred, weight
                )
                loss += p_loss
                d_out = d_out + p_grad
            grads = netcore.regressor_backward(model.params, cache, d_out)
            netcore.adam_step(model.params, grads, adam)
            sq_sum += loss * idx.size
        train_trace.append(sq_sum / n)
        val = validation_loss(model, splits.x_val, splits.y_val)
        val_trace.append(val)
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_params = model.params.copy()
            since_best = 0
        else:
            since_best += 1
        if epoch >= config.min_epochs and since_best >= config.patience:
            break
        if config.max_epochs is not None and epoch >= config.max_epochs:
            break
    model.params = best_params
    report = TrainReport(
        epochs_run=epoch,
        train_loss_trace=train_trace,
        val_loss_trace=val_trace,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        wall_time=time.perf_counter() - t_start,
    )
    return model, report


def cdm_param_count(dim_x: int, dim_y: int, widths: NetWidths, time_dependent: bool) -> int:
    params = netcore.init_network(
        dim_x, dim_y, np.random.default_rng(0), time_dependent=time_dependent, widths=widths
    )
    return params.n_params()


def regressor_param_count(dim_x: int, dim_y: int, widths: NetWidths) -> int:
    params = netcore.init_regressor(dim_x, dim_y, np.random.default_rng(0), widths=widths)
    return params.n_params()


def match_regressor_widths(
    target_params: int, dim_x: int, dim_y: int, base: NetWidths = NetWidths()
) -> NetWidths:
    """Scale the backbone widths by a common factor so the regressor's
    parameter count comes closest to target_params."""
    best = base
    best_gap = abs(regressor_param_count(dim_x, dim_y, base) - target_params)
    for factor in np.linspace(0.2, 12.0, 400):
        widths = base.scaled(float(factor))
        gap = abs(regressor_param_count(dim_x, dim_y, widths) - target_params)
        if gap < best_gap:
            best, best_gap = widths, gap
    return best
