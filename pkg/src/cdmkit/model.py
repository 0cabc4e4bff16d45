"""The two conditional denoising model variants and the corruption kernel.

A CdmModel wraps the network, its variant tag, the feature dimensions and
the standardizer it was trained with. denoise() operates in standardized
(model) space: the noisy state and condition go in standardized, the
state prediction and condition reconstruction come out standardized.
Samplers own the conversion to physical units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import netcore
from .data import Standardizer
from .errors import ConfigError, VariantMismatchError
from .netcore import NetWidths, NetworkParams
from .schedule import SineSchedule

VARIANT_TIME_DEPENDENT = "cdm-t"
VARIANT_TIME_INDEPENDENT = "cdm-0"
VARIANTS = (VARIANT_TIME_DEPENDENT, VARIANT_TIME_INDEPENDENT)

CHECKPOINT_FORMAT = "cdmkit-checkpoint-v1"


def corrupt(y: np.ndarray, sigma, rng: np.random.Generator) -> np.ndarray:
    """Add isotropic Gaussian noise of standard deviation sigma.

    sigma may be a scalar or one value per row of y. A generator draw is
    consumed even at sigma 0 (where the result equals y exactly), so call
    sites stay stream-aligned across noise settings.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    sig = np.asarray(sigma, dtype=np.float64)
    if np.any(sig < 0.0):
        raise ConfigError("sigma must be nonnegative")
    eps = rng.standard_normal(y_arr.shape)
    if sig.ndim == 1:
        sig = sig[:, None]
    return y_arr + sig * eps


@dataclass
class CorruptionKernel:
    """Gaussian forward kernel tied to a noise schedule."""

    schedule: SineSchedule

    def corrupt_at_t(self, y: np.ndarray, t, rng: np.random.Generator) -> np.ndarray:
        return corrupt(y, self.schedule.sigma_of_t(t), rng)


def make_training_batch(
    xs: np.ndarray,
    ys: np.ndarray,
    schedule: SineSchedule | None,
    rng: np.random.Generator,
):
    """Assemble one denoising batch from standardized (x, y) rows.

    Per sample: draw t uniform on [0, 1], corrupt y at sigma(t), and set
    the regression target to the concatenation [y, x]. The target never
    depends on the draw, only the input does. A None schedule means no
    corruption (sigma identically zero).

    Returns (y_noisy, sigmas, target).
    """
    n = ys.shape[0]
    t = rng.random(n)
    sigmas = schedule.sigma_of_t(t) if schedule is not None else np.zeros(n)
    y_noisy = corrupt(ys, sigmas, rng)
    target = np.concatenate([ys, xs], axis=1)
    return y_noisy, sigmas, target


@dataclass
class CdmModel:
    """A trained denoiser plus everything needed to run it."""

    params: NetworkParams
    variant: str
    dim_x: int
    dim_y: int
    standardizer: Standardizer
    sigma_max: float = 1.0
    schedule_s: float = 0.008

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if (self.variant == VARIANT_TIME_DEPENDENT) != self.params.time_dependent:
            raise VariantMismatchError(
                f"variant tag {self.variant!r} does not match network structure"
            )
        if self.params.dim_out != self.dim_x + self.dim_y:
            raise ConfigError(
                f"decoder width {self.params.dim_out} != dim_y+dim_x "
                f"{self.dim_y + self.dim_x}"
            )

    @property
    def time_dependent(self) -> bool:
        return self.variant == VARIANT_TIME_DEPENDENT

    def denoise(self, y_noisy: np.ndarray, x: np.ndarray, sigma=None):
        """Split the network output into (y_hat, x_hat), standardized space.

        sigma is required for the time-conditioned variant and must be
        omitted for the time-independent one.
        """
        if self.time_dependent and sigma is None:
            raise VariantMismatchError("cdm-t denoise requires a sigma")
        if not self.time_dependent and sigma is not None:
            raise VariantMismatchError("cdm-0 denoise takes no sigma")
        z = netcore.forward(self.params, y_noisy, x, sigma)
        return z[..., : self.dim_y], z[..., self.dim_y :]

    def schedule(self) -> SineSchedule | None:
        """Training corruption schedule; None for the degenerate sigma_max=0."""
        if self.sigma_max == 0.0:
            return None
        return SineSchedule(self.sigma_max, self.schedule_s)


def _layers_to_jsonable(layers):
    return [
        {"weights": l.weights.tolist(), "bias": l.bias.tolist()} for l in layers
    ]


def _layers_from_jsonable(doc):
    return [
        netcore.DenseLayer(
            np.array(d["weights"], dtype=np.float64),
            np.array(d["bias"], dtype=np.float64),
        )
        for d in doc
    ]


def _standardizer_to_jsonable(std: Standardizer):
    return {
        "x_mean": std.x_mean.tolist(),
        "x_scale": std.x_scale.tolist(),
        "y_mean": std.y_mean.tolist(),
        "y_scale": std.y_scale.tolist(),
    }


def _standardizer_from_jsonable(doc) -> Standardizer:
    return Standardizer(
        np.array(doc["x_mean"], dtype=np.float64),
        np.array(doc["x_scale"], dtype=np.float64),
        np.array(doc["y_mean"], dtype=np.float64),
        np.array(doc["y_scale"], dtype=np.float64),
    )


def save_checkpoint(model, path: str | Path) -> None:
    """Write a self-describing JSON checkpoint; round-trips bit-exactly."""
    from .training import RegressorModel  # local import, no cycle at module load

    if isinstance(model, CdmModel):
        doc = {
            "format": CHECKPOINT_FORMAT,
            "kind": "cdm",
            "variant": model.variant,
            "dim_x": model.dim_x,
            "dim_y": model.dim_y,
            "sigma_max": model.sigma_max,
            "schedule_s": model.schedule_s,
            "standardizer": _standardizer_to_jsonable(model.standardizer),
            "network": {
                "encoder_y": _layers_to_jsonable(model.params.encoder_y),
                "encoder_x": _layers_to_jsonable(model.params.encoder_x),
                "noise_mlp": None
                if model.params.noise_mlp is None
                else _layers_to_jsonable(model.params.noise_mlp),
                "decoder_norm": {
                    "gain": model.params.decoder_norm.gain.tolist(),
                    "offset": model.params.decoder_norm.offset.tolist(),
                    "epsilon": model.params.decoder_norm.epsilon,
                },
                "decoder_layers": _layers_to_jsonable(model.params.decoder_layers),
            },
        }
    elif isinstance(model, RegressorModel):
        doc = {
            "format": CHECKPOINT_FORMAT,
            "kind": "regressor",
            "dim_x": model.dim_x,
            "dim_y": model.dim_y,
            "physics_weight": model.physics_weight,
            "standardizer": _standardizer_to_jsonable(model.standardizer),
            "network": {
                "encoder_x": _layers_to_jsonable(model.params.encoder_x),
                "decoder_norm": {
                    "gain": model.params.decoder_norm.gain.tolist(),
                    "offset": model.params.decoder_norm.offset.tolist(),
                    "epsilon": model.params.decoder_norm.epsilon,
                },
                "decoder_layers": _layers_to_jsonable(model.params.decoder_layers),
            },
        }
    else:
        raise ConfigError(f"cannot checkpoint object of type {type(model).__name__}")
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path: str | Path):
    """Load a checkpoint written by save_checkpoint."""
    from .training import RegressorModel

    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"not a cdmkit checkpoint: {path}")
    std = _standardizer_from_jsonable(doc["standardizer"])
    net = doc["network"]
    norm = netcore.LayerNormParams(
        np.array(net["decoder_norm"]["gain"], dtype=np.float64),
        np.array(net["decoder_norm"]["offset"], dtype=np.float64),
        float(net["decoder_norm"]["epsilon"]),
    )
    if doc["kind"] == "cdm":
        params = NetworkParams(
            encoder_y=_layers_from_jsonable(net["encoder_y"]),
            encoder_x=_layers_from_jsonable(net["encoder_x"]),
            noise_mlp=None
            if net["noise_mlp"] is None
            else _layers_from_jsonable(net["noise_mlp"]),
            decoder_norm=norm,
            decoder_layers=_layers_from_jsonable(net["decoder_layers"]),
        )
        return CdmModel(
            params=params,
            variant=doc["variant"],
            dim_x=int(doc["dim_x"]),
            dim_y=int(doc["dim_y"]),
            standardizer=std,
            sigma_max=float(doc["sigma_max"]),
            schedule_s=float(doc["schedule_s"]),
        )
    if doc["kind"] == "regressor":
        params = netcore.RegressorParams(
            encoder_x=_layers_from_jsonable(net["encoder_x"]),
            decoder_norm=norm,
            decoder_layers=_layers_from_jsonable(net["decoder_layers"]),
        )
        return RegressorModel(
            params=params,
            dim_x=int(doc["dim_x"]),
            dim_y=int(doc["dim_y"]),
            standardizer=std,
            physics_weight=float(doc.get("physics_weight", 0.0)),
        )
    raise ConfigError(f"unknown checkpoint kind {doc['kind']!r}")


def build_cdm(
    dim_x: int,
    dim_y: int,
    standardizer: Standardizer,
    rng: np.random.Generator,
    *,
    variant: str = VARIANT_TIME_DEPENDENT,
    widths: NetWidths = NetWidths(),
    sigma_max: float = 1.0,
    schedule_s: float = 0.008,
) -> CdmModel:
    """Freshly initialized model of the requested variant."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    params = netcore.init_network(
        dim_x,
        dim_y,
        rng,
        time_dependent=(variant == VARIANT_TIME_DEPENDENT),
        widths=widths,
    )
    return CdmModel(
        params=params,
        variant=variant,
        dim_x=dim_x,
        dim_y=dim_y,
        standardizer=standardizer,
        sigma_max=sigma_max,
        schedule_s=schedule_s,
    )
