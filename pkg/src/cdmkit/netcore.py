"""Dense-network numerics for the fixed encoder-decoder family.

Everything here is plain float64 numpy: layers, activations, a hand-rolled
reverse-mode pass for the one architecture family this package uses, and
Adam. The architecture is a multi-stream encoder (noisy state, condition,
optional noise embedding) fused by concatenation, layer-normalized, and
decoded to the concatenated [state, condition] target.

No general autodiff: the backward pass mirrors the forward pass explicitly,
which keeps runs reproducible and the dependency footprint tiny.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import DivergedTrainingError, ShapeError

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327

EMBED_BASE = 10000.0


def gelu(v: np.ndarray) -> np.ndarray:
    """Exact GELU, x * Phi(x) with Phi the standard normal CDF."""
    v = np.asarray(v, dtype=np.float64)
    return 0.5 * v * (1.0 + erf(v * _INV_SQRT2))


@dataclass
class DenseLayer:
    """One affine layer, weights laid out (out, in)."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def dim_in(self) -> int:
        return self.weights.shape[1]

    @property
    def dim_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class LayerNormParams:
    gain: np.ndarray
    offset: np.ndarray
    epsilon: float = 1e-5


def layer_norm(v: np.ndarray, p: LayerNormParams) -> np.ndarray:
    """Normalize over the last axis with the biased variance estimator."""
    v = np.asarray(v, dtype=np.float64)
    mean = v.mean(axis=-1, keepdims=True)
    centered = v - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    normed = centered / np.sqrt(var + p.epsilon)
    return p.gain * normed + p.offset


def sinusoidal_embed(sigma, d: int) -> np.ndarray:
    """Interleaved (sin, cos) features at geometrically spaced frequencies.

    Pair i uses frequency EMBED_BASE ** (-2 i / d); a scalar sigma yields a
    length-d vector, a batch of sigmas an (n, d) matrix.
    """
    if d < 2 or d % 2 != 0:
        raise ShapeError(f"embedding width must be even and >= 2, got {d}")
    sig = np.asarray(sigma, dtype=np.float64)
    freqs = EMBED_BASE ** (-2.0 * np.arange(d // 2) / d)
    angles = sig[..., None] * freqs
    out = np.empty(angles.shape[:-1] + (d,), dtype=np.float64)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


@dataclass
class NetworkParams:
    """All weights of the multi-stream denoiser.

    noise_mlp is present only for the time-conditioned variant; its first
    layer's input width doubles as the sinusoidal embedding width.
    """

    encoder_y: list[DenseLayer]
    encoder_x: list[DenseLayer]
    noise_mlp: list[DenseLayer] | None
    decoder_norm: LayerNormParams
    decoder_layers: list[DenseLayer]

    @property
    def time_dependent(self) -> bool:
        return self.noise_mlp is not None

    @property
    def dim_in_y(self) -> int:
        return self.encoder_y[0].dim_in

    @property
    def dim_in_x(self) -> int:
        return self.encoder_x[0].dim_in

    @property
    def embed_dim(self) -> int:
        if self.noise_mlp is None:
            raise ShapeError("time-independent network has no noise embedding")
        return self.noise_mlp[0].dim_in

    @property
    def fusion_width(self) -> int:
        width = self.encoder_y[-1].dim_out + self.encoder_x[-1].dim_out
        if self.noise_mlp is not None:
            width += self.noise_mlp[-1].dim_out
        return width

    @property
    def dim_out(self) -> int:
        return self.decoder_layers[-1].dim_out

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed canonical order."""
        out: list[np.ndarray] = []
        for layer in self.encoder_y + self.encoder_x + (self.noise_mlp or []):
            out.extend((layer.weights, layer.bias))
        out.extend((self.decoder_norm.gain, self.decoder_norm.offset))
        for layer in self.decoder_layers:
            out.extend((layer.weights, layer.bias))
        return out

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            encoder_y=[DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.encoder_y],
            encoder_x=[DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.encoder_x],
            noise_mlp=None
            if self.noise_mlp is None
            else [DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.noise_mlp],
            decoder_norm=LayerNormParams(
                self.decoder_norm.gain.copy(),
                self.decoder_norm.offset.copy(),
                self.decoder_norm.epsilon,
            ),
            decoder_layers=[DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.decoder_layers],
        )


@dataclass(frozen=True)
class NetWidths:
    """Layer widths of the default architecture."""

    encoder_y: int = 58
    encoder_x: int = 16
    noise: int = 10
    embed: int = 16
    decoder_hidden: int = 58

    def scaled(self, factor: float) -> "NetWidths":
        """Scale trainable-stream widths by a common factor (embed width fixed)."""
        return NetWidths(
            encoder_y=max(1, round(self.encoder_y * factor)),
            encoder_x=max(1, round(self.encoder_x * factor)),
            noise=max(1, round(self.noise * factor)),
            embed=self.embed,
            decoder_hidden=max(1, round(self.decoder_hidden * factor)),
        )


def _init_layer(dim_in: int, dim_out: int, rng: np.random.Generator) -> DenseLayer:
    # Glorot-uniform weights, zero biases.
    bound = np.sqrt(6.0 / (dim_in + dim_out))
    weights = rng.uniform(-bound, bound, size=(dim_out, dim_in))
    return DenseLayer(weights=weights, bias=np.zeros(dim_out))


def init_network(
    dim_x: int,
    dim_y: int,
    rng: np.random.Generator,
    *,
    time_dependent: bool,
    widths: NetWidths = NetWidths(),
    layer_norm_eps: float = 1e-5,
) -> NetworkParams:
    """Build a freshly initialized denoiser network.

    Each encoder is a two-layer MLP whose hidden width equals its output
    width; the decoder is layer norm, one hidden GELU layer, and a linear
    head of width dim_y + dim_x.
    """
    wy, wx, wn = widths.encoder_y, widths.encoder_x, widths.noise
    encoder_y = [_init_layer(dim_y, wy, rng), _init_layer(wy, wy, rng)]
    encoder_x = [_init_layer(dim_x, wx, rng), _init_layer(wx, wx, rng)]
    noise_mlp = None
    fusion = wy + wx
    if time_dependent:
        noise_mlp = [_init_layer(widths.embed, wn, rng), _init_layer(wn, wn, rng)]
        fusion += wn
    decoder_norm = LayerNormParams(np.ones(fusion), np.zeros(fusion), layer_norm_eps)
    decoder_layers = [
        _init_layer(fusion, widths.decoder_hidden, rng),
        _init_layer(widths.decoder_hidden, dim_y + dim_x, rng),
    ]
    return NetworkParams(encoder_y, encoder_x, noise_mlp, decoder_norm, decoder_layers)


def _check_width(name: str, arr: np.ndarray, expected: int) -> None:
    if arr.shape[-1] != expected:
        raise ShapeError(
            f"{name} expects {expected} features, got {arr.shape[-1]}"
        )


def _gelu_cached(v: np.ndarray):
    """GELU value plus the CDF factor, reused by the backward pass."""
    cdf = 0.5 * (1.0 + erf(v * _INV_SQRT2))
    return v * cdf, cdf


def _gelu_grad_cached(v: np.ndarray, cdf: np.ndarray) -> np.ndarray:
    return cdf + v * (np.exp(-0.5 * v * v) * _INV_SQRT_2PI)


def _mlp2_forward(layers: list[DenseLayer], v: np.ndarray):
    """Linear -> GELU -> Linear with cached pre-activations."""
    first, second = layers
    a1 = v @ first.weights.T + first.bias
    h1, cdf1 = _gelu_cached(a1)
    out = h1 @ second.weights.T + second.bias
    return out, (v, a1, cdf1, h1)


def _mlp2_backward(layers: list[DenseLayer], cache, d_out: np.ndarray):
    v, a1, cdf1, h1 = cache
    first, second = layers
    g_w2 = d_out.T @ h1
    g_b2 = d_out.sum(axis=0)
    d_h1 = d_out @ second.weights
    d_a1 = d_h1 * _gelu_grad_cached(a1, cdf1)
    g_w1 = d_a1.T @ v
    g_b1 = d_a1.sum(axis=0)
    d_v = d_a1 @ first.weights
    grads = [DenseLayer(g_w1, g_b1), DenseLayer(g_w2, g_b2)]
    return d_v, grads


def _norm_forward(p: LayerNormParams, f: np.ndarray):
    mean = f.mean(axis=-1, keepdims=True)
    centered = f - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + p.epsilon)
    normed = centered * inv_std
    return p.gain * normed + p.offset, (normed, inv_std)


def _norm_backward(p: LayerNormParams, cache, d_out: np.ndarray):
    normed, inv_std = cache
    g_gain = (d_out * normed).sum(axis=0)
    g_offset = d_out.sum(axis=0)
    d_normed = d_out * p.gain
    mean_dn = d_normed.mean(axis=-1, keepdims=True)
    mean_dn_n = (d_normed * normed).mean(axis=-1, keepdims=True)
    d_f = inv_std * (d_normed - mean_dn - normed * mean_dn_n)
    return d_f, LayerNormParams(g_gain, g_offset, p.epsilon)


def _forward_cached(params: NetworkParams, y_noisy: np.ndarray, x: np.ndarray, sigma):
    """Batch forward pass returning the output and the backprop cache."""
    _check_width("encoder_y layer 0", y_noisy, params.dim_in_y)
    _check_width("encoder_x layer 0", x, params.dim_in_x)
    hy, cache_y = _mlp2_forward(params.encoder_y, y_noisy)
    hx, cache_x = _mlp2_forward(params.encoder_x, x)
    if params.noise_mlp is not None:
        emb = sinusoidal_embed(np.asarray(sigma, dtype=np.float64), params.embed_dim)
        if emb.ndim == 1:
            emb = np.broadcast_to(emb, (y_noisy.shape[0], emb.shape[0]))
        hs, cache_s = _mlp2_forward(params.noise_mlp, emb)
        fused = np.concatenate([hy, hx, hs], axis=1)
    else:
        cache_s = None
        fused = np.concatenate([hy, hx], axis=1)
    normed, cache_n = _norm_forward(params.decoder_norm, fused)
    a_d = normed @ params.decoder_layers[0].weights.T + params.decoder_layers[0].bias
    h_d, cdf_d = _gelu_cached(a_d)
    z = h_d @ params.decoder_layers[1].weights.T + params.decoder_layers[1].bias
    cache = (cache_y, cache_x, cache_s, cache_n, normed, a_d, cdf_d, h_d,
             hy.shape[1], hx.shape[1])
    return z, cache


def forward(
    params: NetworkParams,
    y_noisy: np.ndarray,
    x: np.ndarray,
    sigma=None,
) -> np.ndarray:
    """Deterministic forward pass; accepts single vectors or row batches.

    sigma must be supplied exactly when the network carries a noise branch.
    """
    if params.time_dependent and sigma is None:
        raise ShapeError("time-conditioned network requires a sigma input")
    if not params.time_dependent and sigma is not None:
        raise ShapeError("time-independent network takes no sigma input")
    y_arr = np.asarray(y_noisy, dtype=np.float64)
    x_arr = np.asarray(x, dtype=np.float64)
    single = y_arr.ndim == 1
    if single:
        y_arr = y_arr[None, :]
        x_arr = x_arr[None, :]
    z, _ = _forward_cached(params, y_arr, x_arr, sigma)
    return z[0] if single else z


def _backward(params: NetworkParams, cache, d_z: np.ndarray) -> NetworkParams:
    cache_y, cache_x, cache_s, cache_n, normed, a_d, cdf_d, h_d, wy, wx = cache
    head = params.decoder_layers[1]
    g_wh = d_z.T @ h_d
    g_bh = d_z.sum(axis=0)
    d_hd = d_z @ head.weights
    d_ad = d_hd * _gelu_grad_cached(a_d, cdf_d)
    g_wd = d_ad.T @ normed
    g_bd = d_ad.sum(axis=0)
    d_normed = d_ad @ params.decoder_layers[0].weights
    d_fused, g_norm = _norm_backward(params.decoder_norm, cache_n, d_normed)
    d_hy = d_fused[:, :wy]
    d_hx = d_fused[:, wy : wy + wx]
    _, g_ency = _mlp2_backward(params.encoder_y, cache_y, d_hy)
    _, g_encx = _mlp2_backward(params.encoder_x, cache_x, d_hx)
    g_noise = None
    if params.noise_mlp is not None:
        d_hs = d_fused[:, wy + wx :]
        _, g_noise = _mlp2_backward(params.noise_mlp, cache_s, d_hs)
    return NetworkParams(
        encoder_y=g_ency,
        encoder_x=g_encx,
        noise_mlp=g_noise,
        decoder_norm=g_norm,
        decoder_layers=[DenseLayer(g_wd, g_bd), DenseLayer(g_wh, g_bh)],
    )


def loss_and_grad(
    params: NetworkParams,
    y_noisy: np.ndarray,
    x: np.ndarray,
    sigma,
    target: np.ndarray,
    *,
    batch_index: int = 0,
    epoch: int = 0,
):
    """Mean squared-norm reconstruction loss and its exact gradient.

    loss = mean over the batch of ||z_pred - target||_2^2. The gradient is
    returned in NetworkParams layout.
    """
    if params.time_dependent and sigma is None:
        raise ShapeError("time-conditioned network requires a sigma input")
    if not params.time_dependent and sigma is not None:
        raise ShapeError("time-independent network takes no sigma input")
    y_arr = np.atleast_2d(np.asarray(y_noisy, dtype=np.float64))
    x_arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t_arr = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if t_arr.shape[0] == 0:
        raise ShapeError("empty batch")
    _check_width("decoder head", t_arr, params.dim_out)
    z, cache = _forward_cached(params, y_arr, x_arr, sigma)
    resid = z - t_arr
    loss = float((resid * resid).sum() / resid.shape[0])
    if not np.isfinite(loss):
        raise DivergedTrainingError(
            f"non-finite loss at epoch {epoch}, batch {batch_index}",
            epoch=epoch,
            batch_index=batch_index,
        )
    grads = _backward(params, cache, (2.0 / resid.shape[0]) * resid)
    return loss, grads


@dataclass
class AdamState:
    """Adam moments, mirroring a parameter container's arrays() order."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        arrays = params.arrays()
        return cls(
            first_moment=[np.zeros_like(a) for a in arrays],
            second_moment=[np.zeros_like(a) for a in arrays],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(params, grads, state: AdamState):
    """One Adam update with bias correction; mutates params and state in place."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# --- condition-only regressor (the baseline backbone) ---------------------


@dataclass
class RegressorParams:
    """Backbone with the noisy-state and noise streams removed.

    Structure: condition encoder MLP, layer norm, GELU hidden layer, linear
    head of width dim_y. Shares every numeric kernel with NetworkParams.
    """

    encoder_x: list[DenseLayer]
    decoder_norm: LayerNormParams
    decoder_layers: list[DenseLayer]

    @property
    def dim_in_x(self) -> int:
        return self.encoder_x[0].dim_in

    @property
    def dim_out(self) -> int:
        return self.decoder_layers[-1].dim_out

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in self.encoder_x:
            out.extend((layer.weights, layer.bias))
        out.extend((self.decoder_norm.gain, self.decoder_norm.offset))
        for layer in self.decoder_layers:
            out.extend((layer.weights, layer.bias))
        return out

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "RegressorParams":
        return RegressorParams(
            encoder_x=[DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.encoder_x],
            decoder_norm=LayerNormParams(
                self.decoder_norm.gain.copy(),
                self.decoder_norm.offset.copy(),
                self.decoder_norm.epsilon,
            ),
            decoder_layers=[DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.decoder_layers],
        )


def init_regressor(
    dim_x: int,
    dim_y: int,
    rng: np.random.Generator,
    *,
    widths: NetWidths = NetWidths(),
    layer_norm_eps: float = 1e-5,
) -> RegressorParams:
    wx = widths.encoder_x
    encoder_x = [_init_layer(dim_x, wx, rng), _init_layer(wx, wx, rng)]
    decoder_norm = LayerNormParams(np.ones(wx), np.zeros(wx), layer_norm_eps)
    decoder_layers = [
        _init_layer(wx, widths.decoder_hidden, rng),
        _init_layer(widths.decoder_hidden, dim_y, rng),
    ]
    return RegressorParams(encoder_x, decoder_norm, decoder_layers)


def regressor_forward_cached(params: RegressorParams, x: np.ndarray):
    _check_width("encoder_x layer 0", x, params.dim_in_x)
    hx, cache_x = _mlp2_forward(params.encoder_x, x)
    normed, cache_n = _norm_forward(params.decoder_norm, hx)
    a_d = normed @ params.decoder_layers[0].weights.T + params.decoder_layers[0].bias
    h_d, cdf_d = _gelu_cached(a_d)
    out = h_d @ params.decoder_layers[1].weights.T + params.decoder_layers[1].bias
    return out, (cache_x, cache_n, normed, a_d, cdf_d, h_d)


def regressor_forward(params: RegressorParams, x: np.ndarray) -> np.ndarray:
    x_arr = np.asarray(x, dtype=np.float64)
    single = x_arr.ndim == 1
    if single:
        x_arr = x_arr[None, :]
    out, _ = regressor_forward_cached(params, x_arr)
    return out[0] if single else out


def regressor_backward(params: RegressorParams, cache, d_out: np.ndarray) -> RegressorParams:
    cache_x, cache_n, normed, a_d, cdf_d, h_d = cache
    head = params.decoder_layers[1]
    g_wh = d_out.T @ h_d
    g_bh = d_out.sum(axis=0)
    d_hd = d_out @ head.weights
    d_ad = d_hd * _gelu_grad_cached(a_d, cdf_d)
    g_wd = d_ad.T @ normed
    g_bd = d_ad.sum(axis=0)
    d_normed = d_ad @ params.decoder_layers[0].weights
    d_hx, g_norm = _norm_backward(params.decoder_norm, cache_n, d_normed)
    _, g_encx = _mlp2_backward(params.encoder_x, cache_x, d_hx)
    return RegressorParams(
        encoder_x=g_encx,
        decoder_norm=g_norm,
        decoder_layers=[DenseLayer(g_wd, g_bd), DenseLayer(g_wh, g_bh)],
    )
