"""Encoder-decoder segmentation network assembled from the layer primitives.

Structure: ``depth`` encoder blocks (two 3x3 conv+ReLU, channels doubling,
then 2x2 max-pool), a bottleneck block, and a symmetric decoder (nearest
upsample, skip concatenation, two conv+ReLU), finished by a 1x1 convolution
and a sigmoid.  Attention gates can scale the skip tensors, the bottleneck,
or both.  Parameters live in a flat name->array dict so the optimizer and
the checkpoint format stay trivial.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..features import PolarImage
from .layers import (attention_gate_backward, attention_gate_forward,
                     concat_backward, concat_forward, conv2d_backward,
                     conv2d_forward, maxpool2_backward, maxpool2_forward,
                     relu_backward, relu_forward, sigmoid_backward,
                     sigmoid_forward, upsample2_backward, upsample2_forward)
from .loss import ALPHA_DEFAULT, BETA_DEFAULT, EPS_DEFAULT, tversky_loss_grad

ATTENTION_MODES = ("none", "skip", "bottleneck", "both")


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 16
    base_filters: int = 64
    depth: int = 3
    kernel: int = 3
    attention: str = "none"
    learning_rate: float = 0.005
    seed: int = 0
    alpha: float = ALPHA_DEFAULT
    beta: float = BETA_DEFAULT

    def __post_init__(self):
        if self.in_channels < 1 or self.base_filters < 1 or self.depth < 1:
            raise ValueError("channels, filters and depth must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.attention not in ATTENTION_MODES:
            raise ValueError(f"attention must be one of {ATTENTION_MODES}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")

    @property
    def gate_skips(self) -> bool:
        return self.attention in ("skip", "both")

    @property
    def gate_bottleneck(self) -> bool:
        return self.attention in ("bottleneck", "both")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        return cls(**d)


def pad_to_multiple(side: int, depth: int) -> int:
    """Smallest multiple of 2**depth that is >= side."""
    m = 2 ** depth
    return ((side + m - 1) // m) * m


def pad_image(data, target: int):
    """(side, side, F) disk image -> zero-padded (F, target, target)."""
    side = data.shape[0]
    if target < side:
        raise ValueError("target smaller than image")
    out = np.zeros((data.shape[2], target, target), dtype=data.dtype)
    out[:, :side, :side] = np.moveaxis(data, -1, 0)
    return out


def _enc_channels(config: UNetConfig, level: int):
    c_in = config.in_channels if level == 0 \
        else config.base_filters * 2 ** (level - 1)
    return c_in, config.base_filters * 2 ** level


def _he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _init_conv(rng, params, name, c_in, c_out, k, dtype):
    params[f"{name}_w"] = _he_uniform(rng, (c_out, c_in, k, k),
                                      c_in * k * k, dtype)
    params[f"{name}_b"] = np.zeros(c_out, dtype=dtype)


def _init_gate(rng, params, name, c_s, c_g, dtype):
    ci = max(1, c_s // 2)
    params[f"{name}_wx"] = _he_uniform(rng, (ci, c_s, 1, 1), c_s, dtype)
    params[f"{name}_wg"] = _he_uniform(rng, (ci, c_g, 1, 1), c_g, dtype)
    params[f"{name}_bj"] = np.zeros(ci, dtype=dtype)
    params[f"{name}_psi_w"] = _he_uniform(rng, (1, ci, 1, 1), ci, dtype)
    # start with gates mostly open so early training resembles a plain net
    params[f"{name}_psi_b"] = np.full(1, 1.0, dtype=dtype)


def init_params(config: UNetConfig, dtype=np.float64) -> dict:
    """Seeded He-uniform weights, zero biases; fixed creation order."""
    rng = np.random.default_rng(config.seed)
    k = config.kernel
    params: dict = {}
    for l in range(config.depth):
        c_in, c_out = _enc_channels(config, l)
        _init_conv(rng, params, f"enc{l}_c1", c_in, c_out, k, dtype)
        _init_conv(rng, params, f"enc{l}_c2", c_out, c_out, k, dtype)
    c_bot_in = config.base_filters * 2 ** (config.depth - 1)
    c_bot = config.base_filters * 2 ** config.depth
    _init_conv(rng, params, "bot_c1", c_bot_in, c_bot, k, dtype)
    _init_conv(rng, params, "bot_c2", c_bot, c_bot, k, dtype)
    if config.gate_bottleneck:
        _init_gate(rng, params, "bot_att", c_bot, c_bot, dtype)
    for l in reversed(range(config.depth)):
        c_skip = config.base_filters * 2 ** l
        c_deep = config.base_filters * 2 ** (l + 1)
        if config.gate_skips:
            _init_gate(rng, params, f"dec{l}_att", c_skip, c_deep, dtype)
        _init_conv(rng, params, f"dec{l}_c1", c_deep + c_skip, c_skip, k,
                   dtype)
        _init_conv(rng, params, f"dec{l}_c2", c_skip, c_skip, k, dtype)
    _init_conv(rng, params, "out", config.base_filters, 1, 1, dtype)
    return params


def param_count(params: dict) -> int:
    return int(sum(v.size for v in params.values()))


def open_attention_gates(params: dict) -> dict:
    """Copy of params with every gate forced to output exactly 1."""
    out = dict(params)
    for name, v in params.items():
        if name.endswith("_psi_w"):
            out[name] = np.zeros_like(v)
        elif name.endswith("_psi_b"):
            out[name] = np.full_like(v, 500.0)  # sigmoid(500) == 1.0 exactly
    return out


def _gate_params(params, name):
    return (params[f"{name}_wx"], params[f"{name}_wg"], params[f"{name}_bj"],
            params[f"{name}_psi_w"], params[f"{name}_psi_b"])


def forward_batch(params: dict, config: UNetConfig, x):
    """x: (B, C, S, S) with S divisible by 2**depth.  Returns (yhat, cache)."""
    if x.ndim != 4 or x.shape[1] != config.in_channels:
        raise ValueError("input must be (batch, in_channels, side, side)")
    if x.shape[2] % 2 ** config.depth or x.shape[3] % 2 ** config.depth:
        raise ValueError(f"spatial side must divide 2**{config.depth}")
    dtype = params["out_w"].dtype
    h = x.astype(dtype, copy=False)
    p = config.kernel // 2
    cache: dict = {}
    skips = []
    for l in range(config.depth):
        h, cache[f"enc{l}_c1"] = conv2d_forward(
            h, params[f"enc{l}_c1_w"], params[f"enc{l}_c1_b"], p)
        h, cache[f"enc{l}_r1"] = relu_forward(h)
        h, cache[f"enc{l}_c2"] = conv2d_forward(
            h, params[f"enc{l}_c2_w"], params[f"enc{l}_c2_b"], p)
        h, cache[f"enc{l}_r2"] = relu_forward(h)
        skips.append(h)
        h, cache[f"enc{l}_pool"] = maxpool2_forward(h)
    h, cache["bot_c1"] = conv2d_forward(h, params["bot_c1_w"],
                                        params["bot_c1_b"], p)
    h, cache["bot_r1"] = relu_forward(h)
    h, cache["bot_c2"] = conv2d_forward(h, params["bot_c2_w"],
                                        params["bot_c2_b"], p)
    h, cache["bot_r2"] = relu_forward(h)
    if config.gate_bottleneck:
        h, cache["bot_att"] = attention_gate_forward(
            h, h, *_gate_params(params, "bot_att"))
    for l in reversed(range(config.depth)):
        u, _ = upsample2_forward(h)
        s = skips[l]
        if config.gate_skips:
            s, cache[f"dec{l}_att"] = attention_gate_forward(
                s, u, *_gate_params(params, f"dec{l}_att"))
        h, cache[f"dec{l}_cat"] = concat_forward(u, s)
        h, cache[f"dec{l}_c1"] = conv2d_forward(
            h, params[f"dec{l}_c1_w"], params[f"dec{l}_c1_b"], p)
        h, cache[f"dec{l}_r1"] = relu_forward(h)
        h, cache[f"dec{l}_c2"] = conv2d_forward(
            h, params[f"dec{l}_c2_w"], params[f"dec{l}_c2_b"], p)
        h, cache[f"dec{l}_r2"] = relu_forward(h)
    logit, cache["out"] = conv2d_forward(h, params["out_w"], params["out_b"],
                                         0)
    yhat, cache["sig"] = sigmoid_forward(logit)
    return yhat, cache


def backward_batch(params: dict, config: UNetConfig, cache: dict, gyhat):
    """Gradients of a scalar loss given d loss / d yhat."""
    grads = {}

    def conv_back(g, name):
        gx, gw, gb = conv2d_backward(g, cache[name])
        grads[f"{name}_w"] = gw
        grads[f"{name}_b"] = gb
        return gx

    def gate_back(g, name):
        gs, gg, pg = attention_gate_backward(g, cache[name])
        for key, val in pg.items():
            grads[f"{name}_{key}"] = val
        return gs, gg

    g = sigmoid_backward(gyhat, cache["sig"])
    g = conv_back(g, "out")
    gskips = {}
    for l in range(config.depth):  # decoder levels, deepest-first in reverse
        g = relu_backward(g, cache[f"dec{l}_r2"])
        g = conv_back(g, f"dec{l}_c2")
        g = relu_backward(g, cache[f"dec{l}_r1"])
        g = conv_back(g, f"dec{l}_c1")
        gu, gs = concat_backward(g, cache[f"dec{l}_cat"])
        if config.gate_skips:
            gs, gg_extra = gate_back(gs, f"dec{l}_att")
            gu = gu + gg_extra
        gskips[l] = gs
        g = upsample2_backward(gu)
    if config.gate_bottleneck:
        gs, gg = gate_back(g, "bot_att")
        g = gs + gg
    g = relu_backward(g, cache["bot_r2"])
    g = conv_back(g, "bot_c2")
    g = relu_backward(g, cache["bot_r1"])
    g = conv_back(g, "bot_c1")
    for l in reversed(range(config.depth)):
        g = maxpool2_backward(g, cache[f"enc{l}_pool"])
        g = g + gskips[l]
        g = relu_backward(g, cache[f"enc{l}_r2"])
        g = conv_back(g, f"enc{l}_c2")
        g = relu_backward(g, cache[f"enc{l}_r1"])
        g = conv_back(g, f"enc{l}_c1")
    return grads


@dataclass(frozen=True)
class ProbabilityMask:
    """Per-pixel source probability on the disk, zero outside it."""

    data: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        valid = np.asarray(self.validity, dtype=bool)
        if data.ndim != 2 or data.shape != valid.shape:
            raise ValueError("data and validity must be equal 2-D shapes")
        if data.size and (data.min() < 0 or data.max() > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(data[~valid] != 0):
            raise ValueError("probabilities outside the disk must be zero")
        data.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "validity", valid)


def forward(params: dict, config: UNetConfig,
            image: PolarImage) -> ProbabilityMask:
    """Segment one disk image; output cropped and masked to the disk."""
    side = image.side
    target = pad_to_multiple(side, config.depth)
    x = pad_image(image.data, target)[None]
    yhat, _ = forward_batch(params, config, x)
    data = yhat[0, 0, :side, :side]
    data = np.where(image.validity, data, 0.0)
    return ProbabilityMask(data=data, validity=image.validity)


def infer_probabilities(params: dict, config: UNetConfig, images,
                        batch_size=32):
    """Batched forward over (N, C, S, S) inputs; returns (N, S, S)."""
    outs = []
    for i in range(0, images.shape[0], batch_size):
        yhat, _ = forward_batch(params, config, images[i:i + batch_size])
        outs.append(yhat[:, 0])
    return np.concatenate(outs, axis=0)


def gradients(params: dict, config: UNetConfig, inputs, targets, validity,
              eps=EPS_DEFAULT):
    """Mean Tversky loss over the batch and its parameter gradients.

    inputs: (B, C, S, S) padded disk images; targets: (B, side, side)
    binary masks; validity: (side, side) disk mask shared by the batch.
    """
    if inputs.shape[0] == 0:
        raise ValueError("empty batch")
    side = targets.shape[1]
    yhat, cache = forward_batch(params, config, inputs)
    n = inputs.shape[0]
    gy = np.zeros_like(yhat)
    total = 0.0
    for i in range(n):
        li, gi = tversky_loss_grad(yhat[i, 0, :side, :side], targets[i],
                                   alpha=config.alpha, beta=config.beta,
                                   eps=eps, valid=validity)
        total += li
        gy[i, 0, :side, :side] = gi / n
    grads = backward_batch(params, config, cache, gy)
    return total / n, grads
