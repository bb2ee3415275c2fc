"""Differentiable layers built on :mod:`hitframe.nn.autograd`.

Parameters live in a flat ``dict[str, Tensor]`` keyed by dotted names
(``"block0.conv.W"``). Layer functions take that dict plus a prefix so one
parameter set can hold a whole model and be checkpointed as-is.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import (
    ShapeError,
    Tensor,
    add,
    concat,
    dropout,
    layer_norm,
    matmul,
    relu,
    reshape,
    softmax,
    transpose,
)


class ConfigError(ValueError):
    pass


class MissingRunningStatsError(RuntimeError):
    pass


def uniform_fan_in(rng, shape, fan_in):
    """Kaiming-uniform-style init with bound 1/sqrt(fan_in)."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_affine(rng, params, name, d_in, d_out):
    params[f"{name}.W"] = Tensor(uniform_fan_in(rng, (d_in, d_out), d_in), requires_grad=True)
    params[f"{name}.b"] = Tensor(uniform_fan_in(rng, (d_out,), d_in), requires_grad=True)


def init_conv(rng, params, name, c_in, c_out, k=3):
    fan_in = c_in * k * k
    params[f"{name}.W"] = Tensor(uniform_fan_in(rng, (c_out, c_in, k, k), fan_in), requires_grad=True)
    params[f"{name}.b"] = Tensor(uniform_fan_in(rng, (c_out,), fan_in), requires_grad=True)


def init_norm(params, name, dim):
    params[f"{name}.gamma"] = Tensor(np.ones(dim), requires_grad=True)
    params[f"{name}.beta"] = Tensor(np.zeros(dim), requires_grad=True)


# ---------------------------------------------------------------------------
# dense


def affine(x, W, b):
    """``x @ W + b`` over the last axis of ``x``."""
    if x.shape[-1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeError(f"affine shape mismatch: x{x.shape} W{W.shape} b{b.shape}")
    return add(matmul(x, W), b)


# ---------------------------------------------------------------------------
# convolution block


def conv2d(x, W, b, padding=1):
    """Cross-correlation of NCHW ``x`` with (C_out, C_in, k, k) weights, stride 1."""
    if x.ndim != 4 or W.ndim != 4 or x.shape[1] != W.shape[1]:
        raise ShapeError(f"conv2d shape mismatch: x{x.shape} W{W.shape}")
    n, c, h, w = x.shape
    c_out, _, k, _ = W.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho, wo = xp.shape[2] - k + 1, xp.shape[3] - k + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {x.shape} too small for kernel {k}")
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # n c ho wo k k
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    wmat = W.data.reshape(c_out, -1)
    out = (cols @ wmat.T + b.data).reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
        gW = (g2.T @ cols).reshape(W.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ wmat).reshape(n, ho, wo, c, k, k)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + ho, j:j + wo] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, padding:padding + h, padding:padding + w]
        return gx, gW, gb

    return Tensor(out, _parents=(x, W, b), _backward=backward)


def max_pool2d(x, pool=2, stride=2):
    n, c, h, w = x.shape
    if h < pool or w < pool:
        raise ShapeError(f"input {x.shape} smaller than pool window {pool}")
    win = sliding_window_view(x.data, (pool, pool), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, ho, wo, pool * pool)
    arg = flat.argmax(axis=-1)  # first max wins on ties
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gx = np.zeros_like(x.data)
        di, dj = np.divmod(arg, pool)
        rows = np.arange(ho)[None, None, :, None] * stride + di
        cols = np.arange(wo)[None, None, None, :] * stride + dj
        nn_ = np.arange(n)[:, None, None, None]
        cc = np.arange(c)[None, :, None, None]
        np.add.at(gx, (nn_, cc, rows, cols), g)
        return (gx,)

    return Tensor(out, _parents=(x,), _backward=backward)


def batch_norm2d(x, gamma, beta, state, training, momentum=0.1, eps=1e-5):
    """Per-channel batch normalization over (N, H, W).

    ``state`` holds ``running_mean``/``running_var`` (None until the first
    training pass) and is updated in place when ``training`` is set.
    """
    axes = (0, 2, 3)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = x.data.size // x.shape[1]
        unbiased = var * m / max(m - 1, 1)
        if state.get("running_mean") is None:
            state["running_mean"] = np.zeros_like(mu)
            state["running_var"] = np.ones_like(var)
        state["running_mean"] = (1 - momentum) * state["running_mean"] + momentum * mu
        state["running_var"] = (1 - momentum) * state["running_var"] + momentum * unbiased
    else:
        if state.get("running_mean") is None:
            raise MissingRunningStatsError("batch norm used in eval mode before any training step")
        mu, var = state["running_mean"], state["running_var"]
    shp = (1, -1, 1, 1)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(shp)) * inv.reshape(shp)
    out = xhat * gamma.data.reshape(shp) + beta.data.reshape(shp)

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gxhat = g * gamma.data.reshape(shp)
        if training:
            gx = inv.reshape(shp) * (gxhat - gxhat.mean(axis=axes, keepdims=True)
                                     - xhat * (gxhat * xhat).mean(axis=axes, keepdims=True))
        else:
            gx = gxhat * inv.reshape(shp)
        return gx, ggamma, gbeta

    return Tensor(out, _parents=(x, gamma, beta), _backward=backward)


def conv_block(x, params, prefix, state, training, pool=2, stride=2):
    """conv3x3 (padding 1) -> max-pool -> batch norm -> ReLU."""
    h = conv2d(x, params[f"{prefix}.conv.W"], params[f"{prefix}.conv.b"], padding=1)
    h = max_pool2d(h, pool, stride)
    h = batch_norm2d(h, params[f"{prefix}.bn.gamma"], params[f"{prefix}.bn.beta"], state, training)
    return relu(h)


# ---------------------------------------------------------------------------
# transformer pieces


def init_attention(rng, params, prefix, d_model):
    for proj in ("q", "k", "v", "o"):
        init_affine(rng, params, f"{prefix}.{proj}", d_model, d_model)


def multi_head_attention(x, params, prefix, heads, key_padding_mask=None):
    """Scaled dot-product self-attention.

    ``x`` is (N, F, d) or (F, d). ``key_padding_mask`` marks padded frames
    with True; those keys receive zero weight from every query.
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + x.shape)
        if key_padding_mask is not None:
            key_padding_mask = np.asarray(key_padding_mask)[None]
    n, f, d = x.shape
    if d % heads:
        raise ConfigError(f"d_model={d} not divisible by heads={heads}")
    dh = d // heads

    def split(t):
        return transpose(reshape(t, (n, f, heads, dh)), (0, 2, 1, 3))

    q = split(affine(x, params[f"{prefix}.q.W"], params[f"{prefix}.q.b"]))
    k = split(affine(x, params[f"{prefix}.k.W"], params[f"{prefix}.k.b"]))
    v = split(affine(x, params[f"{prefix}.v.W"], params[f"{prefix}.v.b"]))
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    allowed = None
    if key_padding_mask is not None:
        mask = np.asarray(key_padding_mask, dtype=bool)
        if mask.shape != (n, f):
            raise ShapeError(f"mask shape {mask.shape} != {(n, f)}")
        allowed = ~mask[:, None, None, :]
    attn = softmax(scores, axis=-1, mask=allowed)
    ctx = reshape(transpose(matmul(attn, v), (0, 2, 1, 3)), (n, f, d))
    out = affine(ctx, params[f"{prefix}.o.W"], params[f"{prefix}.o.b"])
    if squeeze:
        out = reshape(out, (f, d))
    return out


def init_encoder_layer(rng, params, prefix, d_model, d_ff):
    init_attention(rng, params, f"{prefix}.attn", d_model)
    init_norm(params, f"{prefix}.ln1", d_model)
    init_affine(rng, params, f"{prefix}.ff1", d_model, d_ff)
    init_affine(rng, params, f"{prefix}.ff2", d_ff, d_model)
    init_norm(params, f"{prefix}.ln2", d_model)


def encoder_layer(x, params, prefix, heads, dropout_rate=0.0, training=False, rng=None,
                  key_padding_mask=None):
    """Post-norm encoder layer: LN(x + Drop(Attn(x))), then LN(y + Drop(FFN(y)))."""
    a = multi_head_attention(x, params, f"{prefix}.attn", heads, key_padding_mask)
    y = layer_norm(add(x, dropout(a, dropout_rate, rng, training)),
                   params[f"{prefix}.ln1.gamma"], params[f"{prefix}.ln1.beta"])
    h = relu(affine(y, params[f"{prefix}.ff1.W"], params[f"{prefix}.ff1.b"]))
    h = affine(h, params[f"{prefix}.ff2.W"], params[f"{prefix}.ff2.b"])
    return layer_norm(add(y, dropout(h, dropout_rate, rng, training)),
                      params[f"{prefix}.ln2.gamma"], params[f"{prefix}.ln2.beta"])


def sinusoidal_encoding(length, d_model):
    pos = np.arange(length)[:, None]
    i = np.arange(0, d_model, 2)[None, :]
    angle = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


__all__ = [
    "ConfigError",
    "MissingRunningStatsError",
    "affine",
    "batch_norm2d",
    "concat",
    "conv2d",
    "conv_block",
    "encoder_layer",
    "init_affine",
    "init_attention",
    "init_conv",
    "init_encoder_layer",
    "init_norm",
    "max_pool2d",
    "multi_head_attention",
    "sinusoidal_encoding",
    "uniform_fan_in",
]
