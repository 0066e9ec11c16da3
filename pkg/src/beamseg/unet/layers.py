"""Network building blocks with hand-derived reverse-mode gradients.

All ops take and return NCHW arrays and come in forward/backward pairs.
Forward returns (output, cache); backward consumes the upstream gradient
plus the cache and returns input and parameter gradients.  Convolution is
im2col plus one matrix multiply, so the heavy lifting lands in BLAS.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit


def conv2d_forward(x, w, b, pad):
    """Cross-correlation with 'same'-style zero padding.

    x: (B, C, H, W);  w: (O, C, kh, kw);  b: (O,).
    """
    kh, kw = w.shape[2], w.shape[3]
    if pad:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = x
    hh = xp.shape[2] - kh + 1
    ww = xp.shape[3] - kw + 1
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(
        x.shape[0] * hh * ww, x.shape[1] * kh * kw)
    wm = w.reshape(w.shape[0], -1)
    out = cols @ wm.T + b
    out = out.reshape(x.shape[0], hh, ww, w.shape[0]).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (x, w, pad)


def conv2d_backward(gout, cache):
    x, w, pad = cache
    o, c, kh, kw = w.shape
    if pad:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = x
    b_, _, hh, ww = gout.shape
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b_ * hh * ww, c * kh * kw)
    gr = gout.transpose(0, 2, 3, 1).reshape(b_ * hh * ww, o)
    gw = (gr.T @ cols).reshape(w.shape)
    gb = gr.sum(axis=0)
    gcols = (gr @ w.reshape(o, -1)).reshape(b_, hh, ww, c, kh, kw)
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + hh, j:j + ww] += \
                gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if pad:
        gx = gxp[:, :, pad:pad + x.shape[2], pad:pad + x.shape[3]]
    else:
        gx = gxp
    return gx, gw, gb


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(gout, mask):
    return np.where(mask, gout, 0.0)


def maxpool2_forward(x):
    """2x2 max pooling, stride 2; H and W must be even.

    Ties resolve to the first element in scan order, so gradients are
    routed deterministically.
    """
    b, c, h, w = x.shape
    xr = x.reshape(b, c, h // 2, 2, w // 2, 2)
    xr = xr.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    idx = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(gout, cache):
    idx, in_shape = cache
    b, c, h, w = in_shape
    g = np.zeros((b, c, h // 2, w // 2, 4), dtype=gout.dtype)
    np.put_along_axis(g, idx[..., None], gout[..., None], axis=-1)
    g = g.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return g.reshape(in_shape)


def upsample2_forward(x):
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3), None


def upsample2_backward(gout, cache=None):
    b, c, h, w = gout.shape
    return gout.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def concat_forward(a, b):
    return np.concatenate([a, b], axis=1), a.shape[1]


def concat_backward(gout, split):
    return gout[:, :split], gout[:, split:]


def sigmoid_forward(x):
    out = expit(x)
    return out, out


def sigmoid_backward(gout, out):
    return gout * out * (1.0 - out)


def attention_gate_forward(s, g, wx, wg, bj, psi_w, psi_b):
    """Additive gate: scale the skip ``s`` by attention derived from ``g``.

    a = sigmoid(psi(relu(Wx s + Wg g)));  out = s * a.  ``a`` has one
    channel and multiplies every channel of ``s``.
    """
    xs, c_xs = conv2d_forward(s, wx, np.zeros(wx.shape[0], dtype=s.dtype), 0)
    xg, c_xg = conv2d_forward(g, wg, bj, 0)
    q, c_q = relu_forward(xs + xg)
    logit, c_l = conv2d_forward(q, psi_w, psi_b, 0)
    a, c_a = sigmoid_forward(logit)
    out = s * a
    return out, (s, a, c_xs, c_xg, c_q, c_l, c_a)


def attention_gate_backward(gout, cache):
    s, a, c_xs, c_xg, c_q, c_l, c_a = cache
    gs_direct = gout * a
    ga = (gout * s).sum(axis=1, keepdims=True)
    glogit = sigmoid_backward(ga, c_a)
    gq, g_psi_w, g_psi_b = conv2d_backward(glogit, c_l)
    gsum = relu_backward(gq, c_q)
    gs_path, g_wx, _ = conv2d_backward(gsum, c_xs)
    gg, g_wg, g_bj = conv2d_backward(gsum, c_xg)
    return (gs_direct + gs_path, gg,
            {"wx": g_wx, "wg": g_wg, "bj": g_bj,
             "psi_w": g_psi_w, "psi_b": g_psi_b})
