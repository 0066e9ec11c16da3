"""Tversky loss over the valid disk, with its analytic gradient.

The loss generalizes Dice overlap: false positives are weighted by alpha
and false negatives by beta, which matters here because the positive
region is a tiny fraction of the disk.
"""

from __future__ import annotations

import numpy as np

ALPHA_DEFAULT = 0.3
BETA_DEFAULT = 0.7
EPS_DEFAULT = 1e-6


def _terms(yhat, y, valid):
    yh = yhat[valid] if valid is not None else yhat.ravel()
    yt = y[valid].astype(yhat.dtype) if valid is not None \
        else y.ravel().astype(yhat.dtype)
    tp = float(yh @ yt)
    fp = float(yh.sum() - tp)          # sum yhat * (1 - y)
    fn = float(yt.sum() - tp)          # sum (1 - yhat) * y
    return yh, yt, tp, fp, fn


def tversky_loss(yhat, y, alpha=ALPHA_DEFAULT, beta=BETA_DEFAULT,
                 eps=EPS_DEFAULT, valid=None) -> float:
    """1 - (TP + eps) / (TP + alpha FP + beta FN + eps), over valid pixels."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    _, _, tp, fp, fn = _terms(yhat, y, valid)
    denom = tp + alpha * fp + beta * fn + eps
    if denom == 0.0:
        return 0.0  # only reachable with eps=0 and empty-empty inputs
    return 1.0 - (tp + eps) / denom


def tversky_loss_grad(yhat, y, alpha=ALPHA_DEFAULT, beta=BETA_DEFAULT,
                      eps=EPS_DEFAULT, valid=None):
    """Loss and its gradient with respect to yhat (zero off the disk)."""
    yh, yt, tp, fp, fn = _terms(yhat, y, valid)
    num = tp + eps
    denom = tp + alpha * fp + beta * fn + eps
    if denom == 0.0:
        return 0.0, np.zeros_like(yhat)
    # d num / d yhat_i = y_i ; d denom / d yhat_i = y_i + alpha(1-y_i) - beta y_i
    ddenom = yt + alpha * (1.0 - yt) - beta * yt
    gflat = -(yt * denom - num * ddenom) / denom ** 2
    grad = np.zeros_like(yhat)
    if valid is not None:
        grad[valid] = gflat
    else:
        grad = gflat.reshape(yhat.shape)
    return 1.0 - num / denom, grad
