"""Deterministic minibatch trainer (Adam) and checkpoint serialization.

All randomness (weight init, shuffling, train/validation split) flows from
the config seed through one generator, so a rerun reproduces the loss
history bit for bit.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..storage import read_tensor, write_tensor
from .loss import EPS_DEFAULT, tversky_loss
from .model import UNetConfig, forward_batch, gradients, init_params

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class TrainingSet:
    """Paired disk images and masks ready for the network.

    inputs: (N, C, S, S) padded images; targets: (N, side, side) binary
    masks; validity: (side, side) shared disk mask.
    """

    inputs: np.ndarray
    targets: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs)
        y = np.asarray(self.targets, dtype=np.uint8)
        v = np.asarray(self.validity, dtype=bool)
        if x.ndim != 4 or y.ndim != 3 or x.shape[0] != y.shape[0]:
            raise ValueError("inputs (N,C,S,S) and targets (N,side,side)")
        if y.shape[1:] != v.shape:
            raise ValueError("targets and validity disagree on side")
        if x.shape[2] < v.shape[0]:
            raise ValueError("inputs smaller than the mask side")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "validity", v)

    def __len__(self):
        return self.inputs.shape[0]


@dataclass
class TrainResult:
    params: dict
    config: UNetConfig
    history: list  # (epoch, train_loss, val_loss)
    best_epoch: int

    def history_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,train_loss,val_loss\n")
        for e, tr, va in self.history:
            buf.write(f"{e},{tr!r},{va!r}\n")
        return buf.getvalue()


def _eval_loss(params, config, dataset, idx, eps, batch_size):
    side = dataset.targets.shape[1]
    total = 0.0
    for i in range(0, idx.size, batch_size):
        sel = idx[i:i + batch_size]
        yhat, _ = forward_batch(params, config, dataset.inputs[sel])
        for j, s in enumerate(sel):
            total += tversky_loss(yhat[j, 0, :side, :side],
                                  dataset.targets[s], alpha=config.alpha,
                                  beta=config.beta, eps=eps,
                                  valid=dataset.validity)
    return total / idx.size


def train(dataset: TrainingSet, config: UNetConfig, epochs: int,
          batch_size: int = 8, val_fraction: float = 0.2,
          eps: float = EPS_DEFAULT, dtype=np.float64,
          log=None) -> TrainResult:
    """Optimize from scratch; returns best-validation parameters.

    Tiny datasets (< 5 samples, or a zero val_fraction) validate on the
    training split itself rather than holding frames out.
    """
    if epochs < 1 or batch_size < 1:
        raise ValueError("epochs and batch_size must be >= 1")
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    params = init_params(config, dtype=dtype)
    perm = rng.permutation(len(dataset))
    n_val = int(round(len(dataset) * val_fraction)) if len(dataset) >= 5 \
        else 0
    val_idx = perm[:n_val] if n_val else perm
    train_idx = perm[n_val:]

    m = {k: np.zeros_like(v) for k, v in params.items()}
    v2 = {k: np.zeros_like(v) for k, v in params.items()}
    t = 0
    lr = config.learning_rate
    history = []
    best_val = np.inf
    best_epoch = -1
    best_params = {k: p.copy() for k, p in params.items()}

    for epoch in range(epochs):
        order = rng.permutation(train_idx)
        running = 0.0
        for i in range(0, order.size, batch_size):
            sel = order[i:i + batch_size]
            loss, grads = gradients(params, config, dataset.inputs[sel],
                                    dataset.targets[sel], dataset.validity,
                                    eps=eps)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: loss={loss} at epoch {epoch}, "
                    f"batch {i // batch_size}")
            running += loss * sel.size
            t += 1
            b1t = 1.0 - ADAM_BETA1 ** t
            b2t = 1.0 - ADAM_BETA2 ** t
            for k in params:
                g = grads[k]
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g
                v2[k] = ADAM_BETA2 * v2[k] + (1.0 - ADAM_BETA2) * g * g
                params[k] = params[k] - lr * (m[k] / b1t) / (
                    np.sqrt(v2[k] / b2t) + ADAM_EPS)
        train_loss = running / order.size
        val_loss = _eval_loss(params, config, dataset, val_idx, eps,
                              batch_size)
        history.append((epoch, float(train_loss), float(val_loss)))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {k: p.copy() for k, p in params.items()}
        if log is not None:
            log(epoch, train_loss, val_loss)
    return TrainResult(params=best_params, config=config, history=history,
                       best_epoch=best_epoch)


def save_checkpoint(path, params: dict, config: UNetConfig):
    """Weights as one float32 tensor plus a JSON sidecar with the layout."""
    path = Path(path)
    names = sorted(params)
    flat = np.concatenate([params[k].ravel() for k in names])
    write_tensor(path, flat.astype(np.float32))
    sidecar = {
        "format": CHECKPOINT_FORMAT,
        "config": config.to_dict(),
        "shapes": {k: list(params[k].shape) for k in names},
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True))


def load_checkpoint(path):
    """Returns (params, config); weights come back as float64."""
    path = Path(path)
    flat = read_tensor(path).astype(np.float64)
    sidecar = json.loads(
        path.with_suffix(path.suffix + ".json").read_text())
    if sidecar.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("unsupported checkpoint format")
    config = UNetConfig.from_dict(sidecar["config"])
    params = {}
    offset = 0
    for name, shape in sidecar["shapes"].items():
        size = int(np.prod(shape)) if shape else 1
        params[name] = flat[offset:offset + size].reshape(shape)
        offset += size
    if offset != flat.size:
        raise ValueError("checkpoint payload does not match its layout")
    return params, config
