"""Hypernetwork decoder, downstream task models, losses and metrics.

A task model is a small fully connected network described by its layer sizes.
Its weights live in one flat vector laid out layer by layer as
``[W1 (n_in x n_out, row-major), b1, W2, b2, ...]`` and a layer computes
``x @ W + b``. The hypernetwork maps a spatial embedding to that vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffengine as de
from .diffengine import Tape, Tensor
from .errors import ConfigError, DegenerateLabels, LengthMismatch, ShapeMismatch

PROB_CLAMP = 1e-7
HYPER_HIDDEN = (64, 64)

REGRESSION = "regression"
CLASSIFICATION = "binary_classification"


@dataclass(frozen=True)
class TaskModelSpec:
    kind: str
    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in (REGRESSION, CLASSIFICATION):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ConfigError(f"invalid layer sizes {list(self.layer_sizes)}")
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))

    @property
    def n_features(self) -> int:
        return self.layer_sizes[0]

    def layer_slices(self) -> list[tuple[int, int, int, int]]:
        """``(offset, n_in, n_out, bias_offset)`` for each layer of the flat vector."""
        out = []
        off = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            out.append((off, n_in, n_out, off + n_in * n_out))
            off += n_in * n_out + n_out
        return out


def param_count(spec: TaskModelSpec) -> int:
    sizes = spec.layer_sizes
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


# ------------------------------------------------------------ MLP plumbing


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_mlp(rng: np.random.Generator, sizes: Sequence[int], prefix: str = "") -> dict[str, np.ndarray]:
    params = {}
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{prefix}w{i}"] = glorot(rng, n_in, n_out)
        params[f"{prefix}b{i}"] = np.zeros(n_out)
    return params


def mlp_forward(x: Tensor, params, prefix: str = "", slope: float = de.DEFAULT_SLOPE) -> Tensor:
    """Dense stack with leaky-ReLU between layers and a linear output."""
    n_layers = sum(1 for k in params if k.startswith(prefix + "w") and k[len(prefix) + 1:].isdigit())
    h = x
    for i in range(n_layers):
        h = de.add(de.matmul(h, params[f"{prefix}w{i}"]), params[f"{prefix}b{i}"])
        if i < n_layers - 1:
            h = de.leaky_relu(h, slope)
    return h


def init_hypernet(rng: np.random.Generator, d_z: int, spec: TaskModelSpec,
                  hidden: Sequence[int] = HYPER_HIDDEN) -> dict[str, np.ndarray]:
    return init_mlp(rng, [d_z, *hidden, param_count(spec)])


def init_task_params(rng: np.random.Generator, spec: TaskModelSpec) -> np.ndarray:
    """Glorot weights and zero biases packed in the flat layout."""
    parts = []
    for _, n_in, n_out, _ in spec.layer_slices():
        parts += [glorot(rng, n_in, n_out).ravel(), np.zeros(n_out)]
    return np.concatenate(parts)


def _as_tensors(tape: Tape, params) -> dict[str, Tensor]:
    return {k: v if isinstance(v, Tensor) else tape.const(v) for k, v in params.items()}


# ------------------------------------------------------------------ decode


def decode_tensor(z: Tensor, phi, spec: TaskModelSpec) -> Tensor:
    """Hypernetwork forward on the tape; ``z`` is ``(d_z,)`` or ``(n, d_z)``."""
    out = mlp_forward(z, phi)
    if out.shape[-1] != param_count(spec):
        raise ShapeMismatch(f"hypernet emits {out.shape[-1]} weights, task needs {param_count(spec)}")
    return out


def decode(z_s, phi, spec: TaskModelSpec) -> np.ndarray:
    """Task model weights for embedding ``z_s``."""
    z_s = np.asarray(z_s, dtype=float)
    if z_s.shape != (phi["w0"].shape[0],):
        raise ShapeMismatch(f"embedding of shape {z_s.shape}, hypernet expects ({phi['w0'].shape[0]},)")
    tape = Tape()
    return decode_tensor(tape.const(z_s), _as_tensors(tape, phi), spec).value


# -------------------------------------------------------------- task model


def task_forward_rows(w_rows: Tensor, spec: TaskModelSpec, x: Tensor) -> Tensor:
    """Predictions for ``N`` samples, each with its own weight row.

    ``w_rows`` is ``(N, P)`` and ``x`` is ``(N, p)``; returns ``(N,)``.
    """
    n, p = x.shape
    if p != spec.n_features:
        raise ShapeMismatch(f"{p} features given, model expects {spec.n_features}")
    if w_rows.shape != (n, param_count(spec)):
        raise ShapeMismatch(f"weight rows {w_rows.shape}, expected ({n}, {param_count(spec)})")
    h = x
    layers = spec.layer_slices()
    for li, (off, n_in, n_out, boff) in enumerate(layers):
        W = de.reshape(de.slice_last(w_rows, off, boff), (n, n_in, n_out))
        b = de.slice_last(w_rows, boff, boff + n_out)
        h = de.reshape(de.matmul(de.reshape(h, (n, 1, n_in)), W), (n, n_out))
        h = de.add(h, b)
        if li < len(layers) - 1:
            h = de.leaky_relu(h)
    h = de.reshape(h, (n,))
    if spec.kind == CLASSIFICATION:
        h = de.sigmoid(h)
    return h


def task_forward(w, spec: TaskModelSpec, x) -> float:
    """Prediction of the task model with flat weights ``w`` on one feature vector."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if w.shape != (param_count(spec),):
        raise ShapeMismatch(f"weight vector of length {w.size}, expected {param_count(spec)}")
    if x.shape != (spec.n_features,):
        raise ShapeMismatch(f"feature vector of length {x.size}, expected {spec.n_features}")
    tape = Tape()
    out = task_forward_rows(tape.const(w[None, :]), spec, tape.const(x[None, :]))
    return float(out.value[0])


def task_predict(w, spec: TaskModelSpec, xs) -> np.ndarray:
    """Vectorized ``task_forward`` over the rows of ``xs``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    tape = Tape()
    rows = tape.const(np.broadcast_to(np.asarray(w, dtype=float), (len(xs), param_count(spec))))
    return task_forward_rows(rows, spec, tape.const(xs)).value


# ------------------------------------------------------------------ losses


def sample_losses(pred: Tensor, target: Tensor, kind: str) -> Tensor:
    """Per-sample squared error (regression) or clamped cross-entropy."""
    if pred.shape != target.shape:
        raise LengthMismatch(f"{pred.shape} predictions vs {target.shape} targets")
    if kind == REGRESSION:
        d = de.sub(pred, target)
        return de.mul(d, d)
    p = de.clamp(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = target.value
    one = pred.tape.const(np.ones(pred.shape))
    pos = de.mul(target, de.log(p))
    neg = de.mul(pred.tape.const(1.0 - y), de.log(de.sub(one, p)))
    return de.scale(de.add(pos, neg), -1.0)


def _mean_loss(pred, target, kind):
    if isinstance(pred, Tensor):
        tape = pred.tape
        target = target if isinstance(target, Tensor) else tape.const(target)
        per = sample_losses(pred, target, kind)
        return de.scale(de.total(per), 1.0 / per.value.size)
    pred = np.atleast_1d(np.asarray(pred, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if pred.shape != target.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {target.size} targets")
    tape = Tape()
    return float(_mean_loss(tape.const(pred), tape.const(target), kind).value)


def mse_loss(pred, target):
    """Mean squared error. Returns a Tensor for Tensor input, else a float."""
    return _mean_loss(pred, target, REGRESSION)


def bce_loss(prob, label):
    """Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    return _mean_loss(prob, label, CLASSIFICATION)


# ----------------------------------------------------------------- metrics


def mae(pred, target) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    target = np.asarray(target, dtype=float).ravel()
    if pred.shape != target.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {target.size} targets")
    return float(np.mean(np.abs(pred - target)))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    ranks = np.empty(len(x))
    # 1-based midrank of each tie block
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + 1 + e) / 2.0
    return ranks


def auc(scores, labels) -> float:
    """Area under the ROC curve; tied scores count one half."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.size} scores vs {labels.size} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one positive and one negative label")
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
