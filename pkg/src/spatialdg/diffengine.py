"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

Every primitive evaluates eagerly, appends one node to the tape of its inputs
and stores a closure computing the vector-Jacobian product. ``backward`` walks
the tape in reverse insertion order and accumulates adjoints by summation.

    tape = Tape()
    x = tape.leaf([3.0])
    loss = sum_sq(x)
    grads = backward(tape, loss)   # grads[x.id] == [6.0]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import DisconnectedLoss, NonFiniteResult, ShapeMismatch

DEFAULT_SLOPE = 0.2


class Tensor:
    __slots__ = ("value", "tape", "id", "requires_grad")

    def __init__(self, value: np.ndarray, tape: "Tape", id: int, requires_grad: bool):
        self.value = value
        self.tape = tape
        self.id = id
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(id={self.id}, shape={self.shape})"


@dataclass
class _Node:
    out: int
    inputs: tuple[int, ...]
    vjp: Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]


@dataclass
class Tape:
    nodes: list[_Node] = field(default_factory=list)
    leaves: dict[int, Tensor] = field(default_factory=dict)
    _next_id: int = 0

    def _new(self, value: np.ndarray, requires_grad: bool) -> Tensor:
        t = Tensor(value, self, self._next_id, requires_grad)
        self._next_id += 1
        return t

    def leaf(self, value, requires_grad: bool = True) -> Tensor:
        arr = np.array(value, dtype=np.float64)
        t = self._new(arr, requires_grad)
        self.leaves[t.id] = t
        return t

    def const(self, value) -> Tensor:
        return self.leaf(value, requires_grad=False)

    def record(self, value: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
        if not np.all(np.isfinite(value)):
            raise NonFiniteResult(f"non-finite value produced by {vjp.__qualname__.split('.')[0]}")
        needs = any(t.requires_grad for t in inputs)
        out = self._new(value, needs)
        if needs:
            self.nodes.append(_Node(out.id, tuple(t.id for t in inputs), vjp))
        return out


def _tape_of(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ValueError("tensors belong to different tapes")
    return tape


def _check(cond: bool, msg: str):
    if not cond:
        raise ShapeMismatch(msg)


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for ``(..., n) @ (n, p)`` or batched ``(B, m, n) @ (B, n, p)``."""
    A, B = a.value, b.value
    _check(A.ndim >= 1 and B.ndim == 2 or (A.ndim == B.ndim == 3 and A.shape[0] == B.shape[0]),
           f"matmul: unsupported shapes {A.shape} @ {B.shape}")
    _check(A.shape[-1] == B.shape[-2], f"matmul: inner dims {A.shape} @ {B.shape}")
    out = A @ B

    def matmul_vjp(g):
        if B.ndim == 2:
            ga = g @ B.T
            gb = A.reshape(-1, A.shape[-1]).T @ g.reshape(-1, B.shape[-1])
        else:
            ga = g @ B.transpose(0, 2, 1)
            gb = A.transpose(0, 2, 1) @ g
        return ga, gb

    return _tape_of(a, b).record(out, (a, b), matmul_vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a vector added along the last axis."""
    A, B = a.value, b.value
    bias = B.ndim == 1 and A.ndim >= 1 and A.shape != B.shape
    _check(A.shape == B.shape or (bias and A.shape[-1] == B.shape[0]),
           f"add: shapes {A.shape} and {B.shape}")

    def add_vjp(g):
        return g, g.reshape(-1, B.shape[0]).sum(0) if bias else g

    return _tape_of(a, b).record(A + B, (a, b), add_vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"sub: shapes {a.shape} and {b.shape}")

    def sub_vjp(g):
        return g, -g

    return _tape_of(a, b).record(a.value - b.value, (a, b), sub_vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"mul: shapes {a.shape} and {b.shape}")
    A, B = a.value, b.value

    def mul_vjp(g):
        return g * B, g * A

    return _tape_of(a, b).record(A * B, (a, b), mul_vjp)


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis."""
    A, B = a.value, b.value
    _check(A.shape[:-1] == B.shape[:-1], f"concat: leading dims {A.shape} vs {B.shape}")
    na = A.shape[-1]

    def concat_vjp(g):
        return g[..., :na], g[..., na:]

    return _tape_of(a, b).record(np.concatenate([A, B], axis=-1), (a, b), concat_vjp)


def leaky_relu(a: Tensor, slope: float = DEFAULT_SLOPE) -> Tensor:
    A = a.value
    mask = A > 0
    out = np.where(mask, A, slope * A)

    def leaky_relu_vjp(g):
        return (np.where(mask, g, slope * g),)

    return a.tape.record(out, (a,), leaky_relu_vjp)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted."""
    A = a.value
    _check(A.ndim >= 1 and A.shape[-1] >= 1, "softmax: empty last axis")
    e = np.exp(A - A.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def softmax_vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return a.tape.record(out, (a,), softmax_vjp)


def sigmoid(a: Tensor) -> Tensor:
    A = a.value
    # two-branch form avoids overflow in exp
    e = np.exp(-np.abs(A))
    out = np.where(A >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def sigmoid_vjp(g):
        return (g * out * (1.0 - out),)

    return a.tape.record(out, (a,), sigmoid_vjp)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip into ``[lo, hi]``; the gradient is zero where clipping is active."""
    A = a.value
    inside = (A >= lo) & (A <= hi)

    def clamp_vjp(g):
        return (np.where(inside, g, 0.0),)

    return a.tape.record(np.clip(A, lo, hi), (a,), clamp_vjp)


def log(a: Tensor) -> Tensor:
    A = a.value

    def log_vjp(g):
        return (g / A,)

    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(A)
    return a.tape.record(out, (a,), log_vjp)


def sum_sq(a: Tensor) -> Tensor:
    A = a.value

    def sum_sq_vjp(g):
        return (2.0 * g * A,)

    return a.tape.record(np.array(np.sum(A * A)), (a,), sum_sq_vjp)


def total(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar."""
    shape = a.shape

    def total_vjp(g):
        return (np.full(shape, float(g)),)

    return a.tape.record(np.array(np.sum(a.value)), (a,), total_vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def scale_vjp(g):
        return (c * g,)

    return a.tape.record(c * a.value, (a,), scale_vjp)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(f"reshape: {old} -> {shape}") from exc

    def reshape_vjp(g):
        return (g.reshape(old),)

    return a.tape.record(out, (a,), reshape_vjp)


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    """``a[..., start:stop]``."""
    _check(0 <= start < stop <= a.shape[-1], f"slice_last: [{start}:{stop}] of {a.shape}")
    shape = a.shape

    def slice_last_vjp(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return a.tape.record(a.value[..., start:stop], (a,), slice_last_vjp)


def gather_rows(a: Tensor, ids) -> Tensor:
    """``a[ids]`` for an integer index array of any shape."""
    idx = np.asarray(ids, dtype=np.int64)
    _check(idx.size == 0 or (idx.min() >= 0 and idx.max() < a.shape[0]),
           f"gather_rows: index out of range for {a.shape[0]} rows")
    shape = a.shape

    def gather_rows_vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return a.tape.record(a.value[idx], (a,), gather_rows_vjp)


def weighted_sum(rows: Tensor, weights: Tensor) -> Tensor:
    """Contract ``rows (..., k, d)`` with ``weights (..., k)`` to ``(..., d)``."""
    R, W = rows.value, weights.value
    _check(R.ndim >= 2 and R.shape[:-1] == W.shape,
           f"weighted_sum: rows {R.shape} vs weights {W.shape}")
    out = np.einsum("...kd,...k->...d", R, W)

    def weighted_sum_vjp(g):
        return W[..., None] * g[..., None, :], np.einsum("...kd,...d->...k", R, g)

    return _tape_of(rows, weights).record(out, (rows, weights), weighted_sum_vjp)


# ------------------------------------------------------------------ backward


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Adjoints of ``loss`` for every tensor on the tape that needs one.

    Every leaf created with ``requires_grad`` appears in the result, with a
    zero array when the loss does not depend on it.
    """
    if loss.tape is not tape:
        raise DisconnectedLoss("loss was recorded on a different tape")
    if loss.value.size != 1:
        raise ShapeMismatch(f"loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise DisconnectedLoss("loss does not depend on any differentiable leaf")

    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
    for node in reversed(tape.nodes):
        g = grads.get(node.out)
        if g is None:
            continue
        for tid, gi in zip(node.inputs, node.vjp(g)):
            if gi is None:
                continue
            if tid in grads:
                grads[tid] = grads[tid] + gi
            else:
                grads[tid] = gi
    for tid, t in tape.leaves.items():
        if t.requires_grad and tid not in grads:
            grads[tid] = np.zeros_like(t.value)
    return grads


# ---------------------------------------------------------- gradient checks


@dataclass
class GradCheckReport:
    max_rel_err: dict[str, float]
    tol: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tol

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.max_rel_err.items() if not v < self.tol]


def finite_diff_check(
    f: Callable[[Tape, Mapping[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare tape gradients of ``f`` against central differences.

    ``f(tape, leaves)`` must build a scalar loss from the leaves it is given.
    Relative error per entry is ``|a - n| / max(|a|, |n|, 1e-8)``; the report
    holds the maximum per parameter block.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in base.items()}
    grads = backward(tape, f(tape, leaves))

    def value_at(p):
        t = Tape()
        return float(f(t, {k: t.const(v) for k, v in p.items()}).value)

    report = {}
    for name, arr in base.items():
        analytic = grads[leaves[name].id]
        numeric = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            probe = dict(base)
            bumped = arr.copy()
            bumped[idx] = arr[idx] + h
            probe[name] = bumped
            up = value_at(probe)
            bumped = arr.copy()
            bumped[idx] = arr[idx] - h
            probe[name] = bumped
            down = value_at(probe)
            numeric[idx] = (up - down) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        rel = np.abs(analytic - numeric) / denom
        report[name] = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(report, tol)
