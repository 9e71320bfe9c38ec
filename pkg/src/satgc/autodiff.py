"""Small dense-matrix reverse-mode autodiff engine.

Only the handful of 2-D operations the sparse attention model needs are
provided. Graphs are built on the fly for every sample and discarded after
``backward``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# stand-in for -inf inside additive masks; keeps exp() arithmetic finite
NEG_INF = -1e30


class ShapeError(ValueError):
    pass


class DegenerateRowError(ValueError):
    """Raised when a softmax mask hides every entry of some row."""


class NumericError(FloatingPointError):
    def __init__(self, message: str, name: str | None = None):
        super().__init__(message)
        self.name = name


class Tensor:
    """A 2-D float64 array that remembers how it was produced."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        op: str = "leaf",
    ):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {arr.shape}")
        arr.setflags(write=requires_grad)  # only parameters are mutated in place
        self.data = arr
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = np.zeros_like(arr) if self.requires_grad else None
        self.name = name
        self._parents = parents
        self._backward = backward
        self.op = op

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    def backward(self) -> None:
        backward(self)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += g


def _node(data: np.ndarray, parents: tuple[Tensor, ...], fn, op: str) -> Tensor:
    out = Tensor(data, parents=parents, op=op)
    if out.requires_grad:
        out._backward = fn
    else:
        out._parents = ()
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def fn(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), fn, "matmul")


def transpose(x: Tensor) -> Tensor:
    def fn(g):
        _accumulate(x, g.T)

    return _node(x.data.T.copy(), (x,), fn, "transpose")


def scale(x: Tensor, c: float) -> Tensor:
    def fn(g):
        _accumulate(x, c * g)

    return _node(x.data * c, (x,), fn, "scale")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ, {a.shape} vs {b.shape}")

    def fn(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.data + b.data, (a, b), fn, "add")


def select_rows(x: Tensor, rows: Sequence[int]) -> Tensor:
    idx = np.asarray(rows, dtype=np.intp)

    def fn(g):
        if x.requires_grad:
            np.add.at(x.grad, idx, g)

    return _node(x.data[idx], (x,), fn, "select_rows")


def column_sum(x: Tensor) -> Tensor:
    """Sum over rows; returns a 1 x n tensor."""

    def fn(g):
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _node(x.data.sum(axis=0, keepdims=True), (x,), fn, "column_sum")


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply row i of ``x`` (m x n) by ``s[i]`` (s is m x 1)."""
    if s.shape != (x.shape[0], 1):
        raise ShapeError(f"scale_rows: need a {(x.shape[0], 1)} scale, got {s.shape}")

    def fn(g):
        _accumulate(x, g * s.data)
        _accumulate(s, (g * x.data).sum(axis=1, keepdims=True))

    return _node(x.data * s.data, (x, s), fn, "scale_rows")


def divide_const(x: Tensor, c: np.ndarray) -> Tensor:
    c = np.asarray(c, dtype=np.float64).reshape(x.shape)

    def fn(g):
        _accumulate(x, g / c)

    return _node(x.data / c, (x,), fn, "divide_const")


def masked_row_softmax(x: Tensor, mask: np.ndarray | Tensor | None = None) -> Tensor:
    """Row-wise softmax of ``x + mask``.

    ``mask`` holds 0 for visible entries and -inf (or ``NEG_INF``) for hidden
    ones. Hidden entries come out exactly zero.
    """
    logits = x.data
    hidden = None
    if mask is not None:
        m = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float64)
        if m.shape != x.shape:
            raise ShapeError(f"softmax mask shape {m.shape} does not match logits {x.shape}")
        hidden = m <= NEG_INF
        if hidden.all(axis=1).any():
            bad = int(np.flatnonzero(hidden.all(axis=1))[0])
            raise DegenerateRowError(f"softmax row {bad} is fully masked")
        logits = np.where(hidden, NEG_INF, logits + np.where(hidden, 0.0, m))
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    if hidden is not None:
        e[hidden] = 0.0
    p = e / e.sum(axis=1, keepdims=True)

    def fn(g):
        inner = (g * p).sum(axis=1, keepdims=True)
        _accumulate(x, p * (g - inner))

    return _node(p, (x,), fn, "softmax")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes differ, {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def fn(g):
        _accumulate(pred, g * 2.0 * diff / n)
        _accumulate(target, -g * 2.0 * diff / n)

    return _node(np.array([[np.sum(diff * diff) / n]]), (pred, target), fn, "mse")


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every node that ``loss`` depends on."""
    if loss.shape != (1, 1):
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """Bias-corrected Adam update on ``params`` using their ``grad`` buffers.

    Gradients are zeroed after the update.
    """
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient for parameter {name!r}", name=name)

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = p.grad
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        if m.shape != p.shape:
            raise ShapeError(f"Adam moment for {name!r} has shape {m.shape}, parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.grad.fill(0.0)
