"""Reverse-mode tensor arithmetic on numpy arrays, sized for this model.

A Tensor wraps a float32/float64 ndarray plus the bookkeeping needed for
backpropagation: the parent tensors it was computed from and a closure that
routes an incoming output gradient to those parents. `backward` walks the
graph once in reverse topological order. Leaf tensors (parameters, inputs
with requires_grad) accumulate into a persistent `.grad` buffer;
intermediate gradients live only for the duration of the sweep, so calling
`backward` twice on the same loss adds the gradients twice, matching the
accumulate-until-zeroed contract.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not satisfy an op's contract."""


class ContractError(ValueError):
    """A value-level precondition was violated."""


class MaskingError(ValueError):
    """A softmax row was fully masked without all_masked_ok."""


class ConfigError(ValueError):
    """Invalid layer or run configuration, raised at construction time."""


class NumericError(RuntimeError):
    """NaN/Inf encountered where the contract requires finite values."""


_DTYPE_TO_NAME = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}
_NAME_TO_DTYPE = {"f32": np.float32, "f64": np.float64}


def np_dtype(name: str) -> np.dtype:
    if name not in _NAME_TO_DTYPE:
        raise ConfigError(f"unknown dtype {name!r}, expected 'f32' or 'f64'")
    return np.dtype(_NAME_TO_DTYPE[name])


class Tensor:
    """A numpy array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _DTYPE_TO_NAME:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> str:
        return _DTYPE_TO_NAME[self.data.dtype]

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; scalars and ndarrays are lifted to constant tensors.
    def __add__(self, other):
        return add(self, _lift(other, self))

    def __radd__(self, other):
        return add(_lift(other, self), self)

    def __sub__(self, other):
        return add(self, neg(_lift(other, self)))

    def __rsub__(self, other):
        return add(_lift(other, self), neg(self))

    def __mul__(self, other):
        return mul(self, _lift(other, self))

    def __rmul__(self, other):
        return mul(_lift(other, self), self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("tensor/tensor division is not part of this op set")
        return mul(self, _lift(1.0 / other, self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other, self))


def constant(data, like: Tensor | None = None, dtype=None) -> Tensor:
    """A tensor outside the gradient graph, dtype-matched to `like` if given."""
    if dtype is None and like is not None:
        dtype = like.data.dtype
    return Tensor(data, requires_grad=False, dtype=dtype)


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return constant(value, like=like)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape` along the axes numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bwd(g, sink):
        if a.requires_grad:
            sink(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            sink(b, _unbroadcast(g, b.data.shape))

    return _result(data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bwd(g, sink):
        if a.requires_grad:
            sink(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            sink(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), bwd)


def neg(x: Tensor) -> Tensor:
    def bwd(g, sink):
        sink(x, -g)

    return _result(-x.data, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    # Stable in both tails: exp of a non-positive argument only.
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = out.astype(d.dtype, copy=False)

    def bwd(g, sink):
        sink(x, g * out * (1.0 - out))

    return _result(out, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bwd(g, sink):
        sink(x, g * (1.0 - out * out))

    return _result(out, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def bwd(g, sink):
        sink(x, g * (x.data > 0))

    return _result(out, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bwd(g, sink):
        sink(x, g * out)

    return _result(out, (x,), bwd)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def bwd(g, sink):
        sink(x, g / x.data)

    return _result(out, (x,), bwd)


# ---------------------------------------------------------------------------
# contractions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a[..., m, k] @ b[k, n]; b must be 2-D."""
    if b.data.ndim != 2:
        raise DimensionError(f"matmul: right operand must be 2-D, got shape {b.shape}")
    if a.data.ndim < 1 or a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")
    data = a.data @ b.data

    def bwd(g, sink):
        if a.requires_grad:
            sink(a, g @ b.data.T)
        if b.requires_grad:
            k = a.data.shape[-1]
            sink(b, a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1]))

    return _result(data, (a, b), bwd)


def einsum2(spec: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum whose gradient is again an einsum.

    Every index of each operand must appear in the output or the other
    operand, which holds for all contractions this model uses.
    """
    lhs, out_s = spec.replace(" ", "").split("->")
    a_s, b_s = lhs.split(",")
    if not (set(a_s) <= set(out_s) | set(b_s) and set(b_s) <= set(out_s) | set(a_s)):
        raise DimensionError(f"einsum2: spec {spec!r} has an index summed within one operand")
    data = np.einsum(spec, a.data, b.data)

    def bwd(g, sink):
        if a.requires_grad:
            sink(a, np.einsum(f"{out_s},{b_s}->{a_s}", g, b.data))
        if b.requires_grad:
            sink(b, np.einsum(f"{a_s},{out_s}->{b_s}", a.data, g))

    return _result(data, (a, b), bwd)


# ---------------------------------------------------------------------------
# shape ops


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    old = x.data.shape

    def bwd(g, sink):
        sink(x, g.reshape(old))

    return _result(x.data.reshape(shape), (x,), bwd)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = np.argsort(axes)

    def bwd(g, sink):
        sink(x, g.transpose(inv))

    return _result(x.data.transpose(axes), (x,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = tuple(tensors)
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, sink):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                sink(t, g[tuple(idx)])

    return _result(data, ts, bwd)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bwd(g, sink):
        buf = np.zeros_like(x.data)
        buf[idx] = g
        sink(x, buf)

    return _result(x.data[idx], (x,), bwd)


def take_rows(x: Tensor, indices) -> Tensor:
    """x[indices] along axis 0; gradient scatters with duplicate accumulation."""
    idx = np.asarray(indices)
    data = x.data[idx]

    def bwd(g, sink):
        buf = np.zeros_like(x.data)
        np.add.at(buf, idx, g)
        sink(x, buf)

    return _result(data, (x,), bwd)


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g, sink):
        if axis is None:
            sink(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            sink(x, np.broadcast_to(gg, x.data.shape).copy())

    return _result(data, (x,), bwd)


def reduce_mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return reduce_sum(x, axis=axis) * (1.0 / n)


def softmax_lastdim(x: Tensor, all_masked_ok: bool = False) -> Tensor:
    """Row-stable softmax over the last axis.

    -inf entries are treated as masked. A fully masked row yields an all-zero
    row when all_masked_ok is set and raises MaskingError otherwise.
    """
    if x.data.shape[-1] < 1:
        raise DimensionError("softmax_lastdim: empty last dimension")
    d = x.data
    m = d.max(axis=-1, keepdims=True)
    finite = np.isfinite(m)
    if not all_masked_ok and not finite.all():
        raise MaskingError("softmax_lastdim: fully masked row without all_masked_ok")
    shifted = np.where(finite, d - np.where(finite, m, 0.0), -np.inf)
    e = np.exp(shifted)
    s = e.sum(axis=-1, keepdims=True)
    p = np.divide(e, s, out=np.zeros_like(e), where=s > 0)

    def bwd(g, sink):
        sink(x, p * (g - (p * g).sum(axis=-1, keepdims=True)))

    return _result(p, (x,), bwd)


def logsumexp_lastdim(x: Tensor) -> Tensor:
    d = x.data
    m = d.max(axis=-1, keepdims=True)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(d - safe_m).sum(axis=-1, keepdims=True)
    out = (safe_m + np.log(s)).squeeze(-1)

    def bwd(g, sink):
        p = np.exp(d - safe_m) / s
        sink(x, p * np.expand_dims(g, -1))

    return _result(out, (x,), bwd)


# ---------------------------------------------------------------------------
# backward sweep


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d leaf into every reachable leaf's .grad."""
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    def sink(parent: Tensor, g: np.ndarray) -> None:
        if not parent.requires_grad:
            return
        if parent._backward is None:
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g
            return
        key = id(parent)
        if key in pending:
            pending[key] = pending[key] + g
        else:
            pending[key] = g

    for node in reversed(topo):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
        else:
            node._backward(g, sink)
