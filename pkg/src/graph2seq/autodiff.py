"""Minimal reverse-mode automatic differentiation on dense numpy arrays.

Tensors record the operations that produced them; ``backward`` on a scalar
loss walks the recorded graph in reverse topological order and accumulates
gradients additively into every tensor that requires them. Double precision
is the default so finite-difference checks stay sharp; training may opt
into float32 via ``set_default_dtype``.
"""

from typing import List, Optional, Sequence

import numpy as np

from .errors import ContractError

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ContractError("dtype must be float32 or float64")
    _DEFAULT_DTYPE = dtype


def get_default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.requires_grad = requires_grad
        self._parents: Sequence["Tensor"] = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, _as_tensor(1.0 / other))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis=axis)

    def mean(self):
        return tsum(self) * (1.0 / self.data.size)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce ``grad`` back down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out.grad = np.zeros_like(out.data)
        out._parents = parents
        out._backward = backward
    return out


def _accum(t: Tensor, grad: np.ndarray) -> None:
    if t.grad is not None:
        t.grad += grad


# -- primitive operations ----------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(out):
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(out.grad, b.data.shape))
    return _make(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(out):
        _accum(a, -out.grad)
    return _make(-a.data, (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(out):
        _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
        _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))
    return _make(a.data * b.data, (a, b), backward)


def power(a: Tensor, p: float) -> Tensor:
    def backward(out):
        _accum(a, out.grad * p * a.data ** (p - 1.0))
    return _make(a.data ** p, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def backward(out):
        g = out.grad
        if a.data.ndim == 1 and b.data.ndim == 2:
            _accum(a, g @ b.data.T)
            _accum(b, np.outer(a.data, g))
        elif a.data.ndim == 2 and b.data.ndim == 1:
            _accum(a, np.outer(g, b.data))
            _accum(b, a.data.T @ g)
        else:
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
    return _make(a.data @ b.data, (a, b), backward)


def tsum(a: Tensor, axis=None) -> Tensor:
    def backward(out):
        if axis is None:
            _accum(a, np.broadcast_to(out.grad, a.data.shape).copy())
        else:
            _accum(a, np.broadcast_to(np.expand_dims(out.grad, axis), a.data.shape).copy())
    return _make(a.data.sum(axis=axis), (a,), backward)


def exp(a: Tensor) -> Tensor:
    val = np.exp(a.data)

    def backward(out):
        _accum(a, out.grad * val)
    return _make(val, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(out):
        _accum(a, out.grad / a.data)
    return _make(np.log(a.data), (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(out):
        _accum(a, out.grad * mask)
    return _make(a.data * mask, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # tanh form avoids exp overflow for large negative inputs
    val = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def backward(out):
        _accum(a, out.grad * val * (1.0 - val))
    return _make(val, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    val = np.tanh(a.data)

    def backward(out):
        _accum(a, out.grad * (1.0 - val * val))
    return _make(val, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(out):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, out.grad[tuple(idx)])
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors into a matrix, one per row."""
    tensors = list(tensors)

    def backward(out):
        for i, t in enumerate(tensors):
            _accum(t, out.grad[i])
    return _make(np.stack([t.data for t in tensors]), tuple(tensors), backward)


def row(a: Tensor, i: int) -> Tensor:
    """Select row i of a matrix (or element i of a vector)."""
    def backward(out):
        if a.grad is not None:
            a.grad[i] += out.grad
    return _make(a.data[i], (a,), backward)


def take_rows(a: Tensor, indices) -> Tensor:
    indices = np.asarray(indices, dtype=np.intp)

    def backward(out):
        if a.grad is not None:
            np.add.at(a.grad, indices, out.grad)
    return _make(a.data[indices], (a,), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along ``axis``."""
    sel = [slice(None)] * a.data.ndim
    sel[axis] = slice(start, start + length)
    sel = tuple(sel)

    def backward(out):
        if a.grad is not None:
            a.grad[sel] += out.grad
    return _make(a.data[sel], (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(out):
        _accum(a, out.grad.reshape(a.data.shape))
    return _make(a.data.reshape(shape), (a,), backward)


def dot(a: Tensor, b: Tensor) -> Tensor:
    return tsum(mul(a, b))


def softmax(a: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis of a 1-D or 2-D tensor."""
    shift = a.data.max(axis=-1, keepdims=True)  # constant shift, gradient-free
    e = exp(add(a, Tensor(-shift)))
    denom = tsum(e, axis=e.data.ndim - 1)
    if a.data.ndim == 2:
        denom = reshape(denom, (-1, 1))
    return mul(e, power(denom, -1.0))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor); gradient passes only where a > floor."""
    mask = a.data > floor

    def backward(out):
        _accum(a, out.grad * mask)
    return _make(np.maximum(a.data, floor), (a,), backward)


def scatter_add(weights: Tensor, indices, size: int) -> Tensor:
    """Sum 1-D ``weights`` into a length-``size`` vector at ``indices``.

    Duplicate indices accumulate, which is exactly what merging copy
    attention mass over repeated source tokens needs.
    """
    indices = np.asarray(indices, dtype=np.intp)
    val = np.zeros(size, dtype=weights.data.dtype)
    np.add.at(val, indices, weights.data)

    def backward(out):
        _accum(weights, out.grad[indices])
    return _make(val, (weights,), backward)


def _toposort(root: Tensor) -> List[Tensor]:
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate gradients of everything ``loss`` depends on.

    ``loss`` must be scalar; calling backward twice on the same tensor
    without rebuilding the graph is an error (gradients would double).
    """
    if loss.data.ndim != 0:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if getattr(loss, "name", None) == "__backward_done__":
        raise ContractError("backward called twice on the same loss tensor")
    if loss.grad is None:
        return
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_toposort(loss)):
        if node._backward is not None:
            node._backward(node)
    loss.name = "__backward_done__"
