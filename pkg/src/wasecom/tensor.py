"""Reverse-mode automatic differentiation on float64 numpy arrays.

Graphs are built define-by-run: every op returns a new Tensor that remembers
its parents and a closure that routes upstream gradient to them.  backward()
walks the graph once in reverse topological order.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_backward_ran")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = _parents
        self._backward = None
        self._backward_ran = False

    # ------------------------------------------------------------------ misc
    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0
        self._backward_ran = False

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # ------------------------------------------------------------- factories
    @classmethod
    def zeros(cls, *shape, requires_grad=False):
        return cls(np.zeros(shape), requires_grad=requires_grad)

    @classmethod
    def ones(cls, *shape, requires_grad=False):
        return cls(np.ones(shape), requires_grad=requires_grad)

    @classmethod
    def uniform_init(cls, rng: np.random.Generator, fan_in: int, fan_out: int, requires_grad=True):
        # Xavier-style uniform init for a (fan_in, fan_out) weight matrix.
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return cls(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=requires_grad)

    # ------------------------------------------------------------ structural
    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if self._backward_ran:
            raise RuntimeError("backward already ran for this graph; zero grads and rebuild the forward pass")
        order = _topological_order(self)
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward()
        self._backward_ran = True

    # ----------------------------------------------------------- arithmetic
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # convenience method forms
    def relu(self):
        return relu(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def square(self):
        return square(self)

    def pow(self, exponent: float):
        return power(self, exponent)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _topological_order(root: Tensor):
    # Iterative DFS so very deep graphs cannot hit the recursion limit.
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _needs_graph(*tensors) -> bool:
    return any(t.requires_grad or t._parents for t in tensors)


def _reduce_grad_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's original shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(op: str, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.data.shape} and {b.data.shape}") from None


# ---------------------------------------------------------------------- ops
def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("add", a, b)
    out = Tensor(a.data + b.data, _parents=(a, b) if _needs_graph(a, b) else ())

    def _bw():
        if a.requires_grad or a._parents:
            a._accumulate(_reduce_grad_to(out.grad, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_reduce_grad_to(out.grad, b.data.shape))

    if out._parents:
        out._backward = _bw
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("sub", a, b)
    out = Tensor(a.data - b.data, _parents=(a, b) if _needs_graph(a, b) else ())

    def _bw():
        if a.requires_grad or a._parents:
            a._accumulate(_reduce_grad_to(out.grad, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_reduce_grad_to(-out.grad, b.data.shape))

    if out._parents:
        out._backward = _bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("mul", a, b)
    out = Tensor(a.data * b.data, _parents=(a, b) if _needs_graph(a, b) else ())

    def _bw():
        if a.requires_grad or a._parents:
            a._accumulate(_reduce_grad_to(out.grad * b.data, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_reduce_grad_to(out.grad * a.data, b.data.shape))

    if out._parents:
        out._backward = _bw
    return out


def scale(a: Tensor, k: float) -> Tensor:
    k = float(k)
    out = Tensor(a.data * k, _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        a._accumulate(out.grad * k)

    if out._parents:
        out._backward = _bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = Tensor(a.data @ b.data, _parents=(a, b) if _needs_graph(a, b) else ())

    def _bw():
        if a.requires_grad or a._parents:
            a._accumulate(out.grad @ b.data.T)
        if b.requires_grad or b._parents:
            b._accumulate(a.data.T @ out.grad)

    if out._parents:
        out._backward = _bw
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        a._accumulate(out.grad * (a.data > 0))

    if out._parents:
        out._backward = _bw
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        a._accumulate(out.grad * (1.0 - y * y))

    if out._parents:
        out._backward = _bw
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y, _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        a._accumulate(out.grad * y)

    if out._parents:
        out._backward = _bw
    return out


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data), _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        a._accumulate(out.grad / a.data)

    if out._parents:
        out._backward = _bw
    return out


def square(a: Tensor) -> Tensor:
    out = Tensor(a.data * a.data, _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        a._accumulate(out.grad * (2.0 * a.data))

    if out._parents:
        out._backward = _bw
    return out


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    out = Tensor(a.data ** exponent, _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        a._accumulate(out.grad * exponent * a.data ** (exponent - 1.0))

    if out._parents:
        out._backward = _bw
    return out


def tsum(a: Tensor, axis=None) -> Tensor:
    out = Tensor(a.data.sum(axis=axis), _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        g = out.grad
        if axis is not None:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape))

    if out._parents:
        out._backward = _bw
    return out


def tmean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    out = Tensor(a.data.mean(axis=axis), _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        g = out.grad
        if axis is not None:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape) / count)

    if out._parents:
        out._backward = _bw
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape), _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        a._accumulate(out.grad.reshape(a.data.shape))

    if out._parents:
        out._backward = _bw
    return out


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Pick rows of a (V, E) table by integer index; the embedding lookup."""
    ids = np.asarray(ids)
    if ids.ndim != 1:
        raise ValueError(f"gather_rows: ids must be 1-D, got shape {ids.shape}")
    out = Tensor(table.data[ids], _parents=(table,) if _needs_graph(table) else ())

    def _bw():
        g = np.zeros_like(table.data)
        np.add.at(g, ids, out.grad)
        table._accumulate(g)

    if out._parents:
        out._backward = _bw
    return out


def select_columns(a: Tensor, ids: np.ndarray) -> Tensor:
    """Per-row element pick: (N, V) with index vector (N,) -> (N,)."""
    ids = np.asarray(ids)
    n = a.data.shape[0]
    rows = np.arange(n)
    out = Tensor(a.data[rows, ids], _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        g = np.zeros_like(a.data)
        g[rows, ids] = out.grad
        a._accumulate(g)

    if out._parents:
        out._backward = _bw
    return out


def logsumexp(a: Tensor) -> Tensor:
    """Stable log-sum-exp over the last axis."""
    m = a.data.max(axis=-1, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=-1)
    out = Tensor(m.squeeze(-1) + np.log(s), _parents=(a,) if _needs_graph(a) else ())

    def _bw():
        soft = e / s[..., None]
        a._accumulate(out.grad[..., None] * soft)

    if out._parents:
        out._backward = _bw
    return out
