"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery for the models in this package: float64 tensors,
broadcasting-aware elementwise ops, batched matmul, gather/scatter by
row index, and segment reductions. Gradients are accumulated into
``Tensor.grad`` by :meth:`Tensor.backward`; tensors that do not require
gradients record no tape entries, so frozen inputs stay frozen by
construction.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_vjps")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._vjps: tuple = ()

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def param(data) -> "Tensor":
        return Tensor(data, requires_grad=True)

    @staticmethod
    def _result(data, vjps) -> "Tensor":
        vjps = tuple((p, fn) for p, fn in vjps if p.requires_grad)
        out = Tensor(data, requires_grad=bool(vjps))
        out._vjps = vjps
        return out

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- autograd ------------------------------------------------------------

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without gradient needs a scalar")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._vjps:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.asarray(grad, dtype=np.float64).reshape(self.data.shape)
        for node in reversed(topo):
            if node.grad is None:
                continue
            g = node.grad
            for parent, vjp in node._vjps:
                contrib = vjp(g)
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += contrib

    def zero_grad(self):
        self.grad = None

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- primitive operations ----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data + b.data,
        [
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(g, b.data.shape)),
        ],
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data * b.data,
        [
            (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
            (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
        ],
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data / b.data,
        [
            (a, lambda g: _unbroadcast(g / b.data, a.data.shape)),
            (b, lambda g: _unbroadcast(-g * a.data / (b.data * b.data),
                                       b.data.shape)),
        ],
    )


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(
        a.data ** exponent,
        [(a, lambda g: g * exponent * a.data ** (exponent - 1.0))],
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    return Tensor._result(
        a.data @ b.data,
        [
            (a, lambda g: _unbroadcast(g @ b.data.swapaxes(-1, -2),
                                       a.data.shape)),
            (b, lambda g: _unbroadcast(a.data.swapaxes(-1, -2) @ g,
                                       b.data.shape)),
        ],
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return Tensor._result(out_data, [(a, lambda g: g * out_data)])


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(np.log(a.data), [(a, lambda g: g / a.data)])


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._result(np.where(mask, a.data, 0.0), [(a, lambda g: g * mask)])


def leaky_relu(a, alpha: float = 0.2) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._result(
        np.where(mask, a.data, alpha * a.data),
        [(a, lambda g: g * np.where(mask, 1.0, alpha))],
    )


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor._result(s, [(a, lambda g: g * s * (1.0 - s))])


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.data.shape).copy()

    return Tensor._result(a.data.sum(axis=axis, keepdims=keepdims),
                          [(a, backward)])


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather slices along ``axis`` (rows by default)."""
    a = as_tensor(a)
    indices = np.asarray(indices)

    def backward(g):
        out = np.zeros_like(a.data)
        sel = (slice(None),) * axis + (indices,)
        np.add.at(out, sel, g)
        return out

    return Tensor._result(np.take(a.data, indices, axis=axis), [(a, backward)])


def segment_sum(a, segment_ids, num_segments: int, axis: int = 0) -> Tensor:
    """Sum slices of ``a`` along ``axis`` into ``num_segments`` buckets."""
    a = as_tensor(a)
    segment_ids = np.asarray(segment_ids)
    shape = list(a.data.shape)
    shape[axis] = num_segments
    out_data = np.zeros(shape, dtype=np.float64)
    sel = (slice(None),) * axis + (segment_ids,)
    np.add.at(out_data, sel, a.data)
    return Tensor._result(
        out_data, [(a, lambda g: np.take(g, segment_ids, axis=axis))]
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def make_backward(i):
        lo, hi = bounds[i], bounds[i + 1]

        def backward(g):
            sel = (slice(None),) * axis + (slice(lo, hi),)
            return g[sel]

        return backward

    return Tensor._result(
        np.concatenate([t.data for t in tensors], axis=axis),
        [(t, make_backward(i)) for i, t in enumerate(tensors)],
    )


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(
        a.data.reshape(shape), [(a, lambda g: g.reshape(a.data.shape))]
    )


def custom_leaf(data: np.ndarray, parents_and_vjps) -> Tensor:
    """Insert a value computed outside the tape, with hand-written
    vector-Jacobian products routing gradients to existing tensors."""
    return Tensor._result(data, parents_and_vjps)


# -- optimizer ----------------------------------------------------------------


class Adam:
    """Adam with bias correction; step size supplied per call so callers
    own the schedule."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, lr: float):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
