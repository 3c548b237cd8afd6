"""Dense float arrays with reverse-mode automatic differentiation.

A deliberately small engine: numpy holds the data and does the arithmetic,
this module owns the graph and the backward rules.  Training runs in
float32; gradient checks build the same graphs in float64 (dtype follows
the input arrays).

Broadcasting is restricted to two cases: a scalar operand, or an operand
whose shape is a suffix of the other's (leading-batch broadcast).  Anything
else must be reshaped explicitly.
"""
from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf as _erf

DEFAULT_DTYPE = np.float32

_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operands violate an op's shape contract."""


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """N-d float array that can participate in a backward pass.

    ``grad`` is populated (and accumulated into) by ``backward()`` for every
    reachable tensor with ``requires_grad``.  Graphs are acyclic by
    construction: every op returns a fresh tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 *, _parents=(), _op="leaf"):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self.op = _op
        self._parents = _parents
        self._bw = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- autodiff ------------------------------------------------------------

    def backward(self):
        """Backpropagate from a scalar, accumulating into ``grad`` fields."""
        if self.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        topo = _toposort(self)
        gmap = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = gmap.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            if node._bw is None:
                continue
            for parent, pg in zip(node._parents, node._bw(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in gmap:
                    gmap[key] = gmap[key] + pg
                else:
                    gmap[key] = pg

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def _lift(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative DFS: training graphs reach ~1e5 nodes, recursion would blow up.
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


# -- broadcast helpers --------------------------------------------------------


def _check_broadcast(op: str, a: Tensor, b: Tensor):
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    small, big = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if big[len(big) - len(small):] == small:
        return
    raise ShapeError(f"{op}: shapes {sa} and {sb} are not leading-batch compatible")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the original (possibly broadcast) shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    return g.reshape(shape)


def _make(data, parents, op, bw):
    req = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, _op=op)
    if req:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bw = bw
    return out


# -- elementwise and reduction ops --------------------------------------------


def add(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    _check_broadcast("add", a, b)
    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(a.data + b.data, (a, b), "add", bw)


def sub(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    _check_broadcast("sub", a, b)
    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _make(a.data - b.data, (a, b), "sub", bw)


def mul(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    _check_broadcast("mul", a, b)
    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _make(a.data * b.data, (a, b), "mul", bw)


def div(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    _check_broadcast("div", a, b)
    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb
    return _make(a.data / b.data, (a, b), "div", bw)


def neg(a):
    return _make(-a.data, (a,), "neg", lambda g: (-g,))


def pow_(a, p: float):
    p = float(p)
    def bw(g):
        return (g * p * a.data ** (p - 1.0),)
    return _make(a.data ** p, (a,), "pow", bw)


def exp(a):
    out_data = np.exp(a.data)
    return _make(out_data, (a,), "exp", lambda g: (g * out_data,))


def log(a):
    return _make(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def sqrt(a):
    out_data = np.sqrt(a.data)
    return _make(out_data, (a,), "sqrt", lambda g: (g * 0.5 / out_data,))


def abs_(a):
    return _make(np.abs(a.data), (a,), "abs", lambda g: (g * np.sign(a.data),))


def tanh(a):
    out_data = np.tanh(a.data)
    return _make(out_data, (a,), "tanh", lambda g: (g * (1.0 - out_data * out_data),))


def sigmoid(a):
    out_data = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out_data, (a,), "sigmoid", lambda g: (g * out_data * (1.0 - out_data),))


def relu(a):
    return _make(np.maximum(a.data, 0.0), (a,), "relu", lambda g: (g * (a.data > 0.0),))


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a):
    """Exact Gaussian-error-linear unit, 0.5*x*(1 + erf(x/sqrt(2)))."""
    phi = 0.5 * (1.0 + _erf(a.data * _INV_SQRT2))
    def bw(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        return (g * (phi + a.data * pdf),)
    return _make(a.data * phi, (a,), "gelu", bw)


def maximum(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    _check_broadcast("maximum", a, b)
    take_a = a.data >= b.data  # ties route their gradient to the first operand
    def bw(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)
    return _make(np.maximum(a.data, b.data), (a, b), "maximum", bw)


def minimum(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    _check_broadcast("minimum", a, b)
    take_a = a.data <= b.data
    def bw(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)
    return _make(np.minimum(a.data, b.data), (a, b), "minimum", bw)


def clip(a, lo: float, hi: float):
    inside = (a.data > lo) & (a.data < hi)
    return _make(np.clip(a.data, lo, hi), (a,), "clip", lambda g: (g * inside,))


def sum_(a, axis=None):
    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape),)
    return _make(a.data.sum(axis=axis), (a,), "sum", bw)


def mean(a, axis=None):
    n = a.size if axis is None else a.shape[axis]
    def bw(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.shape).astype(a.dtype, copy=False),)
        return (np.broadcast_to(np.expand_dims(g, axis) / n, a.shape),)
    return _make(a.data.mean(axis=axis), (a,), "mean", bw)


# -- structural ops ------------------------------------------------------------


def reshape(a, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = a.shape
    return _make(a.data.reshape(shape), (a,), "reshape", lambda g: (g.reshape(old),))


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), "transpose",
                 lambda g: (np.transpose(g, inv),))


def matmul(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    if a.ndim < 2 or b.ndim < 2 or a.ndim != b.ndim:
        raise ShapeError(f"matmul: needs equal-rank operands >= 2-d, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    def bw(g):
        return g @ _swap(b.data), _swap(a.data) @ g
    return _make(a.data @ b.data, (a, b), "matmul", bw)


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def gather(a, indices, axis: int = 0):
    """Select slices along ``axis``; backward scatter-adds."""
    idx = np.asarray(indices)
    def bw(g):
        buf = np.zeros_like(a.data)
        np.add.at(np.moveaxis(buf, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (buf,)
    return _make(np.take(a.data, idx, axis=axis), (a,), "gather", bw)


def concat(tensors, axis: int = 0):
    tensors = [t for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    def bw(g):
        return tuple(np.split(g, splits, axis=axis))
    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), "concat", bw)


def softmax(a, axis: int = -1):
    """Numerically stable softmax; output rows sum to 1 along ``axis``."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)
    def bw(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - dot),)
    return _make(out_data, (a,), "softmax", bw)


LAYER_NORM_EPS = 1e-5


def layer_norm(a, eps: float = LAYER_NORM_EPS):
    """Normalize the last axis to zero mean / unit variance (no affine).

    The epsilon sits inside the square root, so a constant input maps to
    exactly zero rather than NaN.
    """
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (a.data - mu) * inv
    def bw(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gym),)
    return _make(y, (a,), "layer_norm", bw)


def stack(tensors, axis: int = 0):
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)
