"""Minimal reverse-mode autodiff over numpy arrays.

Only the primitives the benchmark's models need are provided. Every op builds
a node holding its output array and a closure that pushes the upstream
gradient to its parents; ``Tensor.backward`` walks the graph in reverse
topological order.
"""
from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

_DTYPES = {"f32": np.float32, "f64": np.float64}
_dtype = np.float32


def get_dtype():
    return _dtype


def set_precision(name: str) -> None:
    global _dtype
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_DTYPES)}")
    _dtype = _DTYPES[name]


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the dtype used for new tensors (``"f32"`` or ``"f64"``)."""
    prev = _dtype
    set_precision(name)
    try:
        yield
    finally:
        globals()["_dtype"] = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        if isinstance(data, np.ndarray) and data.dtype == _dtype:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=_dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = toposort(self)
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # free intermediate buffers; leaves keep their gradients
        for node in order:
            if node._parents:
                node.grad = None
                node._parents = ()
                node._backward = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
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
    return order


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data, op=op)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), backward, "mul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    # np.maximum keeps NaN, so a diverged input is not silently zeroed
    return _node(np.maximum(x.data, 0).astype(x.data.dtype, copy=False), (x,),
                 lambda g: _accum(x, g * mask), "relu")


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid_np(x.data)
    return _node(s, (x,), lambda g: _accum(x, g * s * (1 - s)), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _node(t, (x,), lambda g: _accum(x, g * (1 - t * t)), "tanh")


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data > lo) & (x.data < hi)
    return _node(np.clip(x.data, lo, hi), (x,), lambda g: _accum(x, g * inside),
                 f"clamp[{lo},{hi}]")


def detach(x: Tensor) -> Tensor:
    """Stop-gradient: same values, no path back to ``x``."""
    return Tensor(x.data, op="detach")


def identity(x: Tensor) -> Tensor:
    return x


ACTIVATIONS = {"identity": identity, "relu": relu, "sigmoid": sigmoid, "tanh": tanh}


# ------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _node(a.data @ b.data, (a, b), backward, "matmul")


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    return _node(np.swapaxes(x.data, -1, -2), (x,),
                 lambda g: _accum(x, np.swapaxes(g, -1, -2)), "transpose")


def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: _accum(x, g.reshape(old)), "reshape")


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, shape).copy())

    return _node(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [tensor(x) for x in xs]
    if len(xs) == 1:
        return xs[0]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        for x, piece in zip(xs, np.split(g, cuts, axis=axis)):
            _accum(x, piece)

    return _node(np.concatenate([x.data for x in xs], axis=axis), xs, backward, "concat")


def stack(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = [tensor(x) for x in xs]

    def backward(g):
        for i, x in enumerate(xs):
            _accum(x, np.take(g, i, axis=axis))

    return _node(np.stack([x.data for x in xs], axis=axis), xs, backward, "stack")


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows along axis 0; gradients of repeated rows are summed."""
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        _accum(x, full)

    return _node(x.data[idx], (x,), backward, "take_rows")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        _accum(x, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _node(s, (x,), backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * rstd
    width = x.shape[-1]

    def backward(g):
        if gamma.requires_grad:
            _accum(gamma, _unbroadcast(g * xhat, gamma.shape))
        if beta.requires_grad:
            _accum(beta, _unbroadcast(g, beta.shape))
        if x.requires_grad:
            dxhat = g * gamma.data
            dx = (rstd / width) * (width * dxhat
                                   - dxhat.sum(axis=-1, keepdims=True)
                                   - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
            _accum(x, dx)

    return _node(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "layer_norm")


# ---------------------------------------------------------------- composites

def embedding_lookup(table: Tensor, indices, name: str = "embedding") -> Tensor:
    indices = np.asarray(indices, dtype=np.int64)
    vocab = table.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= vocab):
        bad = indices[(indices < 0) | (indices >= vocab)][0]
        raise IndexError(f"feature {name!r}: index {int(bad)} out of range [0, {vocab})")
    return take_rows(table, indices)


def dense_layer(x: Tensor, W: Tensor, b: Tensor | None, activation: str = "identity") -> Tensor:
    if x.shape[-1] != W.shape[0] or (b is not None and b.shape[-1] != W.shape[-1]):
        raise ValueError(f"dense_layer shape mismatch: x{x.shape} W{W.shape}"
                         f"{'' if b is None else f' b{b.shape}'}")
    out = matmul(x, W)
    if b is not None:
        out = add(out, b)
    return ACTIVATIONS[activation](out)


def bce_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits), in the fused log-sigmoid form."""
    z = logits.data
    y = np.asarray(labels, dtype=z.dtype).reshape(z.shape)
    losses = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = z.size

    def backward(g):
        _accum(logits, g * (_sigmoid_np(z) - y) / n)

    return _node(np.asarray(losses.mean(), dtype=z.dtype), (logits,), backward, "bce")


def params_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]
