"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only the operations needed by the depth autoencoder, the policy/value heads
and the clipped training objective are provided. Gradients are accumulated in
``Tensor.grad`` by :meth:`Tensor.backward`, which walks the recorded graph in
reverse topological order.
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __float__(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None:
                        continue
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_graph(*parents) -> bool:
    return _grad_enabled and any(p.requires_grad or p._backward is not None for p in parents)


def _result(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _needs_graph(*parents):
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.data.ndim == 1:
            ga = g @ b.data.T
            gb = np.outer(a.data, g)
        else:
            ga = g @ b.data.T
            gb = a.data.T @ g
        return ga, gb

    return _result(a.data @ b.data, (a, b), back)


def sum_(a, axis=None) -> Tensor:
    shape = a.shape

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(a.data.sum(axis=axis), (a,), back)


def mean(a, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis), 1.0 / n)


def square(a) -> Tensor:
    return _result(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def reshape(a, shape) -> Tensor:
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def tanh(a) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a) -> Tensor:
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; the gradient passes only where ``lo <= a <= hi``."""
    mask = (a.data >= lo) & (a.data <= hi)
    return _result(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return _result(np.where(pick_a, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def log_softmax(a) -> Tensor:
    """Log-softmax over the last axis."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return _result(y, (a,), lambda g: (g - p * g.sum(axis=-1, keepdims=True),))


def take_along_last(a, index: np.ndarray) -> Tensor:
    """``a[i, index[i]]`` for a 2-D tensor."""
    index = np.asarray(index, dtype=np.intp)
    rows = np.arange(a.shape[0])

    def back(g):
        out = np.zeros_like(a.data)
        np.add.at(out, (rows, index), g)
        return (out,)

    return _result(a.data[rows, index], (a,), back)


def _im2col(xp: np.ndarray, k: int, stride: int, oh: int, ow: int) -> np.ndarray:
    # (N, C, Hp, Wp) -> (N*oh*ow, C*k*k)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    n, c = xp.shape[:2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)


def _col2im(cols: np.ndarray, shape, k: int, stride: int, oh: int, ow: int) -> np.ndarray:
    # adjoint of _im2col; shape is the padded (N, C, Hp, Wp)
    n, c = shape[:2]
    cols = cols.reshape(n, oh, ow, c, k, k)
    out = np.zeros(shape)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out


def conv_out_size(n: int, k: int = 3, stride: int = 2, pad: int = 1) -> int:
    return (n + 2 * pad - k) // stride + 1


def conv2d(x, w, b, stride: int = 2, pad: int = 1) -> Tensor:
    """2-D cross-correlation. ``x``: (N, C, H, W), ``w``: (O, C, k, k), ``b``: (O,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    oh, ow = conv_out_size(h, k, stride, pad), conv_out_size(wd, k, stride, pad)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = _im2col(xp, k, stride, oh, ow)
    wmat = w.data.reshape(o, -1)
    y = (cols @ wmat.T + b.data).reshape(n, oh, ow, o).transpose(0, 3, 1, 2)

    def back(g):
        gf = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (gf.T @ cols).reshape(w.shape)
        gb = gf.sum(axis=0)
        gxp = _col2im(gf @ wmat, xp.shape, k, stride, oh, ow)
        return gxp[:, :, pad:pad + h, pad:pad + wd], gw, gb

    return _result(y, (x, w, b), back)


def conv_transpose2d(x, w, b, out_hw, stride: int = 2, pad: int = 1) -> Tensor:
    """Adjoint of :func:`conv2d` w.r.t. its input, plus bias.

    ``x``: (N, Ci, h, w), ``w``: (Ci, Co, k, k), output (N, Co, *out_hw).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    n, ci, h, wd = x.shape
    _, co, k, _ = w.shape
    oh, ow = out_hw
    if conv_out_size(oh, k, stride, pad) != h or conv_out_size(ow, k, stride, pad) != wd:
        raise ValueError(f"output size {out_hw} inconsistent with input {(h, wd)}")
    padded = (n, co, oh + 2 * pad, ow + 2 * pad)
    wmat = w.data.reshape(ci, -1)
    xf = x.data.transpose(0, 2, 3, 1).reshape(-1, ci)
    yp = _col2im(xf @ wmat, padded, k, stride, h, wd)
    y = yp[:, :, pad:pad + oh, pad:pad + ow] + b.data[None, :, None, None]

    def back(g):
        gp = np.pad(g, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = _im2col(gp, k, stride, h, wd)
        gx = (cols @ wmat.T).reshape(n, h, wd, ci).transpose(0, 3, 1, 2)
        gw = (xf.T @ cols).reshape(w.shape)
        gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    return _result(y, (x, w, b), back)


def dense(x, w, b) -> Tensor:
    return add(matmul(x, w), b)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                   lambda g: tuple(np.split(g, splits, axis=axis)))
