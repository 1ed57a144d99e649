"""Reverse-mode automatic differentiation over numpy arrays.

Every operation records its parents and a closure that pushes the output
gradient back to them.  ``Tensor.backward`` walks the graph in reverse
topological order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._backward = backward

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) * grad into every leaf's ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.dtype)
        if grad.shape != self.shape:
            raise ValueError(f"gradient shape {grad.shape} != tensor shape {self.shape}")

        order, seen, stack = [], set(), [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        # Interior gradients are per-pass; leaves accumulate.
        for node in order:
            if node._backward is not None:
                node.grad = None
        _accumulate(self, grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other, self.dtype), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return tsum(self, axis, keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else None)
    return Tensor(arr)


def _accumulate(t: Tensor, g):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _result(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data)
    return Tensor(data, True, tuple(parents), backward)


# -- elementwise --------------------------------------------------------------

def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), bw)


def neg(a):
    def bw(g):
        _accumulate(a, -g)

    return _result(-a.data, (a,), bw)


def mul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), bw)


def div(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    out = a.data / b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * out / b.data, b.shape))

    return _result(out, (a, b), bw)


def sqrt(a):
    out = np.sqrt(a.data)

    def bw(g):
        # zero where the input is zero: the subgradient of a norm at the origin
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / out, 0.0)
        _accumulate(a, g * d)

    return _result(out, (a,), bw)


def relu(a):
    mask = a.data > 0

    def bw(g):
        _accumulate(a, g * mask)

    return _result(np.where(mask, a.data, 0).astype(a.dtype), (a,), bw)


def softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        _accumulate(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _result(s, (a,), bw)


# -- shape and reduction ------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _result(np.asarray(out), (a,), bw)


def reshape(a, shape):
    def bw(g):
        _accumulate(a, g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), bw)


def getitem(a, index):
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accumulate(a, full)

    return _result(a.data[index], (a,), bw)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), bw)


# -- vector geometry ----------------------------------------------------------

def cross(a, b):
    """Cross product along the last axis (length 3)."""
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def bw(g):
        _accumulate(a, _unbroadcast(np.cross(b.data, g), a.shape))
        _accumulate(b, _unbroadcast(np.cross(g, a.data), b.shape))

    return _result(np.cross(a.data, b.data), (a, b), bw)


def norm(a, axis=-1, keepdims=False):
    return sqrt(tsum(a * a, axis=axis, keepdims=keepdims))


# -- 3D convolution and pooling ----------------------------------------------

def _same_pad(k):
    return (k - 1) // 2, k // 2


def conv3d(x, w, b=None):
    """Stride-1 'same' 3D convolution (cross-correlation).

    x: (B, C, D, H, W); w: (O, C, kd, kh, kw); b: (O,).
    Even kernels pad one extra cell on the high side.
    """
    x = as_tensor(x)
    w = as_tensor(w)
    B, C, D, H, W = x.shape
    O, Cw, kd, kh, kw = w.shape
    if Cw != C:
        raise ConfigError(f"conv3d expects {Cw} input channels, got {C}")
    pads = [_same_pad(k) for k in (kd, kh, kw)]
    xp = np.pad(x.data, [(0, 0), (0, 0)] + pads)
    win = sliding_window_view(xp, (kd, kh, kw), axis=(2, 3, 4))
    cols = win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(B * D * H * W, C * kd * kh * kw)
    wmat = w.data.reshape(O, -1)
    out = cols @ wmat.T
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
    out = out.reshape(B, D, H, W, O).transpose(0, 4, 1, 2, 3)
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        g2 = g.transpose(0, 2, 3, 4, 1).reshape(-1, O)
        _accumulate(w, (g2.T @ cols).reshape(w.shape))
        if b is not None:
            _accumulate(b, g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(B, D, H, W, C, kd, kh, kw)
            dcols = np.ascontiguousarray(dcols.transpose(0, 4, 5, 6, 7, 1, 2, 3))
            dxp = np.zeros_like(xp)
            for i in range(kd):
                for j in range(kh):
                    for k in range(kw):
                        dxp[:, :, i:i + D, j:j + H, k:k + W] += dcols[:, :, i, j, k]
            (d0, _), (h0, _), (w0, _) = pads
            _accumulate(x, dxp[:, :, d0:d0 + D, h0:h0 + H, w0:w0 + W])

    return _result(np.ascontiguousarray(out), parents, bw)


def maxpool3d(x, size):
    """Non-overlapping max pooling; spatial dims must be divisible by ``size``."""
    x = as_tensor(x)
    B, C, D, H, W = x.shape
    s = int(size)
    if D % s or H % s or W % s:
        raise ConfigError(f"maxpool3d({s}) cannot tile spatial shape {(D, H, W)}")
    r = x.data.reshape(B, C, D // s, s, H // s, s, W // s, s)
    r = r.transpose(0, 1, 2, 4, 6, 3, 5, 7).reshape(B, C, D // s, H // s, W // s, s ** 3)
    arg = r.argmax(axis=-1)[..., None]
    out = np.take_along_axis(r, arg, axis=-1)[..., 0]

    def bw(g):
        gr = np.zeros_like(r)
        np.put_along_axis(gr, arg, g[..., None], axis=-1)
        gr = gr.reshape(B, C, D // s, H // s, W // s, s, s, s).transpose(0, 1, 2, 5, 3, 6, 4, 7)
        _accumulate(x, gr.reshape(x.shape))

    return _result(out, (x,), bw)
