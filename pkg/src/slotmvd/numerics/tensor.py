"""Reverse-mode autodiff over dense numpy arrays.

A Tensor wraps an ndarray plus an optional tape node (parents + vjp closure).
Graphs are built eagerly during the forward pass and freed as backward()
consumes them. Values are immutable once produced; only leaf parameters carry
persistent .grad buffers.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy.special import erf as _erf

from slotmvd.errors import ContractViolation, NumericFailure
from slotmvd.kernels import col2im, im2col

_GRAD_ENABLED = [True]


@contextmanager
def no_grad():
    """Disable tape construction inside the block (inference / sampling)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def grad_enabled() -> bool:
    return _GRAD_ENABLED[-1]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "op")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._vjp = None
        self.op = op

    # -- construction -------------------------------------------------------

    @staticmethod
    def _node(data, parents, vjp, op):
        if not grad_enabled() or not any(p.requires_grad for p in parents):
            return Tensor(data)
        t = Tensor(data, requires_grad=True, op=op)
        t._parents = tuple(parents)
        t._vjp = vjp
        return t

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

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op})"

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = self.data + other.data

        def vjp(g):
            return _unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape)

        return Tensor._node(out, (self, other), vjp, "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        out = self.data - other.data

        def vjp(g):
            return _unbroadcast(g, self.data.shape), _unbroadcast(-g, other.data.shape)

        return Tensor._node(out, (self, other), vjp, "sub")

    def __rsub__(self, other):
        return as_tensor(other).__sub__(self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = self.data * other.data
        a, b = self.data, other.data

        def vjp(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._node(out, (self, other), vjp, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = self.data / other.data
        a, b = self.data, other.data

        def vjp(g):
            return (
                _unbroadcast(g / b, a.shape),
                _unbroadcast(-g * a / (b * b), b.shape),
            )

        return Tensor._node(out, (self, other), vjp, "div")

    def __rtruediv__(self, other):
        return as_tensor(other).__truediv__(self)

    def __neg__(self):
        def vjp(g):
            return (-g,)

        return Tensor._node(-self.data, (self,), vjp, "neg")

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise ContractViolation("pow supports scalar exponents only")
        out = self.data**p
        x = self.data

        def vjp(g):
            return (g * p * x ** (p - 1),)

        return Tensor._node(out, (self,), vjp, "pow")

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        out = a @ b

        def vjp(g):
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return _unbroadcast_matmul(ga, a.shape), _unbroadcast_matmul(gb, b.shape)

        return Tensor._node(out, (self, other), vjp, "matmul")

    def __getitem__(self, idx):
        out = self.data[idx]
        shape = self.data.shape

        def vjp(g):
            full = np.zeros(shape, dtype=g.dtype)
            full[idx] = g
            return (full,)

        return Tensor._node(out, (self,), vjp, "slice")

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        out = self.data.reshape(shape)

        def vjp(g):
            return (g.reshape(old),)

        return Tensor._node(out, (self,), vjp, "reshape")

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        out = self.data.transpose(axes)

        def vjp(g):
            return (g.transpose(inv),)

        return Tensor._node(out, (self,), vjp, "transpose")

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, shape).copy(),)

        return Tensor._node(out, (self,), vjp, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else _axis_size(self.data.shape, axis)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- pointwise nonlinearities ---------------------------------------------

    def exp(self):
        out = np.exp(self.data)

        def vjp(g):
            return (g * out,)

        return Tensor._node(out, (self,), vjp, "exp")

    def log(self):
        out = np.log(self.data)
        x = self.data

        def vjp(g):
            return (g / x,)

        return Tensor._node(out, (self,), vjp, "log")

    def sqrt(self):
        out = np.sqrt(self.data)

        def vjp(g):
            return (g * 0.5 / out,)

        return Tensor._node(out, (self,), vjp, "sqrt")

    def tanh(self):
        out = np.tanh(self.data)

        def vjp(g):
            return (g * (1.0 - out * out),)

        return Tensor._node(out, (self,), vjp, "tanh")

    def sigmoid(self):
        out = 1.0 / (1.0 + np.exp(-self.data))

        def vjp(g):
            return (g * out * (1.0 - out),)

        return Tensor._node(out, (self,), vjp, "sigmoid")

    def relu(self):
        mask = self.data > 0
        out = np.where(mask, self.data, 0.0)

        def vjp(g):
            return (np.where(mask, g, 0.0),)

        return Tensor._node(out, (self,), vjp, "relu")

    def erf(self):
        out = _erf(self.data)
        x = self.data
        c = 2.0 / np.sqrt(np.pi)

        def vjp(g):
            return (g * c * np.exp(-x * x),)

        return Tensor._node(out, (self,), vjp, "erf")


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x))


def constant(x, dtype=None) -> Tensor:
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


# ---------------------------------------------------------------------------
# broadcasting helpers
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _unbroadcast_matmul(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i in range(len(shape) - 2) if shape[i] == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _axis_size(shape, axis) -> int:
    if isinstance(axis, int):
        return shape[axis]
    n = 1
    for a in axis:
        n *= shape[a]
    return n


# ---------------------------------------------------------------------------
# free functions: composite and primitive ops
# ---------------------------------------------------------------------------


def where(cond: np.ndarray, a, b) -> Tensor:
    """Select with a constant boolean condition; gradients route per branch."""
    a = as_tensor(a)
    b = as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    out = np.where(cond, a.data, b.data)

    def vjp(g):
        return (
            _unbroadcast(np.where(cond, g, 0.0), a.data.shape),
            _unbroadcast(np.where(cond, 0.0, g), b.data.shape),
        )

    return Tensor._node(out, (a, b), vjp, "where")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return Tensor._node(out, tuple(tensors), vjp, "concat")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return Tensor._node(out, (x,), vjp, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)

    def vjp(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return Tensor._node(out, (x,), vjp, "log_softmax")


def gelu(x: Tensor) -> Tensor:
    """Exact erf-form GELU (the tanh approximation is deliberately not used)."""
    x = as_tensor(x)
    return x * 0.5 * ((x * (1.0 / np.sqrt(2.0))).erf() + 1.0)


def silu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return x * x.sigmoid()


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 1) -> Tensor:
    """2-D convolution, NCHW layout, weight (Cout, Cin, kh, kw)."""
    x = as_tensor(x)
    w = as_tensor(w)
    n, c, h, wd = x.data.shape
    cout, cin, kh, kw = w.data.shape
    if cin != c:
        raise ContractViolation(f"conv2d channel mismatch: input {c}, weight {cin}")
    cols = im2col(x.data, kh, kw, stride, pad)  # (N, C, kh, kw, Ho, Wo)
    ho, wo = cols.shape[4], cols.shape[5]
    cols2 = cols.reshape(n, c * kh * kw, ho * wo)
    wmat = w.data.reshape(cout, c * kh * kw)
    out = np.matmul(wmat, cols2).reshape(n, cout, ho, wo)
    if b is not None:
        out = out + b.data.reshape(1, cout, 1, 1)

    def vjp(g):
        gm = g.reshape(n, cout, ho * wo)
        gw = np.einsum("nop,nkp->ok", gm, cols2).reshape(w.data.shape)
        gcols = np.matmul(wmat.T[None, :, :], gm)
        gx = col2im(gcols.reshape(n, c, kh, kw, ho, wo), h, wd, stride, pad)
        if b is not None:
            gb = g.sum(axis=(0, 2, 3))
            return gx, gw, gb
        return gx, gw

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._node(out, parents, vjp, "conv2d")


def upsample_nearest2x(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    n, c, h, w = x.data.shape

    def vjp(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return Tensor._node(out, (x,), vjp, "upsample2x")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then affine."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    n = x.data.shape[-1]

    def vjp(g):
        gg = g * gamma.data
        gx = (
            inv / n * (n * gg - gg.sum(axis=-1, keepdims=True) - xhat * (gg * xhat).sum(axis=-1, keepdims=True))
        )
        ggamma = _unbroadcast(g * xhat, gamma.data.shape)
        gbeta = _unbroadcast(g, beta.data.shape)
        return gx, ggamma, gbeta

    return Tensor._node(out, (x, gamma, beta), vjp, "layer_norm")


def group_norm(x: Tensor, groups: int, gamma: Tensor | None = None, beta: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """GroupNorm over NCHW; per (sample, group) statistics, optional affine."""
    x = as_tensor(x)
    n, c, h, w = x.data.shape
    if c % groups:
        raise ContractViolation(f"channels {c} not divisible by groups {groups}")
    xg = x.data.reshape(n, groups, c // groups * h * w)
    mu = xg.mean(axis=2, keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).reshape(n, c, h, w)
    out = xhat
    if gamma is not None:
        out = out * gamma.data.reshape(1, c, 1, 1)
    if beta is not None:
        out = out + beta.data.reshape(1, c, 1, 1)
    m = c // groups * h * w

    def vjp(g):
        gg = g * gamma.data.reshape(1, c, 1, 1) if gamma is not None else g
        ggf = gg.reshape(n, groups, m)
        xhf = xhat.reshape(n, groups, m)
        gx = (
            inv / m * (m * ggf - ggf.sum(axis=2, keepdims=True) - xhf * (ggf * xhf).sum(axis=2, keepdims=True))
        ).reshape(n, c, h, w)
        grads = [gx]
        if gamma is not None:
            grads.append((g * xhat).sum(axis=(0, 2, 3)))
        if beta is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = [x]
    if gamma is not None:
        parents.append(gamma)
    if beta is not None:
        parents.append(beta)
    return Tensor._node(out, tuple(parents), vjp, "group_norm")


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def backward(loss: Tensor, nan_guard: bool = True) -> None:
    """Accumulate d(loss)/d(leaf) into .grad for every reachable leaf.

    The loss must be scalar. With nan_guard, a non-finite gradient raises
    NumericFailure naming the producing node.
    """
    if loss.data.size != 1:
        raise ContractViolation(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise NumericFailure("loss is not finite")
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

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._vjp is None:
            continue
        g = node.grad
        if g is None:
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if nan_guard and not np.all(np.isfinite(pg)):
                raise NumericFailure(f"non-finite gradient produced by node '{node.op}'")
            if p.grad is None:
                p.grad = pg
            else:
                p.grad = p.grad + pg
        node.grad = None
        node._vjp = None
        node._parents = ()
