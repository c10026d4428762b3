"""Neural-net building blocks on top of the autodiff Tensor.

Modules register their parameters in a ParamStore under a path prefix at
construction time, so checkpoints can be loaded before any forward pass.
"""

from __future__ import annotations

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.numerics.params import ParamStore
from slotmvd.numerics.tensor import (
    Tensor,
    concat,
    conv2d,
    gelu,
    group_norm,
    layer_norm,
    silu,
    softmax,
    where,
)


class Linear:
    def __init__(
        self,
        store: ParamStore,
        path: str,
        din: int,
        dout: int,
        bias: bool = True,
        zero_init: bool = False,
    ):
        init = "zeros" if zero_init else "normal"
        self.w = store.param(f"{path}/w", (din, dout), init=init)
        self.b = store.param(f"{path}/b", (dout,), init="zeros") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.w
        if self.b is not None:
            out = out + self.b
        return out


class Conv2d:
    def __init__(
        self,
        store: ParamStore,
        path: str,
        cin: int,
        cout: int,
        k: int = 3,
        stride: int = 1,
        pad: int | None = None,
        zero_init: bool = False,
    ):
        self.stride = stride
        self.pad = k // 2 if pad is None else pad
        init = "zeros" if zero_init else "normal"
        self.w = store.param(f"{path}/w", (cout, cin, k, k), init=init)
        self.b = store.param(f"{path}/b", (cout,), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)


class LayerNorm:
    def __init__(self, store: ParamStore, path: str, dim: int):
        self.g = store.param(f"{path}/g", (dim,), init="ones")
        self.b = store.param(f"{path}/b", (dim,), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.g, self.b)


class GroupNorm:
    def __init__(self, store: ParamStore, path: str, channels: int, groups: int = 8, affine: bool = True):
        self.groups = min(groups, channels)
        while channels % self.groups:
            self.groups -= 1
        self.g = store.param(f"{path}/g", (channels,), init="ones") if affine else None
        self.b = store.param(f"{path}/b", (channels,), init="zeros") if affine else None

    def __call__(self, x: Tensor) -> Tensor:
        return group_norm(x, self.groups, self.g, self.b)


class Mlp:
    """Two-layer MLP; activation is GELU to match the transformer blocks."""

    def __init__(self, store: ParamStore, path: str, din: int, hidden: int, dout: int | None = None):
        dout = din if dout is None else dout
        self.fc1 = Linear(store, f"{path}/fc1", din, hidden)
        self.fc2 = Linear(store, f"{path}/fc2", hidden, dout)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, t, d = x.shape
    dh = d // heads
    x = x.reshape(*lead, t, heads, dh)
    axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
    return x.transpose(axes)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, t, dh = x.shape
    axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
    x = x.transpose(axes)
    return x.reshape(*lead, t, h * dh)


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int, key_mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention over the second-to-last axis.

    q: (..., Tq, D), k/v: (..., Tk, D). key_mask is a boolean (..., Tk) array;
    False entries receive exactly zero attention weight.
    """
    d = q.shape[-1]
    if d % heads:
        raise ContractViolation(f"model dim {d} not divisible by heads {heads}")
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scale = 1.0 / np.sqrt(d // heads)
    logits = (qh @ kh.transpose(tuple(range(kh.ndim - 2)) + (kh.ndim - 1, kh.ndim - 2))) * scale
    if key_mask is not None:
        mask = np.asarray(key_mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise ContractViolation("attention requires at least one active key per query")
        expand = mask.reshape(mask.shape[:-1] + (1, 1, mask.shape[-1]))
        logits = where(np.broadcast_to(expand, logits.shape), logits, -np.inf)
    attn = softmax(logits, axis=-1)
    out = attn @ vh
    return _merge_heads(out)


class MultiHeadAttention:
    """Projected q/k/v attention with output projection and optional key mask."""

    def __init__(self, store: ParamStore, path: str, dim: int, heads: int, kv_dim: int | None = None):
        kv_dim = dim if kv_dim is None else kv_dim
        self.heads = heads
        self.wq = Linear(store, f"{path}/q", dim, dim, bias=False)
        self.wk = Linear(store, f"{path}/k", kv_dim, dim, bias=False)
        self.wv = Linear(store, f"{path}/v", kv_dim, dim, bias=False)
        self.wo = Linear(store, f"{path}/o", dim, dim)

    def __call__(self, x: Tensor, kv: Tensor | None = None, key_mask: np.ndarray | None = None) -> Tensor:
        kv = x if kv is None else kv
        q = self.wq(x)
        k = self.wk(kv)
        v = self.wv(kv)
        if key_mask is not None:
            # Zero masked values after projection so their content cannot reach
            # the output through any path (bitwise invariance).
            keep = np.asarray(key_mask, dtype=bool)[..., None]
            k = where(np.broadcast_to(keep, k.shape), k, 0.0)
            v = where(np.broadcast_to(keep, v.shape), v, 0.0)
        out = attention(q, k, v, self.heads, key_mask=key_mask)
        return self.wo(out)


class TransformerBlock:
    """Pre-norm self-attention block with a GELU MLP."""

    def __init__(self, store: ParamStore, path: str, dim: int, heads: int, mlp_ratio: int = 2):
        self.norm1 = LayerNorm(store, f"{path}/norm1", dim)
        self.attn = MultiHeadAttention(store, f"{path}/attn", dim, heads)
        self.norm2 = LayerNorm(store, f"{path}/norm2", dim)
        self.mlp = Mlp(store, f"{path}/mlp", dim, dim * mlp_ratio)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class GRUCell:
    def __init__(self, store: ParamStore, path: str, dim: int):
        self.wi = Linear(store, f"{path}/wi", dim, 3 * dim)
        self.wh = Linear(store, f"{path}/wh", dim, 3 * dim)
        self.dim = dim

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        gi = self.wi(x)
        gh = self.wh(h)
        d = self.dim
        r = (gi[..., :d] + gh[..., :d]).sigmoid()
        z = (gi[..., d : 2 * d] + gh[..., d : 2 * d]).sigmoid()
        n = (gi[..., 2 * d :] + r * gh[..., 2 * d :]).tanh()
        return (1.0 - z) * n + z * h


def sinusoid_features(x: np.ndarray, octaves: int = 6) -> np.ndarray:
    """Concatenate raw values with sin/cos at frequencies 2^0 .. 2^(octaves-1)."""
    feats = [x]
    for o in range(octaves):
        f = float(2**o)
        feats.append(np.sin(x * f))
        feats.append(np.cos(x * f))
    return np.concatenate(feats, axis=-1)


def timestep_embedding(t: np.ndarray, dim: int, max_period: float = 1e4, dtype=np.float32) -> np.ndarray:
    """Transformer-style embedding of continuous diffusion time t in [0, 1]."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)) * 1000.0
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=-1)
    return emb.astype(dtype)


__all__ = [
    "Linear",
    "Conv2d",
    "LayerNorm",
    "GroupNorm",
    "Mlp",
    "MultiHeadAttention",
    "TransformerBlock",
    "GRUCell",
    "attention",
    "sinusoid_features",
    "timestep_embedding",
    "concat",
    "gelu",
    "silu",
    "softmax",
    "where",
]
