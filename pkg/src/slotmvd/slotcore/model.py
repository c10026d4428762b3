"""Frozen slot provider: CNN + transformer encoder, Slot Attention, and the
shared broadcast decoder used to pretrain it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.numerics.layers import (
    GRUCell,
    LayerNorm,
    Linear,
    Mlp,
    TransformerBlock,
    sinusoid_features,
)
from slotmvd.numerics.params import ParamStore
from slotmvd.numerics.tensor import Tensor, concat, conv2d, gelu, no_grad, softmax
from slotmvd.slotcore.slots import SlotSet


@dataclass
class SlotModelConfig:
    resolution: int = 32
    num_slots: int = 7
    slot_dim: int = 64
    enc_dim: int = 64
    enc_base_channels: int = 16
    enc_layers: int = 2
    enc_heads: int = 4
    slot_iterations: int = 1
    ray_octaves: int = 6
    decoder_hidden: int = 96

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @staticmethod
    def from_dict(d: dict) -> "SlotModelConfig":
        return SlotModelConfig(**d)


def ray_features(ray_o: np.ndarray, ray_d: np.ndarray, octaves: int) -> np.ndarray:
    """Sinusoidal embedding of per-pixel (origin, direction), raw values included."""
    rays = np.concatenate([ray_o, ray_d], axis=-1)
    return sinusoid_features(rays, octaves=octaves)


class ConvEncoder:
    """3 blocks of (stride-1 conv, stride-2 conv, ReLU); channels double per
    strided conv; final 1x1 projection to the token dimension."""

    def __init__(self, store: ParamStore, path: str, cin: int, base: int, out_dim: int):
        c = base
        self.convs = []
        cur = cin
        for blk in range(3):
            w1 = store.param(f"{path}/b{blk}/conv1/w", (c, cur, 3, 3))
            b1 = store.param(f"{path}/b{blk}/conv1/b", (c,), init="zeros")
            w2 = store.param(f"{path}/b{blk}/conv2/w", (2 * c, c, 3, 3))
            b2 = store.param(f"{path}/b{blk}/conv2/b", (2 * c,), init="zeros")
            self.convs.append((w1, b1, w2, b2))
            cur = 2 * c
            c = 2 * c
        self.proj_w = store.param(f"{path}/proj/w", (out_dim, cur, 1, 1))
        self.proj_b = store.param(f"{path}/proj/b", (out_dim,), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for w1, b1, w2, b2 in self.convs:
            h = conv2d(h, w1, b1, stride=1, pad=1).relu()
            h = conv2d(h, w2, b2, stride=2, pad=1).relu()
        return conv2d(h, self.proj_w, self.proj_b, stride=1, pad=0)


class SlotAttention:
    """One-or-more iterations of slot attention over a token set.

    Logits are normalized over the slot axis; per-slot updates are the
    attention-weight-normalized mean of values, followed by a GRU update and a
    residual MLP.
    """

    def __init__(self, store: ParamStore, path: str, input_dim: int, slot_dim: int):
        self.norm_in = LayerNorm(store, f"{path}/norm_in", input_dim)
        self.norm_slot = LayerNorm(store, f"{path}/norm_slot", slot_dim)
        self.norm_mlp = LayerNorm(store, f"{path}/norm_mlp", slot_dim)
        self.wq = Linear(store, f"{path}/q", slot_dim, slot_dim, bias=False)
        self.wk = Linear(store, f"{path}/k", input_dim, slot_dim, bias=False)
        self.wv = Linear(store, f"{path}/v", input_dim, slot_dim, bias=False)
        self.gru = GRUCell(store, f"{path}/gru", slot_dim)
        self.mlp = Mlp(store, f"{path}/mlp", slot_dim, 2 * slot_dim)
        self.slot_dim = slot_dim
        self.mu = store.param(f"{path}/init_mu", (slot_dim,))
        self.log_sigma = store.param(f"{path}/init_log_sigma", (slot_dim,), init="zeros")

    def init_slots(self, k: int, rng: np.random.Generator, dtype) -> Tensor:
        noise = rng.standard_normal((k, self.slot_dim)).astype(dtype)
        return self.mu.reshape(1, -1) + Tensor(noise) * self.log_sigma.exp().reshape(1, -1)

    def __call__(self, slsr: Tensor, init_slots: Tensor, iterations: int = 1):
        if iterations < 1:
            raise ContractViolation("slot attention needs iterations >= 1")
        inputs = self.norm_in(slsr)
        k = self.wk(inputs)  # (T, D)
        v = self.wv(inputs)
        scale = 1.0 / np.sqrt(self.slot_dim)
        slots = init_slots
        attn = None
        for _ in range(iterations):
            q = self.wq(self.norm_slot(slots))  # (K, D)
            logits = (k @ q.transpose(1, 0)) * scale  # (T, K)
            attn = softmax(logits, axis=-1)  # normalized over slots
            weights = attn / (attn.sum(axis=0, keepdims=True) + 1e-8)
            updates = weights.transpose(1, 0) @ v  # (K, D)
            slots = self.gru(updates, slots)
            slots = slots + self.mlp(self.norm_mlp(slots))
        return slots, attn


class BroadcastDecoder:
    """Shared MLP from (slot, ray embedding) to per-slot RGB + alpha logit."""

    def __init__(self, store: ParamStore, path: str, slot_dim: int, ray_dim: int, hidden: int):
        self.fc1 = Linear(store, f"{path}/fc1", slot_dim + ray_dim, hidden)
        self.fc2 = Linear(store, f"{path}/fc2", hidden, hidden)
        self.fc3 = Linear(store, f"{path}/fc3", hidden, 4)

    def __call__(self, slots: Tensor, ray_feats: np.ndarray):
        """slots (K, D), ray_feats (P, F) -> rgb (P, 3), alpha logits (P, K)."""
        k, d = slots.shape
        p = ray_feats.shape[0]
        dtype = slots.dtype
        ones_p = Tensor(np.ones((1, p, 1), dtype=dtype))
        slot_in = slots.reshape(k, 1, d) * ones_p  # (K, P, D)
        rays = Tensor(np.broadcast_to(ray_feats.astype(dtype), (k, p, ray_feats.shape[1])).copy())
        h = concat([slot_in, rays], axis=2).reshape(k * p, -1)
        h = gelu(self.fc1(h))
        h = gelu(self.fc2(h))
        out = self.fc3(h).reshape(k, p, 4)
        rgb_slots = out[:, :, :3].sigmoid()  # (K, P, 3)
        alpha_logits = out[:, :, 3].transpose(1, 0)  # (P, K)
        weights = softmax(alpha_logits, axis=-1)  # (P, K)
        rgb = (weights.transpose(1, 0).reshape(k, p, 1) * rgb_slots).sum(axis=0)
        return rgb, alpha_logits, rgb_slots


class SlotModel:
    def __init__(self, cfg: SlotModelConfig, store: ParamStore | None = None, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.store = store if store is not None else ParamStore(seed=seed, dtype=dtype)
        ray_dim = 6 * (1 + 2 * cfg.ray_octaves)
        self.encoder = ConvEncoder(self.store, "enc/cnn", 3 + ray_dim, cfg.enc_base_channels, cfg.enc_dim)
        self.blocks = [
            TransformerBlock(self.store, f"enc/tf{i}", cfg.enc_dim, cfg.enc_heads)
            for i in range(cfg.enc_layers)
        ]
        self.slot_attention = SlotAttention(self.store, "slots", cfg.enc_dim, cfg.slot_dim)
        self.decoder = BroadcastDecoder(
            self.store, "dec", cfg.slot_dim, ray_dim, cfg.decoder_hidden
        )
        self.ray_dim = ray_dim

    # -- encoder ---------------------------------------------------------------

    def encode(self, rgb: np.ndarray, ray_o: np.ndarray, ray_d: np.ndarray) -> Tensor:
        """Views (V, H, W, 3) + ray images -> SLSR tokens (V * H/8 * W/8, D)."""
        if rgb.shape[:3] != ray_o.shape[:3] or rgb.shape[:3] != ray_d.shape[:3]:
            raise ContractViolation("view/ray shape mismatch")
        feats = ray_features(ray_o, ray_d, self.cfg.ray_octaves)
        x = np.concatenate([rgb, feats], axis=-1).astype(self.store.dtype)
        x = np.transpose(x, (0, 3, 1, 2))  # (V, C, H, W)
        tokens = self.encoder(Tensor(x))  # (V, D, H/8, W/8)
        v, d = tokens.shape[0], tokens.shape[1]
        tokens = tokens.reshape(v, d, -1).transpose(0, 2, 1).reshape(-1, d)
        slsr = tokens.reshape(1, -1, d)  # transformer expects a batch axis
        for blk in self.blocks:
            slsr = blk(slsr)
        return slsr.reshape(-1, d)

    def slots_from_slsr(self, slsr: Tensor, rng: np.random.Generator, iterations: int | None = None):
        init = self.slot_attention.init_slots(self.cfg.num_slots, rng, self.store.dtype)
        iters = self.cfg.slot_iterations if iterations is None else iterations
        return self.slot_attention(slsr, init, iters)

    # -- decoding ----------------------------------------------------------------

    def decode_rays(self, slots: Tensor, ray_o: np.ndarray, ray_d: np.ndarray):
        """Query rays (..., 3): returns rgb (..., 3) and alpha logits (..., K)."""
        shape = ray_o.shape[:-1]
        feats = ray_features(ray_o.reshape(-1, 3), ray_d.reshape(-1, 3), self.cfg.ray_octaves)
        rgb, alpha, _ = self.decoder(slots, feats)
        return rgb.reshape(*shape, 3), alpha.reshape(*shape, self.cfg.num_slots)

    # -- frozen extraction --------------------------------------------------------

    def extract_slots(self, rgb, ray_o, ray_d, scene_id: int, provenance: str, seed: int = 0) -> SlotSet:
        """Deterministic inference-only slot extraction for a frozen model."""
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), int(scene_id))))
        with no_grad():
            slsr = self.encode(rgb, ray_o, ray_d)
            slots, _ = self.slots_from_slsr(slsr, rng)
        return SlotSet(slots.data.copy(), provenance)
