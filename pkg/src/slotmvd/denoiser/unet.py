"""Multiview denoising U-Net.

Per-view convolutional levels with FiLM in every residual block; at the
attention level (spatial size = resolution / 4) each residual block is
followed by per-view spatial self-attention, cross-view axial attention over
the view axis, and cross-attention from feature-map queries into the
condition tokens. Views are stacked on the batch axis for all convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.denoiser.conditioning import AttentionPool, Conditioner, ConditionTokens
from slotmvd.numerics.layers import Conv2d, GroupNorm, Linear, MultiHeadAttention, timestep_embedding
from slotmvd.numerics.params import ParamStore
from slotmvd.numerics.tensor import Tensor, concat, group_norm, silu, upsample_nearest2x, where


@dataclass
class UNetConfig:
    resolution: int = 16
    channels: tuple = (32, 64, 96)
    blocks_per_level: int = 3
    head_dim: int = 16
    token_dim: int = 64
    emb_dim: int = 64
    groups: int = 8
    num_slots: int = 7
    slot_dim: int = 64
    pose_octaves: int = 6
    frame_position_encoding: bool = False
    max_frames: int = 16

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if any(b >= a for a, b in zip(self.channels[1:], self.channels[:-1])):
            raise ContractViolation("channel list must be strictly increasing")
        if self.attention_level >= len(self.channels):
            raise ContractViolation(
                f"attention level {self.attention_level} needs {self.attention_level + 1} levels, "
                f"got {len(self.channels)}"
            )
        if self.resolution % (2 ** (len(self.channels) - 1)):
            raise ContractViolation("resolution must be divisible by 2^(levels-1)")

    @property
    def attention_level(self) -> int:
        # the level whose spatial size is resolution / 4
        return 2

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "channels": list(self.channels),
            "blocks_per_level": self.blocks_per_level,
            "head_dim": self.head_dim,
            "token_dim": self.token_dim,
            "emb_dim": self.emb_dim,
            "groups": self.groups,
            "num_slots": self.num_slots,
            "slot_dim": self.slot_dim,
            "pose_octaves": self.pose_octaves,
            "frame_position_encoding": self.frame_position_encoding,
            "max_frames": self.max_frames,
        }

    @staticmethod
    def from_dict(d: dict) -> "UNetConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return UNetConfig(**d)


class ResBlock:
    """GN -> SiLU -> conv, FiLM, SiLU -> conv, residual; FiLM from the embedding."""

    def __init__(self, store: ParamStore, path: str, cin: int, cout: int, emb_dim: int, groups: int):
        self.norm1 = GroupNorm(store, f"{path}/norm1", cin, groups)
        self.conv1 = Conv2d(store, f"{path}/conv1", cin, cout)
        self.film = Linear(store, f"{path}/film", emb_dim, 2 * cout)
        self.conv2 = Conv2d(store, f"{path}/conv2", cout, cout)
        self.skip = Conv2d(store, f"{path}/skip", cin, cout, k=1, pad=0) if cin != cout else None
        self.cout = cout
        self.groups = min(groups, cout)
        while cout % self.groups:
            self.groups -= 1

    def __call__(self, x: Tensor, emb: Tensor) -> Tensor:
        h = self.conv1(silu(self.norm1(x)))
        ss = self.film(silu(emb))
        scale = ss[:, : self.cout]
        shift = ss[:, self.cout :]
        h = (1.0 + scale.reshape(-1, self.cout, 1, 1)) * group_norm(h, self.groups) + shift.reshape(
            -1, self.cout, 1, 1
        )
        h = self.conv2(silu(h))
        res = x if self.skip is None else self.skip(x)
        return res + h


class AttentionStack:
    """Spatial self-attention, cross-view axial attention, token cross-attention."""

    def __init__(self, store: ParamStore, path: str, channels: int, cfg: UNetConfig):
        heads = max(1, channels // cfg.head_dim)
        self.norm_s = GroupNorm(store, f"{path}/norm_s", channels, cfg.groups)
        self.attn_s = MultiHeadAttention(store, f"{path}/attn_s", channels, heads)
        self.norm_v = GroupNorm(store, f"{path}/norm_v", channels, cfg.groups)
        self.attn_v = MultiHeadAttention(store, f"{path}/attn_v", channels, heads)
        self.norm_x = GroupNorm(store, f"{path}/norm_x", channels, cfg.groups)
        self.attn_x = MultiHeadAttention(store, f"{path}/attn_x", channels, heads, kv_dim=cfg.token_dim)
        self.frame_pos = (
            store.param(f"{path}/frame_pos", (cfg.max_frames, channels))
            if cfg.frame_position_encoding
            else None
        )

    def __call__(self, x: Tensor, cond: ConditionTokens) -> Tensor:
        n, c, h, w = x.shape

        def to_seq(t: Tensor) -> Tensor:
            return t.reshape(n, c, h * w).transpose(0, 2, 1)  # (L, HW, C)

        def to_map(t: Tensor) -> Tensor:
            return t.transpose(0, 2, 1).reshape(n, c, h, w)

        # per-view spatial self-attention
        x = x + to_map(self.attn_s(to_seq(self.norm_s(x))))
        # cross-view axial attention: attend over the view axis per location
        seq = to_seq(self.norm_v(x))  # (L, HW, C)
        axial = seq.transpose(1, 0, 2)  # (HW, L, C)
        if self.frame_pos is not None:
            axial = axial + self.frame_pos[:n].reshape(1, n, c)
        axial_out = self.attn_v(axial).transpose(1, 0, 2)
        x = x + to_map(axial_out)
        # cross-attention from feature-map queries into condition tokens
        q = to_seq(self.norm_x(x))
        x = x + to_map(self.attn_x(q, kv=cond.tokens, key_mask=cond.active))
        return x


class MultiviewUNet:
    """f(z_t, t, tokens) -> predicted noise for L views in parallel."""

    def __init__(self, store: ParamStore, cfg: UNetConfig, path: str = "unet"):
        self.cfg = cfg
        self.store = store
        chans = cfg.channels
        nlev = len(chans)
        emb = cfg.emb_dim
        self.t_mlp1 = Linear(store, f"{path}/t_mlp1", emb, emb)
        self.t_mlp2 = Linear(store, f"{path}/t_mlp2", emb, emb)
        self.pool = AttentionPool(store, f"{path}/pool", cfg.token_dim)
        self.pool_proj = Linear(store, f"{path}/pool_proj", cfg.token_dim, emb)
        self.conv_in = Conv2d(store, f"{path}/conv_in", 3, chans[0])

        def attn_at(level: int) -> bool:
            return level == cfg.attention_level

        self.down: list[list] = []
        self.down_attn: list[list] = []
        self.downsample: list = []
        cur = chans[0]
        for lv in range(nlev):
            blocks, attns = [], []
            for b in range(cfg.blocks_per_level):
                blocks.append(ResBlock(store, f"{path}/down{lv}/res{b}", cur, chans[lv], emb, cfg.groups))
                cur = chans[lv]
                attns.append(
                    AttentionStack(store, f"{path}/down{lv}/attn{b}", cur, cfg) if attn_at(lv) else None
                )
            self.down.append(blocks)
            self.down_attn.append(attns)
            if lv < nlev - 1:
                self.downsample.append(Conv2d(store, f"{path}/down{lv}/pool", cur, cur, stride=2))
        self.mid = ResBlock(store, f"{path}/mid/res", cur, cur, emb, cfg.groups)
        self.mid_attn = AttentionStack(store, f"{path}/mid/attn", cur, cfg)

        self.up: list[list] = []
        self.up_attn: list[list] = []
        self.upsample: dict[int, Conv2d] = {}
        skip_chans = self._skip_channels()
        for lv in reversed(range(nlev)):
            blocks, attns = [], []
            for b in range(cfg.blocks_per_level + 1):
                cin = cur + skip_chans.pop()
                blocks.append(ResBlock(store, f"{path}/up{lv}/res{b}", cin, chans[lv], emb, cfg.groups))
                cur = chans[lv]
                attns.append(
                    AttentionStack(store, f"{path}/up{lv}/attn{b}", cur, cfg) if attn_at(lv) else None
                )
            self.up.append(blocks)
            self.up_attn.append(attns)
            if lv > 0:
                self.upsample[lv] = Conv2d(store, f"{path}/up{lv}/unpool", cur, cur)
        self.norm_out = GroupNorm(store, f"{path}/norm_out", cur, cfg.groups)
        self.conv_out = Conv2d(store, f"{path}/conv_out", cur, 3, zero_init=True)

    def _skip_channels(self) -> list[int]:
        chans = self.cfg.channels
        skips = [chans[0]]
        for lv in range(len(chans)):
            skips.extend([chans[lv]] * self.cfg.blocks_per_level)
            if lv < len(chans) - 1:
                skips.append(chans[lv])
        return skips

    def _embedding(self, t: float, cond: ConditionTokens) -> Tensor:
        n_views = cond.n_views
        dtype = self.store.dtype
        t_emb = timestep_embedding(np.full(n_views, t), self.cfg.emb_dim, dtype=dtype)
        emb = self.t_mlp2(silu(self.t_mlp1(Tensor(t_emb))))
        pooled = self.pool_proj(self.pool(cond))
        return emb + pooled

    def __call__(self, z: np.ndarray | Tensor, t: float, cond: ConditionTokens) -> Tensor:
        x = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=self.store.dtype))
        if x.ndim != 4 or x.shape[-1] != 3:
            raise ContractViolation(f"expected (L, H, W, 3) views, got {x.shape}")
        if x.shape[0] != cond.n_views:
            raise ContractViolation(
                f"view count mismatch: {x.shape[0]} noisy views, {cond.n_views} token sets"
            )
        if x.shape[1] != self.cfg.resolution or x.shape[2] != self.cfg.resolution:
            raise ContractViolation(
                f"resolution mismatch: model {self.cfg.resolution}, input {x.shape[1]}x{x.shape[2]}"
            )
        if x.dtype != self.store.dtype:
            x = Tensor(x.data.astype(self.store.dtype))
        emb = self._embedding(t, cond)

        h = self.conv_in(x.transpose(0, 3, 1, 2))
        skips = [h]
        for lv, blocks in enumerate(self.down):
            for b, block in enumerate(blocks):
                h = block(h, emb)
                if self.down_attn[lv][b] is not None:
                    h = self.down_attn[lv][b](h, cond)
                skips.append(h)
            if lv < len(self.down) - 1:
                h = self.downsample[lv](h)
                skips.append(h)

        h = self.mid(h, emb)
        h = self.mid_attn(h, cond)

        for ui, lv in enumerate(reversed(range(len(self.down)))):
            for b, block in enumerate(self.up[ui]):
                h = block(concat([h, skips.pop()], axis=1), emb)
                if self.up_attn[ui][b] is not None:
                    h = self.up_attn[ui][b](h, cond)
            if lv > 0:
                h = self.upsample[lv](upsample_nearest2x(h))

        out = self.conv_out(silu(self.norm_out(h)))
        return out.transpose(0, 2, 3, 1)
