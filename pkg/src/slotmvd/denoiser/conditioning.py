"""Slot/pose token construction, attention pooling, and FiLM modulation.

Each view i is conditioned on K+1 tokens: the K projected slots (shared across
views) plus one projected pose token. Inactive tokens (removed/dropped slots)
are excluded from cross-attention and pooling entirely: their logits are
overwritten and their projected values zeroed, so the numeric content of a
masked slot cannot change any output bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.numerics.layers import Linear, sinusoid_features
from slotmvd.numerics.params import ParamStore
from slotmvd.numerics.tensor import Tensor, concat, group_norm, softmax, where
from slotmvd.scenegen.camera import CameraPose
from slotmvd.slotcore.slots import SlotSet

POSE_RAW_DIM = 10  # origin (3) + forward (3) + up (3) + fov (1)


def pose_summary(pose: CameraPose) -> np.ndarray:
    return np.concatenate([pose.origin, pose.forward, pose.up, [pose.fov]])


@dataclass
class ConditionTokens:
    tokens: Tensor  # (L, K+1, D)
    active: np.ndarray  # (L, K+1) bool
    is_null: bool

    @property
    def n_views(self) -> int:
        return self.tokens.shape[0]


class Conditioner:
    """Learnable projections f (slots), g (pose) and the null token set."""

    def __init__(
        self,
        store: ParamStore,
        path: str,
        slot_dim: int,
        token_dim: int,
        num_slots: int,
        pose_octaves: int = 6,
    ):
        self.num_slots = num_slots
        self.pose_octaves = pose_octaves
        pose_feat_dim = POSE_RAW_DIM * (1 + 2 * pose_octaves)
        self.slot_proj = Linear(store, f"{path}/slot_proj", slot_dim, token_dim)
        self.pose_proj = Linear(store, f"{path}/pose_proj", pose_feat_dim, token_dim)
        self.null_tokens = store.param(f"{path}/null_tokens", (num_slots + 1, token_dim))

    def build_condition_tokens(
        self,
        slot_set: SlotSet,
        poses: Sequence[CameraPose],
        edit_mask: np.ndarray | None = None,
        use_null: bool = False,
    ) -> ConditionTokens:
        """Tokens for L views; edit_mask (K,) marks slots to keep active."""
        n_views = len(poses)
        k = self.num_slots
        if slot_set.k != k:
            raise ContractViolation(f"slot set has K={slot_set.k}, conditioner expects {k}")
        if use_null:
            tokens = self.null_tokens.reshape(1, k + 1, -1)
            lead = Tensor(np.ones((n_views, 1, 1), dtype=tokens.dtype))
            tokens = lead * tokens  # broadcast across views
            active = np.ones((n_views, k + 1), dtype=bool)
            return ConditionTokens(tokens, active, True)

        slot_active = slot_set.active.copy()
        if edit_mask is not None:
            edit_mask = np.asarray(edit_mask, dtype=bool)
            if edit_mask.shape != (k,):
                raise ContractViolation(f"edit mask length {edit_mask.shape} != K={k}")
            slot_active &= edit_mask

        dtype = self.null_tokens.dtype
        slot_tokens = self.slot_proj(Tensor(slot_set.slots.astype(dtype)))  # (K, D)
        pose_feats = np.stack(
            [sinusoid_features(pose_summary(p), self.pose_octaves) for p in poses]
        ).astype(dtype)
        pose_tokens = self.pose_proj(Tensor(pose_feats))  # (L, D)
        slot_part = slot_tokens.reshape(1, k, -1) * Tensor(np.ones((n_views, 1, 1), dtype=dtype))
        tokens = concat([slot_part, pose_tokens.reshape(n_views, 1, -1)], axis=1)
        active = np.concatenate(
            [np.broadcast_to(slot_active, (n_views, k)), np.ones((n_views, 1), dtype=bool)], axis=1
        )
        if not active.any(axis=1).all():
            raise ContractViolation("every view needs at least one active condition token")
        tokens = where(np.broadcast_to(active[:, :, None], tokens.shape), tokens, 0.0)
        return ConditionTokens(tokens, active, False)


class AttentionPool:
    """Learned-query attention over active tokens -> one embedding per view."""

    def __init__(self, store: ParamStore, path: str, token_dim: int):
        self.query = store.param(f"{path}/query", (token_dim,))
        self.wk = Linear(store, f"{path}/k", token_dim, token_dim, bias=False)
        self.wv = Linear(store, f"{path}/v", token_dim, token_dim, bias=False)
        self.dim = token_dim

    def __call__(self, cond: ConditionTokens) -> Tensor:
        keys = self.wk(cond.tokens)  # (L, K+1, D)
        values = self.wv(cond.tokens)
        keep = cond.active[:, :, None]
        keys = where(np.broadcast_to(keep, keys.shape), keys, 0.0)
        values = where(np.broadcast_to(keep, values.shape), values, 0.0)
        logits = (keys @ self.query.reshape(-1, 1)).reshape(cond.active.shape) * (
            1.0 / np.sqrt(self.dim)
        )
        logits = where(cond.active, logits, -np.inf)
        weights = softmax(logits, axis=-1)  # (L, K+1)
        return (weights.reshape(*cond.active.shape, 1) * values).sum(axis=1)


def film_modulate(x: Tensor, scale: Tensor, shift: Tensor, groups: int = 8) -> Tensor:
    """(1 + scale) * groupnorm(x) + shift, per channel; x is (N, C, H, W)."""
    c = x.shape[1]
    g = min(groups, c)
    while c % g:
        g -= 1
    normed = group_norm(x, g, None, None)
    return (1.0 + scale.reshape(-1, c, 1, 1)) * normed + shift.reshape(-1, c, 1, 1)
