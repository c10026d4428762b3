"""Noise-prediction training objective with conditioning and slot dropout."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.diffusion.schedule import schedule_eval
from slotmvd.numerics.tensor import Tensor
from slotmvd.scenegen.camera import CameraPose
from slotmvd.slotcore.slots import SlotSet


@dataclass
class GuidanceConfig:
    guidance_weight: float = 2.0
    cond_dropout: float = 0.1
    slot_dropout: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.cond_dropout <= 1.0 or not 0.0 <= self.slot_dropout <= 1.0:
            raise ContractViolation("dropout probabilities must lie in [0, 1]")
        if self.guidance_weight < 0.0:
            raise ContractViolation("guidance weight must be >= 0")


@dataclass
class TrainItem:
    views: np.ndarray  # (L, H, W, 3) in [-1, 1]
    slots: SlotSet
    poses: Sequence[CameraPose]


# apply_fn(z_t, t, slots, poses, slot_active, use_null) -> Tensor, shape of z_t
ApplyFn = Callable[[np.ndarray, float, SlotSet, Sequence[CameraPose], np.ndarray, bool], Tensor]


def draw_dropout(gcfg: GuidanceConfig, slots: SlotSet, rng: np.random.Generator):
    """Sample (use_null, slot_active) for one batch item.

    Slot dropout removes tokens from attention entirely (it does not zero
    values); draws happen regardless of use_null so the rng stream is stable.
    """
    use_null = bool(rng.uniform() < gcfg.cond_dropout)
    active = slots.active.copy()
    drops = rng.uniform(size=slots.k) < gcfg.slot_dropout
    active &= ~drops
    return use_null, active


def training_loss(
    batch: Sequence[TrainItem],
    apply_fn: ApplyFn,
    gcfg: GuidanceConfig,
    rng: np.random.Generator,
) -> Tensor:
    """Mean squared noise-prediction error, w(t) = 1, t ~ U(0,1) per scene."""
    if not batch:
        raise ContractViolation("empty batch")
    total = None
    n_elems = 0
    for item in batch:
        x = np.asarray(item.views)
        t = float(rng.uniform())
        eps = rng.standard_normal(x.shape)
        a, s = schedule_eval(t)
        z = a * x + s * eps
        use_null, active = draw_dropout(gcfg, item.slots, rng)
        pred = apply_fn(z, t, item.slots, item.poses, active, use_null)
        diff = pred - eps.astype(pred.dtype)
        sq = (diff * diff).sum()
        total = sq if total is None else total + sq
        n_elems += eps.size
    return total * (1.0 / n_elems)
