"""Object-level scene edits: slot removal, slot transfer, fixed-noise pairs.

Removal excludes the slot's token from cross-attention and attention pooling
(attention renormalizes over the remaining tokens); the slot's numeric value
is never consumed, so a removed slot's content cannot affect any pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.diffusion.sampler import SamplerConfig, SamplerRng, ddpm_sample
from slotmvd.slotcore.slots import SlotSet


def remove_slot(slot_set: SlotSet, k: int) -> SlotSet:
    """Mark slot k inactive; idempotent."""
    if not 0 <= k < slot_set.k:
        raise ContractViolation(f"slot index {k} out of range (K={slot_set.k})")
    out = slot_set.copy()
    out.active[k] = False
    return out


def transfer_slots(a: SlotSet, b: SlotSet, subset: Sequence[int]) -> SlotSet:
    """A's slots everywhere except `subset`, which come from B (active bits too)."""
    if a.k != b.k or a.dim != b.dim:
        raise ContractViolation("slot sets must share K and slot dimension")
    subset = list(subset)
    for idx in subset:
        if not 0 <= idx < a.k:
            raise ContractViolation(f"transfer index {idx} out of range (K={a.k})")
    out = a.copy()
    for idx in subset:
        out.slots[idx] = b.slots[idx]
        out.active[idx] = b.active[idx]
    return out


def default_transfer_subset(k: int) -> list[int]:
    return list(range((k + 1) // 2))


@dataclass
class EditRequest:
    kind: str  # "remove" or "transfer"
    remove_index: int | None = None
    source: SlotSet | None = None
    subset: list[int] | None = None

    def apply(self, base: SlotSet) -> SlotSet:
        if self.kind == "remove":
            if self.remove_index is None:
                raise ContractViolation("remove edit needs an index")
            return remove_slot(base, self.remove_index)
        if self.kind == "transfer":
            if self.source is None:
                raise ContractViolation("transfer edit needs a source slot set")
            subset = self.subset if self.subset is not None else default_transfer_subset(base.k)
            return transfer_slots(base, self.source, subset)
        raise ContractViolation(f"unknown edit kind '{self.kind}'")

    def describe(self) -> dict:
        if self.kind == "remove":
            return {"kind": "remove", "index": self.remove_index}
        return {"kind": "transfer", "subset": self.subset}


def paired_render(
    denoiser,
    base_slots: SlotSet,
    edits: Sequence[EditRequest],
    poses,
    cfg: SamplerConfig,
    initial_noise: np.ndarray | None = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """One unedited sample plus one per edit, all from identical initial noise
    and identical per-step noise streams. Outputs are in [-1, 1]."""
    shape = (len(poses), denoiser.cfg.resolution, denoiser.cfg.resolution, 3)
    if initial_noise is None:
        initial_noise = SamplerRng(cfg.seed).init_noise(shape)
    elif tuple(initial_noise.shape) != shape:
        raise ContractViolation("fixed initial noise shape must match L x H x W x 3")
    unedited = ddpm_sample(
        denoiser.model_fn(base_slots, poses), shape, cfg, initial_noise=initial_noise
    )
    edited = []
    for req in edits:
        slots = req.apply(base_slots)
        edited.append(
            ddpm_sample(denoiser.model_fn(slots, poses), shape, cfg, initial_noise=initial_noise)
        )
    return unedited, edited
