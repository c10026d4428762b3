"""Oracle slot provider: encodes the ground-truth scene description directly,
isolating the diffusion stack from learned-encoder quality."""

from __future__ import annotations

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.scenegen.scene import SceneSpec
from slotmvd.slotcore.slots import SlotSet

OBJECT_CODE_DIM = 9  # shape one-hot (2) + center (3) + size (1) + albedo (3)
ORACLE_SLOT_DIM = 16  # background fields live at disjoint offsets 9:15


def oracle_slots(spec: SceneSpec, num_slots: int = 7, slot_dim: int = ORACLE_SLOT_DIM) -> SlotSet:
    """Slot k < n encodes object k; one slot encodes (ground albedo, light);
    remaining slots are inactive null vectors."""
    n = spec.n_objects
    if n + 1 > num_slots:
        raise ContractViolation(f"{n} objects + background need {n + 1} slots, have {num_slots}")
    if slot_dim < OBJECT_CODE_DIM + 6:
        raise ContractViolation(f"slot_dim must be >= {OBJECT_CODE_DIM + 6}")
    slots = np.zeros((num_slots, slot_dim), dtype=np.float32)
    active = np.zeros(num_slots, dtype=bool)
    for i, obj in enumerate(spec.objects):
        code = np.zeros(slot_dim, dtype=np.float32)
        code[obj.shape] = 1.0
        code[2:5] = obj.center
        code[5] = obj.size
        code[6:9] = obj.albedo
        slots[i] = code
        active[i] = True
    bg = np.zeros(slot_dim, dtype=np.float32)
    bg[9:12] = spec.ground_albedo
    bg[12:15] = spec.light_dir
    slots[n] = bg
    active[n] = True
    return SlotSet(slots, "oracle", active)
