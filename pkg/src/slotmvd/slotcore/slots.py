"""SlotSet: the K per-scene object vectors consumed as conditioning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from slotmvd.errors import ContractViolation

PROVENANCES = ("learned-unsup", "learned-sup", "oracle")


@dataclass
class SlotSet:
    slots: np.ndarray  # (K, D)
    provenance: str
    active: np.ndarray = field(default=None)  # (K,) bool; inactive slots are masked out

    def __post_init__(self):
        self.slots = np.asarray(self.slots)
        if self.slots.ndim != 2:
            raise ContractViolation("slots must be a (K, D) array")
        if not np.all(np.isfinite(self.slots)):
            raise ContractViolation("slots must be finite")
        if self.provenance not in PROVENANCES:
            raise ContractViolation(f"unknown provenance '{self.provenance}'")
        if self.active is None:
            self.active = np.ones(self.slots.shape[0], dtype=bool)
        else:
            self.active = np.asarray(self.active, dtype=bool)
            if self.active.shape != (self.slots.shape[0],):
                raise ContractViolation("active mask length must equal K")

    @property
    def k(self) -> int:
        return self.slots.shape[0]

    @property
    def dim(self) -> int:
        return self.slots.shape[1]

    def copy(self) -> "SlotSet":
        return SlotSet(self.slots.copy(), self.provenance, self.active.copy())
