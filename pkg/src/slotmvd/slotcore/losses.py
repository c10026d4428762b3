"""Supervised matching loss: Hungarian-matched cross-entropy on alpha logits."""

from __future__ import annotations

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.numerics.assignment import PAD_COST, linear_assignment
from slotmvd.numerics.tensor import Tensor, log_softmax, softmax


def match_slots_to_instances(soft_masks: np.ndarray, onehot: np.ndarray) -> np.ndarray:
    """L2-minimizing assignment instance -> slot; soft (P, K), onehot (P, M), M <= K."""
    p, k = soft_masks.shape
    m = onehot.shape[1]
    if m > k:
        raise ContractViolation(f"more ground-truth instances ({m}) than slots ({k})")
    diff = soft_masks[:, None, :] - onehot[:, :, None]  # (P, M, K)
    cost = np.einsum("pmk,pmk->mk", diff, diff)
    if m < k:
        cost = np.concatenate([cost, np.full((k - m, k), PAD_COST)], axis=0)
    perm, _ = linear_assignment(cost)
    return perm[:m]  # slot index for each instance


def sup_loss(alpha_logits: Tensor, labels: np.ndarray, num_classes: int | None = None) -> Tensor:
    """Cross-entropy between matched slot logits and instance labels.

    alpha_logits: (P, K); labels: (P,) integer ids with 0 = background. The
    matching is computed on current soft masks and treated as a constant;
    unmatched slots are unconstrained.
    """
    labels = np.asarray(labels)
    p, k = alpha_logits.shape
    if labels.shape != (p,):
        raise ContractViolation("labels must be one id per pixel")
    m = int(labels.max()) + 1 if num_classes is None else num_classes
    onehot = np.zeros((p, m), dtype=alpha_logits.dtype)
    onehot[np.arange(p), labels] = 1.0
    soft = softmax(alpha_logits, axis=-1).data
    assign = match_slots_to_instances(soft, onehot)
    target = np.zeros((p, k), dtype=alpha_logits.dtype)
    target[np.arange(p), assign[labels]] = 1.0
    return -(log_softmax(alpha_logits, axis=-1) * target).sum() * (1.0 / p)
