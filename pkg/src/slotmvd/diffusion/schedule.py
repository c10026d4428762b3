"""Variance-preserving cosine noise schedule over continuous t in [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from slotmvd.errors import ContractViolation


def _check_t(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ContractViolation("diffusion time t must lie in [0, 1]")
    return t


def schedule_eval(t) -> tuple[np.ndarray, np.ndarray]:
    """alpha(t) = cos(pi t / 2), sigma(t) = sin(pi t / 2)."""
    t = _check_t(t)
    return np.cos(np.pi * t / 2.0), np.sin(np.pi * t / 2.0)


def alpha(t):
    return schedule_eval(t)[0]


def sigma(t):
    return schedule_eval(t)[1]


@dataclass
class DiffusionSchedule:
    """Cosine VP schedule plus the default sampling step count."""

    num_steps: int = 256

    def eval(self, t):
        return schedule_eval(t)


def forward_diffuse(x: np.ndarray, t: float, eps: np.ndarray) -> np.ndarray:
    """z_t = alpha(t) * x + sigma(t) * eps."""
    x = np.asarray(x)
    eps = np.asarray(eps)
    if x.shape != eps.shape:
        raise ContractViolation(f"noise shape {eps.shape} != data shape {x.shape}")
    a, s = schedule_eval(t)
    return a * x + s * eps
