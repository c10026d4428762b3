"""Finite-difference gradient verification (64-bit only)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.numerics.tensor import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    max_rel_err: float
    tolerance: float
    per_input: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def finite_diff_check(
    op,
    inputs: dict[str, Tensor],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    max_entries_per_input: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued `op` against central differences.

    `op` is called as op(inputs) and must return a scalar Tensor built from the
    given leaf tensors. Inputs must be float64; float32 finite differences are
    too noisy to be meaningful.
    """
    for name, t in inputs.items():
        if t.data.dtype != np.float64:
            raise ContractViolation(f"finite_diff_check requires float64 inputs, '{name}' is {t.data.dtype}")
        t.requires_grad = True
        t.grad = None

    loss = op(inputs)
    if loss.data.size != 1:
        raise ContractViolation("op must return a scalar")
    backward(loss)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for name, t in inputs.items()}

    rng = np.random.default_rng(seed)
    per_input: dict[str, float] = {}
    worst = 0.0
    for name, t in inputs.items():
        flat = t.data.reshape(-1)
        n = flat.size
        if max_entries_per_input is not None and n > max_entries_per_input:
            idxs = rng.choice(n, size=max_entries_per_input, replace=False)
        else:
            idxs = np.arange(n)
        ga = analytic[name].reshape(-1)
        err = 0.0
        with no_grad():
            for i in idxs:
                orig = flat[i]
                flat[i] = orig + step
                f_plus = float(op(inputs).data)
                flat[i] = orig - step
                f_minus = float(op(inputs).data)
                flat[i] = orig
                gn = (f_plus - f_minus) / (2.0 * step)
                denom = max(abs(gn), abs(ga[i]), 1.0)
                err = max(err, abs(gn - ga[i]) / denom)
        per_input[name] = err
        worst = max(worst, err)
    return GradCheckReport(max_rel_err=worst, tolerance=tolerance, per_input=per_input)
