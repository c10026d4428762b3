"""Named parameter store with gradient buffers, Adam state, and an EMA shadow."""

from __future__ import annotations

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.numerics.tensor import Tensor


class ParamStore:
    """Flat map from parameter path to leaf Tensor.

    The EMA shadow mirrors every parameter (initialized to the parameter value
    at creation). Adam moment buffers are created lazily on first step.
    """

    def __init__(self, seed: int = 0, dtype=np.float32, ema_decay: float = 0.999):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self.ema_decay = float(ema_decay)
        self.params: dict[str, Tensor] = {}
        self.ema: dict[str, np.ndarray] = {}
        self._adam_m: dict[str, np.ndarray] = {}
        self._adam_v: dict[str, np.ndarray] = {}
        self._adam_t = 0

    # -- creation / access ---------------------------------------------------

    def param(self, path: str, shape, init: str = "normal", scale: float | None = None) -> Tensor:
        if path in self.params:
            return self.params[path]
        shape = tuple(shape)
        if init == "zeros":
            data = np.zeros(shape, dtype=self.dtype)
        elif init == "ones":
            data = np.ones(shape, dtype=self.dtype)
        elif init == "normal":
            if scale is None:
                fan_in = shape[-1] if len(shape) == 1 else int(np.prod(shape[1:]))
                scale = 1.0 / np.sqrt(max(fan_in, 1))
            data = (self.rng.standard_normal(shape) * scale).astype(self.dtype)
        else:
            raise ContractViolation(f"unknown init '{init}'")
        t = Tensor(data, requires_grad=True, op=path)
        self.params[path] = t
        self.ema[path] = data.copy()
        return t

    def __getitem__(self, path: str) -> Tensor:
        return self.params[path]

    def __contains__(self, path: str) -> bool:
        return path in self.params

    def paths(self) -> list[str]:
        return sorted(self.params)

    def num_scalars(self) -> int:
        return sum(p.data.size for p in self.params.values())

    # -- gradients -----------------------------------------------------------

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Gradient map after backward(); parameters the loss never touched get zeros."""
        out = {}
        for path, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ContractViolation(f"gradient shape mismatch at {path}")
            out[path] = g
        return out

    def grad_norm(self) -> float:
        total = 0.0
        for p in self.params.values():
            if p.grad is not None:
                total += float(np.sum(p.grad.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    # -- Adam ----------------------------------------------------------------

    def adam_step(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        update_ema: bool = True,
    ) -> None:
        self._adam_t += 1
        t = self._adam_t
        b1c = 1.0 - beta1**t
        b2c = 1.0 - beta2**t
        for path in sorted(self.params):
            p = self.params[path]
            g = p.grad
            if g is None:
                continue
            m = self._adam_m.get(path)
            if m is None:
                m = np.zeros_like(p.data)
                self._adam_m[path] = m
                self._adam_v[path] = np.zeros_like(p.data)
            v = self._adam_v[path]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            mhat = m / b1c
            vhat = v / b2c
            p.data = p.data - lr * mhat / (np.sqrt(vhat) + eps)
        if update_ema:
            self.ema_update()

    def ema_update(self, decay: float | None = None) -> None:
        d = self.ema_decay if decay is None else decay
        for path, p in self.params.items():
            shadow = self.ema[path]
            shadow *= d
            shadow += (1.0 - d) * p.data

    def ema_arrays(self) -> dict[str, np.ndarray]:
        return {path: arr.copy() for path, arr in self.ema.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray], ema: dict[str, np.ndarray] | None = None) -> None:
        for path, arr in arrays.items():
            if path in self.params:
                if self.params[path].data.shape != arr.shape:
                    raise ContractViolation(f"shape mismatch loading {path}")
                self.params[path].data = arr.astype(self.dtype)
            else:
                self.params[path] = Tensor(arr.astype(self.dtype), requires_grad=True, op=path)
            self.ema[path] = self.params[path].data.copy()
        if ema is not None:
            for path, arr in ema.items():
                self.ema[path] = arr.astype(self.dtype).copy()

    def use_ema_weights(self) -> "ParamStore":
        """Copy of the store with EMA weights substituted for the parameters."""
        clone = ParamStore(seed=0, dtype=self.dtype, ema_decay=self.ema_decay)
        for path, arr in self.ema.items():
            clone.params[path] = Tensor(arr.copy(), requires_grad=True, op=path)
            clone.ema[path] = arr.copy()
        return clone

    # -- Adam state serialization ---------------------------------------------

    def opt_state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"opt/t": np.array([self._adam_t], dtype=np.int64)}
        for path, m in self._adam_m.items():
            out[f"opt/m/{path}"] = m.copy()
            out[f"opt/v/{path}"] = self._adam_v[path].copy()
        return out

    def load_opt_state(self, arrays: dict[str, np.ndarray]) -> None:
        if "opt/t" in arrays:
            self._adam_t = int(arrays["opt/t"][0])
        for key, arr in arrays.items():
            if key.startswith("opt/m/"):
                self._adam_m[key[len("opt/m/") :]] = arr.astype(self.dtype).copy()
            elif key.startswith("opt/v/"):
                self._adam_v[key[len("opt/v/") :]] = arr.astype(self.dtype).copy()
