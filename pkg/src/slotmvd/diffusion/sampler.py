"""DDPM ancestral sampling with classifier-free guidance and x-hat clipping.

Noise draws are keyed by (seed, step index, block index) so that independent
blocks can be sampled concurrently and a staged path sampler running a single
block reproduces ddpm_sample bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from slotmvd.errors import ContractViolation, NumericFailure
from slotmvd.diffusion.schedule import schedule_eval

# model_fn(z, t, conditional) -> predicted noise, same shape as z
ModelFn = Callable[[np.ndarray, float, bool], np.ndarray]


class SamplerRng:
    """Stateless per-step noise streams derived from one root seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def init_noise(self, shape) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(0,)))
        return rng.standard_normal(shape)

    def step_noise(self, step: int, block: int, shape) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(1, int(step), int(block)))
        )
        return rng.standard_normal(shape)


@dataclass
class SamplerConfig:
    num_steps: int = 256
    guidance_weight: float = 2.0
    clip_xhat: bool = True
    variance: str = "posterior"  # or "transition"
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "num_steps": self.num_steps,
            "guidance_weight": self.guidance_weight,
            "clip_xhat": self.clip_xhat,
            "variance": self.variance,
            "seed": self.seed,
        }


def cfg_combine(eps_cond: np.ndarray, eps_uncond: np.ndarray, g: float) -> np.ndarray:
    """eps_uncond + g * (eps_cond - eps_uncond); g=1 and g=0 return the inputs exactly."""
    if eps_cond.shape != eps_uncond.shape:
        raise ContractViolation("cfg_combine shape mismatch")
    if g == 1.0:
        return eps_cond
    if g == 0.0:
        return eps_uncond
    return eps_uncond + g * (eps_cond - eps_uncond)


def _predict(model_fn: ModelFn, z: np.ndarray, t: float, g: float) -> np.ndarray:
    # g == 1 short-circuits to the plain conditional model (no uncond pass),
    # keeping guided-off sampling bit-identical to the conditional sampler.
    if g == 1.0:
        return model_fn(z, t, True)
    eps_c = model_fn(z, t, True)
    eps_u = model_fn(z, t, False)
    return cfg_combine(eps_c, eps_u, g)


def denoise_range(
    model_fn: ModelFn,
    z: np.ndarray,
    step_hi: int,
    step_lo: int,
    cfg: SamplerConfig,
    srng: SamplerRng,
    block: int = 0,
) -> np.ndarray:
    """Run DDPM steps step_hi, step_hi-1, ..., step_lo on z.

    Step i sits at t = i / num_steps; step i > 1 transitions to t = (i-1)/num_steps
    via the ancestral posterior, while the global final step i == 1 emits the
    clean x-hat (sigma(0) = 0 is never divided by).
    """
    if step_hi < step_lo or step_lo < 1 or step_hi > cfg.num_steps:
        raise ContractViolation(f"bad step range [{step_hi}, {step_lo}]")
    n = cfg.num_steps
    for i in range(step_hi, step_lo - 1, -1):
        t_hi = i / n
        a_hi, s_hi = schedule_eval(t_hi)
        eps = _predict(model_fn, z, t_hi, cfg.guidance_weight)
        if not np.all(np.isfinite(eps)):
            raise NumericFailure(f"non-finite noise prediction at step {i}")
        xhat = (z - s_hi * eps) / a_hi
        if cfg.clip_xhat:
            xhat = np.clip(xhat, -1.0, 1.0)
        if i == 1:
            z = xhat
            break
        t_lo = (i - 1) / n
        a_lo, s_lo = schedule_eval(t_lo)
        a_ts = a_hi / a_lo
        var_ts = s_hi * s_hi - a_ts * a_ts * s_lo * s_lo
        mu = (a_ts * s_lo * s_lo / (s_hi * s_hi)) * z + (a_lo * var_ts / (s_hi * s_hi)) * xhat
        if cfg.variance == "posterior":
            var = var_ts * (s_lo * s_lo) / (s_hi * s_hi)
        elif cfg.variance == "transition":
            var = var_ts
        else:
            raise ContractViolation(f"unknown variance mode '{cfg.variance}'")
        noise = srng.step_noise(i, block, z.shape)
        z = mu + np.sqrt(max(var, 0.0)) * noise
        if not np.all(np.isfinite(z)):
            raise NumericFailure(f"non-finite state after step {i}")
    return z


def ddpm_sample(
    model_fn: ModelFn,
    shape: tuple,
    cfg: SamplerConfig,
    initial_noise: np.ndarray | None = None,
) -> np.ndarray:
    """Sample a block of views from pure noise; returns arrays in [-1, 1]."""
    if cfg.num_steps < 1:
        raise ContractViolation("num_steps must be >= 1")
    srng = SamplerRng(cfg.seed)
    if initial_noise is not None:
        if tuple(initial_noise.shape) != tuple(shape):
            raise ContractViolation("initial noise shape mismatch")
        z = initial_noise.astype(np.float64, copy=True)
    else:
        z = srng.init_noise(shape)
    return denoise_range(model_fn, z, cfg.num_steps, 1, cfg, srng, block=0)
