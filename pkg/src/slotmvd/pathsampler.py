"""View-consistent rendering of long camera paths via staged denoising.

Denoising runs in S stages of T/S steps. Between stages the frame order is
shuffled (cycling identity -> shift-by-half-context -> random permutation) and
frames are denoised in blocks of the training context length L. Every frame
receives exactly T steps; wrap-around padding frames act as context only and
their updates are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.diffusion.sampler import SamplerConfig, SamplerRng, denoise_range
from slotmvd.evalkit import psnr

SHUFFLE_KINDS = ("identity", "shift", "permute")

# make_block_fn(frame_ids) -> model_fn(z, t, conditional) for that block's poses
BlockFnFactory = Callable[[Sequence[int]], Callable]


def apply_shuffle(kind: str, order: np.ndarray, block: int, rng: np.random.Generator) -> np.ndarray:
    """identity: unchanged; shift: left cyclic rotation by floor(L/2);
    permute: uniformly random permutation."""
    order = np.asarray(order)
    n = order.size
    if sorted(order.tolist()) != list(range(n)):
        raise ContractViolation("order must be a permutation of 0..N-1")
    if kind == "identity":
        return order.copy()
    if kind == "shift":
        return np.roll(order, -(block // 2))
    if kind == "permute":
        return rng.permutation(order)
    raise ContractViolation(f"unknown shuffle kind '{kind}'")


@dataclass
class StagePlan:
    n_frames: int
    block: int
    total_steps: int = 200
    stages: int = 25
    seed: int = 0
    kinds: list = field(default_factory=list)
    stage_orders: list = field(default_factory=list)  # frame order after each shuffle

    @property
    def steps_per_stage(self) -> int:
        return self.total_steps // self.stages

    def composition(self) -> np.ndarray:
        """The composed bijection applied to the initial order by all stages."""
        return self.stage_orders[-1].copy()

    def to_dict(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "block": self.block,
            "total_steps": self.total_steps,
            "stages": self.stages,
            "seed": self.seed,
            "kinds": list(self.kinds),
        }


def make_plan(
    n_frames: int,
    block: int,
    total_steps: int = 200,
    stages: int = 25,
    seed: int = 0,
    kind_cycle: Sequence[str] = SHUFFLE_KINDS,
) -> StagePlan:
    """Deterministic stage plan; shuffle kinds cycle starting with identity."""
    if n_frames < block:
        raise ContractViolation("need at least one full block of frames (N >= L)")
    if block < 1:
        raise ContractViolation("block length must be >= 1")
    if total_steps % stages:
        raise ContractViolation(f"stages ({stages}) must divide total steps ({total_steps})")
    for k in kind_cycle:
        if k not in SHUFFLE_KINDS:
            raise ContractViolation(f"unknown shuffle kind '{k}'")
    kinds = [kind_cycle[s % len(kind_cycle)] for s in range(stages)]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(7,)))
    orders = []
    cur = np.arange(n_frames)
    for s in range(stages):
        cur = apply_shuffle(kinds[s], cur, block, rng)
        orders.append(cur.copy())
    return StagePlan(n_frames, block, total_steps, stages, seed, kinds, orders)


def render_path(
    make_block_fn: BlockFnFactory,
    frame_shape: tuple,
    plan: StagePlan,
    cfg: SamplerConfig,
    context_limit: int | None = None,
) -> tuple[np.ndarray, dict]:
    """Denoise plan.n_frames frames; returns (frames in original pose order, info).

    info carries per-frame step counters, the composed shuffle bijection, and
    the consistency hook: mean pairwise PSNR between final-stage wrap-around
    re-renders and the kept frames (None when N divides into blocks exactly).
    """
    if context_limit is not None and plan.block > context_limit:
        raise ContractViolation(
            f"block length {plan.block} exceeds the denoiser context limit {context_limit}"
        )
    if cfg.num_steps != plan.total_steps:
        raise ContractViolation("sampler config num_steps must equal plan.total_steps")
    n, l = plan.n_frames, plan.block
    srng = SamplerRng(cfg.seed)
    z = srng.init_noise((n, *frame_shape))
    counters = np.zeros(n, dtype=np.int64)
    n_blocks = -(-n // l)
    overlap_pairs = []

    step_hi = plan.total_steps
    for s in range(plan.stages):
        order = plan.stage_orders[s]
        step_lo = step_hi - plan.steps_per_stage + 1
        snapshot = z.copy()
        for b in range(n_blocks):
            positions = np.arange(b * l, b * l + l)
            frames = order[positions % n]
            padded = positions >= n
            block_z = snapshot[frames]
            model_fn = make_block_fn([int(f) for f in frames])
            out = denoise_range(model_fn, block_z, step_hi, step_lo, cfg, srng, block=b)
            for j in range(l):
                f = frames[j]
                if padded[j]:
                    if step_lo == 1:
                        overlap_pairs.append((int(f), out[j].copy()))
                else:
                    z[f] = out[j]
                    counters[f] += plan.steps_per_stage
        step_hi = step_lo - 1

    if not np.all(counters == plan.total_steps):
        raise ContractViolation("internal: per-frame step accounting failed")
    overlap = None
    if overlap_pairs:
        scores = [
            psnr((z[f] + 1.0) / 2.0, np.clip((dup + 1.0) / 2.0, 0.0, 1.0))
            for f, dup in overlap_pairs
        ]
        overlap = float(np.mean(scores))
    info = {
        "step_counters": counters,
        "composition": plan.composition(),
        "overlap_psnr": overlap,
        "n_overlap_pairs": len(overlap_pairs),
    }
    return z, info


def render_camera_path(denoiser, slot_set, poses, plan: StagePlan, cfg: SamplerConfig):
    """Convenience wrapper: condition each block on its frames' poses."""

    def factory(frame_ids):
        return denoiser.model_fn(slot_set, [poses[i] for i in frame_ids])

    limit = denoiser.cfg.max_frames if denoiser.cfg.frame_position_encoding else None
    shape = (denoiser.cfg.resolution, denoiser.cfg.resolution, 3)
    return render_path(factory, shape, plan, cfg, context_limit=limit)
