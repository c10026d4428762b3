"""Diffusion training orchestration: schedules, logging, checkpointing, resume.

Every stochastic draw is keyed by (seed, step), so a run resumed from a
checkpoint at step k reproduces the original trajectory bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from slotmvd.errors import ContractViolation, NumericFailure
from slotmvd.denoiser import Denoiser, UNetConfig
from slotmvd.diffusion import GuidanceConfig, TrainItem, training_loss
from slotmvd.diffusion.sampler import SamplerConfig, ddpm_sample
from slotmvd.numerics.tensor import backward
from slotmvd.scenegen.dataset import SceneRecord
from slotmvd.slotcore.slots import SlotSet


@dataclass
class TrainConfig:
    lr_peak: float = 3e-5
    warmup_steps: int = 5000
    batch_size: int = 8
    total_steps: int = 5000
    ema_decay: float = 0.999
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    seed: int = 0
    views_per_item: int = 4
    checkpoint_every: int = 1000
    log_every: int = 50

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractViolation("batch size must be >= 1")
        if self.warmup_steps > self.total_steps:
            raise ContractViolation("warmup must not exceed total steps")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Linear ramp 0 -> peak over warmup, constant afterwards."""
    if step < 0:
        raise ContractViolation("step must be >= 0")
    if cfg.warmup_steps == 0 or step >= cfg.warmup_steps:
        return cfg.lr_peak
    return cfg.lr_peak * step / cfg.warmup_steps


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(3, int(step))))


def make_batch(
    records: Sequence[SceneRecord],
    slot_sets: dict[int, SlotSet],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> list[TrainItem]:
    items = []
    for _ in range(cfg.batch_size):
        rec = records[int(rng.integers(0, len(records)))]
        tv = rec.target_views
        l = min(cfg.views_per_item, tv.n)
        picks = rng.choice(tv.n, size=l, replace=False)
        views = tv.rgb[picks].astype(np.float64) * 2.0 - 1.0
        poses = [tv.poses[int(i)] for i in picks]
        slots = slot_sets[rec.spec.scene_id]
        items.append(TrainItem(views, slots, poses))
    return items


def train_dorsal(
    records: Sequence[SceneRecord],
    slot_sets: dict[int, SlotSet],
    model: Denoiser,
    cfg: TrainConfig,
    run_dir: str | Path,
    start_step: int = 0,
) -> dict:
    """Optimize the noise-prediction loss with Adam + EMA; returns history.

    The slot provider is frozen: slots enter the graph as constants, so no
    gradient can reach them by construction.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps({"train": cfg.to_dict(), "unet": model.cfg.to_dict()}, indent=2, sort_keys=True)
    )
    model.store.ema_decay = cfg.ema_decay
    log_path = run_dir / "metrics.jsonl"
    history = {"step": [], "loss": []}
    apply_fn = _make_apply_fn(model)
    t_start = time.time()
    with log_path.open("a") as log:
        for step in range(start_step, cfg.total_steps):
            rng = _step_rng(cfg.seed, step)
            batch = make_batch(records, slot_sets, cfg, rng)
            loss = training_loss(batch, apply_fn, cfg.guidance, rng)
            val = float(loss.data)
            if not np.isfinite(val):
                raise NumericFailure(
                    f"training loss is not finite at step {step}; "
                    f"last checkpoint retained in {run_dir}"
                )
            model.store.zero_grads()
            backward(loss)
            gnorm = model.store.grad_norm()
            lr = lr_schedule(step, cfg)
            model.store.adam_step(lr)
            if step % cfg.log_every == 0 or step == cfg.total_steps - 1:
                rec = {"step": step, "loss": val, "lr": lr, "grad_norm": gnorm,
                       "elapsed_s": round(time.time() - t_start, 2)}
                log.write(json.dumps(rec) + "\n")
                log.flush()
                history["step"].append(step)
                history["loss"].append(val)
            if (step + 1) % cfg.checkpoint_every == 0 or step == cfg.total_steps - 1:
                model.save(run_dir / "ckpt_latest.bin", extra={"step": step + 1})
    model.save(run_dir / "ckpt_final.bin", extra={"step": cfg.total_steps})
    return history


def _make_apply_fn(model: Denoiser):
    def apply_fn(z, t, slots, poses, slot_active, use_null):
        return model.predict(z, t, slots, poses, edit_mask=slot_active, use_null=use_null)

    return apply_fn


def train_one_step_loss(
    records: Sequence[SceneRecord],
    slot_sets: dict[int, SlotSet],
    model: Denoiser,
    cfg: TrainConfig,
    step: int,
) -> float:
    """Loss value the trainer would compute at `step` (no parameter update)."""
    rng = _step_rng(cfg.seed, step)
    batch = make_batch(records, slot_sets, cfg, rng)
    loss = training_loss(batch, _make_apply_fn(model), cfg.guidance, rng)
    return float(loss.data)


def resume_dorsal(
    records: Sequence[SceneRecord],
    slot_sets: dict[int, SlotSet],
    checkpoint: str | Path,
    cfg: TrainConfig,
    run_dir: str | Path,
) -> tuple[Denoiser, dict]:
    model, meta = Denoiser.load(checkpoint)
    start = int(meta.get("step", 0))
    history = train_dorsal(records, slot_sets, model, cfg, run_dir, start_step=start)
    return model, history


def sample_views(
    model: Denoiser,
    slot_set: SlotSet,
    poses,
    cfg: SamplerConfig,
    use_null: bool = False,
) -> np.ndarray:
    """Sample L views and map them back to [0, 1]."""
    shape = (len(poses), model.cfg.resolution, model.cfg.resolution, 3)
    if use_null:
        def fn(z, t, conditional):
            return model.model_fn(slot_set, poses)(z, t, False)
    else:
        fn = model.model_fn(slot_set, poses)
    out = ddpm_sample(fn, shape, cfg)
    return np.clip((out + 1.0) / 2.0, 0.0, 1.0)
