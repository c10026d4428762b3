"""Slot-model pretraining on novel-view L2 (optionally + mask supervision),
frozen-slot extraction, and the slot cache file format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from slotmvd.errors import ContractViolation, NumericFailure
from slotmvd.numerics.checkpoint import decode_json, encode_json, read_container, write_container
from slotmvd.numerics.params import ParamStore
from slotmvd.numerics.tensor import Tensor, backward, no_grad
from slotmvd.scenegen.dataset import SceneRecord
from slotmvd.slotcore.losses import sup_loss
from slotmvd.slotcore.model import SlotModel, SlotModelConfig
from slotmvd.slotcore.slots import SlotSet


@dataclass
class SlotTrainConfig:
    steps: int = 2500
    batch_scenes: int = 2
    rays_per_scene: int = 384
    lr: float = 4e-4
    supervised: bool = True
    lambda_mask: float = 1.0
    keep_photometric: bool = True
    seed: int = 0
    patience: int = 1200
    min_rel_improvement: float = 0.002
    log_every: int = 100


def _scene_loss(model: SlotModel, record: SceneRecord, rng: np.random.Generator, tcfg: SlotTrainConfig):
    iv = record.input_views
    slsr = model.encode(iv.rgb, iv.ray_o, iv.ray_d)
    slots, _ = model.slots_from_slsr(slsr, rng)
    tv = record.target_views
    total_px = tv.rgb[..., 0].size
    idx = rng.choice(total_px, size=min(tcfg.rays_per_scene, total_px), replace=False)
    ray_o = tv.ray_o.reshape(-1, 3)[idx]
    ray_d = tv.ray_d.reshape(-1, 3)[idx]
    gt_rgb = tv.rgb.reshape(-1, 3)[idx].astype(model.store.dtype)
    labels = tv.ids.reshape(-1)[idx]
    rgb, alpha = model.decode_rays(slots, ray_o, ray_d)
    loss = None
    if tcfg.keep_photometric or not tcfg.supervised:
        diff = rgb - gt_rgb
        loss = (diff * diff).mean()
    if tcfg.supervised:
        mloss = sup_loss(alpha, labels, num_classes=int(tv.ids.max()) + 1) * tcfg.lambda_mask
        loss = mloss if loss is None else loss + mloss
    return loss


def pretrain_slot_model(
    records: Sequence[SceneRecord],
    cfg: SlotModelConfig,
    tcfg: SlotTrainConfig,
) -> tuple[SlotModel, dict]:
    """Train and return a slot model; raises NumericFailure if the loss stops
    improving and sits above its best over the patience window."""
    if not records:
        raise ContractViolation("empty training set")
    max_instances = max(int(r.target_views.ids.max()) + 1 for r in records)
    if tcfg.supervised and max_instances > cfg.num_slots:
        raise ContractViolation(
            f"dataset has up to {max_instances} instances (incl. background), "
            f"but only {cfg.num_slots} slots"
        )
    model = SlotModel(cfg, seed=tcfg.seed)
    history: dict = {"loss": [], "step": []}
    ema_loss = None
    best = np.inf
    best_step = 0
    for step in range(tcfg.steps):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(tcfg.seed, step)))
        picks = rng.choice(len(records), size=min(tcfg.batch_scenes, len(records)), replace=False)
        loss = None
        for si in picks:
            sl = _scene_loss(model, records[si], rng, tcfg)
            loss = sl if loss is None else loss + sl
        loss = loss * (1.0 / len(picks))
        if not np.isfinite(loss.data):
            raise NumericFailure(f"slot training loss became non-finite at step {step}")
        model.store.zero_grads()
        backward(loss)
        model.store.adam_step(tcfg.lr)
        val = float(loss.data)
        ema_loss = val if ema_loss is None else 0.98 * ema_loss + 0.02 * val
        if ema_loss < best * (1.0 - tcfg.min_rel_improvement):
            best = ema_loss
            best_step = step
        elif step - best_step > tcfg.patience and ema_loss > best:
            raise NumericFailure(
                f"slot training plateaued: no improvement since step {best_step} "
                f"(ema {ema_loss:.5f} vs best {best:.5f})"
            )
        if step % tcfg.log_every == 0 or step == tcfg.steps - 1:
            history["loss"].append(ema_loss)
            history["step"].append(step)
    return model, history


# ---------------------------------------------------------------------------
# frozen-model evaluation helpers
# ---------------------------------------------------------------------------


def render_with_slots(model: SlotModel, slot_set: SlotSet, view_set) -> tuple[np.ndarray, np.ndarray]:
    """Decode full images for every view: (V, H, W, 3) rgb and (V, H, W) argmax seg."""
    with no_grad():
        rgb, alpha = model.decode_rays(Tensor(slot_set.slots.astype(model.store.dtype)), view_set.ray_o, view_set.ray_d)
    return rgb.data, np.argmax(alpha.data, axis=-1)


def extract_scene_slots(model: SlotModel, record: SceneRecord, provenance: str, seed: int = 0) -> SlotSet:
    iv = record.input_views
    return model.extract_slots(iv.rgb, iv.ray_o, iv.ray_d, record.spec.scene_id, provenance, seed=seed)


def mean_image_baseline(train_records: Sequence[SceneRecord]) -> np.ndarray:
    """Per-pixel mean over every training target view (the blurriest baseline)."""
    acc = None
    count = 0
    for r in train_records:
        s = r.target_views.rgb.astype(np.float64).sum(axis=0)
        acc = s if acc is None else acc + s
        count += r.target_views.n
    return acc / count


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_slot_model(model: SlotModel, path: str | Path, extra: dict | None = None) -> None:
    arrays = {f"param/{p}": t.data for p, t in model.store.params.items()}
    arrays.update({f"ema/{p}": a for p, a in model.store.ema.items()})
    meta = {"config": model.cfg.to_dict()}
    if extra:
        meta.update(extra)
    arrays["meta/json"] = encode_json(meta)
    write_container(path, arrays)


def load_slot_model(path: str | Path, dtype=np.float32) -> tuple[SlotModel, dict]:
    blob = read_container(path)
    meta = decode_json(blob["meta/json"])
    cfg = SlotModelConfig.from_dict(meta["config"])
    model = SlotModel(cfg, store=ParamStore(seed=0, dtype=dtype))
    params = {k[len("param/") :]: v for k, v in blob.items() if k.startswith("param/")}
    ema = {k[len("ema/") :]: v for k, v in blob.items() if k.startswith("ema/")}
    model.store.load_arrays(params, ema=ema)
    return model, meta


def save_slot_cache(path: str | Path, slot_sets: dict[int, SlotSet]) -> None:
    arrays: dict[str, np.ndarray] = {}
    prov = {}
    for sid, ss in slot_sets.items():
        arrays[f"slots/{sid}"] = ss.slots.astype(np.float32)
        arrays[f"slots/{sid}/active"] = ss.active.astype(np.uint8)
        prov[str(sid)] = ss.provenance
    arrays["meta/json"] = encode_json({"provenance": prov})
    write_container(path, arrays)


def load_slot_cache(path: str | Path) -> dict[int, SlotSet]:
    blob = read_container(path)
    prov = decode_json(blob["meta/json"])["provenance"]
    out: dict[int, SlotSet] = {}
    for key, arr in blob.items():
        if key.startswith("slots/") and not key.endswith("/active"):
            sid = int(key.split("/")[1])
            active = blob[f"slots/{sid}/active"].astype(bool)
            out[sid] = SlotSet(arr, prov[str(sid)], active)
    return out
