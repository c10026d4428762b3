"""Multiview U-Net denoiser with slot/pose conditioning."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from slotmvd.denoiser.conditioning import (
    AttentionPool,
    ConditionTokens,
    Conditioner,
    film_modulate,
    pose_summary,
)
from slotmvd.denoiser.unet import MultiviewUNet, ResBlock, UNetConfig
from slotmvd.numerics.checkpoint import decode_json, encode_json, read_container, write_container
from slotmvd.numerics.params import ParamStore
from slotmvd.numerics.tensor import Tensor, no_grad
from slotmvd.scenegen.camera import CameraPose
from slotmvd.slotcore.slots import SlotSet


class Denoiser:
    """Conditioner + U-Net bundle with self-describing checkpoints."""

    def __init__(self, cfg: UNetConfig, store: ParamStore | None = None, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.store = store if store is not None else ParamStore(seed=seed, dtype=dtype)
        self.conditioner = Conditioner(
            self.store, "cond", cfg.slot_dim, cfg.token_dim, cfg.num_slots, cfg.pose_octaves
        )
        self.unet = MultiviewUNet(self.store, cfg)

    def predict(
        self,
        z: np.ndarray | Tensor,
        t: float,
        slot_set: SlotSet,
        poses: Sequence[CameraPose],
        edit_mask: np.ndarray | None = None,
        use_null: bool = False,
    ) -> Tensor:
        cond = self.conditioner.build_condition_tokens(slot_set, poses, edit_mask, use_null)
        return self.unet(z, t, cond)

    def model_fn(self, slot_set: SlotSet, poses: Sequence[CameraPose], edit_mask: np.ndarray | None = None):
        """Sampler adapter: (z, t, conditional) -> float64 noise prediction."""

        def fn(z: np.ndarray, t: float, conditional: bool) -> np.ndarray:
            with no_grad():
                out = self.predict(z, t, slot_set, poses, edit_mask, use_null=not conditional)
            return out.data.astype(np.float64)

        return fn

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        arrays: dict[str, np.ndarray] = {}
        for p, tensor in self.store.params.items():
            arrays[f"param/{p}"] = tensor.data
        for p, arr in self.store.ema.items():
            arrays[f"ema/{p}"] = arr
        arrays.update(self.store.opt_state_arrays())
        meta = {"config": self.cfg.to_dict()}
        if extra:
            meta.update(extra)
        arrays["meta/json"] = encode_json(meta)
        write_container(path, arrays)

    @staticmethod
    def load(path: str | Path, use_ema: bool = False, dtype=np.float32) -> tuple["Denoiser", dict]:
        blob = read_container(path)
        meta = decode_json(blob["meta/json"])
        cfg = UNetConfig.from_dict(meta["config"])
        model = Denoiser(cfg, store=ParamStore(seed=0, dtype=dtype))
        params = {k[len("param/") :]: v for k, v in blob.items() if k.startswith("param/")}
        ema = {k[len("ema/") :]: v for k, v in blob.items() if k.startswith("ema/")}
        model.store.load_arrays(params, ema=ema)
        model.store.load_opt_state({k: v for k, v in blob.items() if k.startswith("opt/")})
        if use_ema:
            for p, arr in ema.items():
                model.store.params[p].data = arr.astype(model.store.dtype).copy()
        return model, meta


__all__ = [
    "AttentionPool",
    "ConditionTokens",
    "Conditioner",
    "Denoiser",
    "MultiviewUNet",
    "ResBlock",
    "UNetConfig",
    "film_modulate",
    "pose_summary",
]
