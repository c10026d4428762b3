"""Ground-truth ray-cast rendering with instance ids and per-pixel rays."""

from __future__ import annotations

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.kernels import render_rays
from slotmvd.scenegen.camera import CameraPose, pixel_rays
from slotmvd.scenegen.scene import AMBIENT, SKY_COLOR, SceneSpec

VALID_RESOLUTIONS = (16, 32, 64)


def render(
    spec: SceneSpec, pose: CameraPose, resolution: int
) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Render one view: (rgb HxWx3 in [0,1], instance ids HxW, (ray_o, ray_d)).

    Instance id 0 is background (ground plane or sky); object k gets id k + 1.
    """
    if resolution not in VALID_RESOLUTIONS:
        raise ContractViolation(f"resolution must be one of {VALID_RESOLUTIONS}")
    if np.linalg.norm(pose.origin) < 1e-9:
        raise ContractViolation("degenerate pose: camera at the scene origin")
    ray_o, ray_d = pixel_rays(pose, resolution)
    kinds, centers, sizes, albedos = spec.arrays()
    rgb, ids = render_rays(
        ray_o.reshape(-1, 3),
        ray_d.reshape(-1, 3),
        kinds,
        centers,
        sizes,
        albedos,
        spec.ground_albedo,
        spec.light_dir,
        SKY_COLOR,
        AMBIENT,
    )
    h = w = resolution
    return rgb.reshape(h, w, 3), ids.reshape(h, w), (ray_o, ray_d)


def render_without(
    spec: SceneSpec, index: int, pose: CameraPose, resolution: int
) -> tuple[np.ndarray, np.ndarray]:
    """Render the scene with object `index` deleted (ids renumbered)."""
    reduced = spec.without_object(index)
    rgb, ids, _ = render(reduced, pose, resolution)
    return rgb, ids
