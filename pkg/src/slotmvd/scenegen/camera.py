"""Camera poses, pose sampling modes, and per-pixel ray generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from slotmvd.errors import ContractViolation


@dataclass
class CameraConfig:
    radius_range: tuple[float, float] = (4.0, 6.0)
    elevation_range: tuple[float, float] = (np.deg2rad(15.0), np.deg2rad(60.0))
    fov: float = 0.9  # vertical, radians
    mixed_block: int = 5
    mixed_jitter: float = np.deg2rad(10.0)


@dataclass
class CameraPose:
    origin: np.ndarray  # (3,)
    right: np.ndarray
    up: np.ndarray
    forward: np.ndarray
    fov: float

    def rotation(self) -> np.ndarray:
        """Rows: right, up, forward."""
        return np.stack([self.right, self.up, self.forward])

    def check(self, tol: float = 1e-6) -> None:
        r = self.rotation()
        err = np.abs(r @ r.T - np.eye(3)).max()
        if err > tol:
            raise ContractViolation(f"camera triad not orthonormal (err={err:.2e})")


def look_at(origin, target=(0.0, 0.0, 0.0), fov: float = 0.9) -> CameraPose:
    origin = np.asarray(origin, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - origin
    norm = np.linalg.norm(forward)
    if norm < 1e-9:
        raise ContractViolation("camera origin coincides with the look-at target")
    forward = forward / norm
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    if np.linalg.norm(right) < 1e-8:  # looking straight up/down
        world_up = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, world_up)
    right = right / np.linalg.norm(right)
    up = np.cross(right, forward)
    return CameraPose(origin, right, up, forward, float(fov))


def pose_from_spherical(azimuth: float, elevation: float, radius: float, fov: float) -> CameraPose:
    origin = np.array(
        [
            radius * np.cos(elevation) * np.cos(azimuth),
            radius * np.cos(elevation) * np.sin(azimuth),
            radius * np.sin(elevation),
        ]
    )
    return look_at(origin, fov=fov)


def azimuth_of(pose: CameraPose) -> float:
    return float(np.arctan2(pose.origin[1], pose.origin[0]))


def sample_poses(
    n: int,
    mode: str,
    seed: int = 0,
    cfg: CameraConfig | None = None,
    start_azimuth: float = 0.0,
) -> list[CameraPose]:
    """Sample n center-facing poses.

    uniform: independent draws on the upper-hemisphere shell.
    mixed: alternating blocks of nearby poses (azimuth jitter bounded by
        cfg.mixed_jitter) and fresh uniform draws.
    circular: n poses equally spaced in azimuth at mid elevation/radius.
    """
    if n < 1:
        raise ContractViolation("need n >= 1 poses")
    cfg = cfg or CameraConfig()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(101,)))
    lo_e, hi_e = cfg.elevation_range
    lo_r, hi_r = cfg.radius_range

    def uniform_pose() -> CameraPose:
        return pose_from_spherical(
            rng.uniform(0.0, 2.0 * np.pi), rng.uniform(lo_e, hi_e), rng.uniform(lo_r, hi_r), cfg.fov
        )

    if mode == "uniform":
        return [uniform_pose() for _ in range(n)]

    if mode == "circular":
        el = 0.5 * (lo_e + hi_e)
        rad = 0.5 * (lo_r + hi_r)
        return [
            pose_from_spherical(start_azimuth + 2.0 * np.pi * k / n, el, rad, cfg.fov)
            for k in range(n)
        ]

    if mode == "mixed":
        poses: list[CameraPose] = []
        az = rng.uniform(0.0, 2.0 * np.pi)
        el = rng.uniform(lo_e, hi_e)
        rad = rng.uniform(lo_r, hi_r)
        block = max(1, cfg.mixed_block)
        for i in range(n):
            block_idx, in_block = divmod(i, block)
            nearby = block_idx % 2 == 0
            if nearby:
                if in_block > 0:
                    az = az + rng.uniform(-cfg.mixed_jitter, cfg.mixed_jitter)
                poses.append(pose_from_spherical(az, el, rad, cfg.fov))
            else:
                poses.append(uniform_pose())
                az = azimuth_of(poses[-1])
                el = np.arcsin(poses[-1].origin[2] / np.linalg.norm(poses[-1].origin))
                rad = float(np.linalg.norm(poses[-1].origin))
        return poses

    raise ContractViolation(f"unknown pose mode '{mode}'")


def pixel_rays(pose: CameraPose, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (origin, direction) images, directions unit norm.

    Pixel centers sit at (index + 0.5) / resolution; the image center ray is
    exactly the camera forward vector.
    """
    h = w = resolution
    half = np.tan(pose.fov / 2.0)
    js = (2.0 * (np.arange(w) + 0.5) / w - 1.0) * half
    is_ = (1.0 - 2.0 * (np.arange(h) + 0.5) / h) * half
    xx, yy = np.meshgrid(js, is_)
    dirs = (
        pose.forward[None, None, :]
        + xx[:, :, None] * pose.right[None, None, :]
        + yy[:, :, None] * pose.up[None, None, :]
    )
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose.origin, dirs.shape).copy()
    return origins, dirs


def ray_at(pose: CameraPose, i: float, j: float, resolution: int) -> np.ndarray:
    """Direction of the ray through fractional pixel coordinate (i, j)."""
    half = np.tan(pose.fov / 2.0)
    x = (2.0 * (j + 0.5) / resolution - 1.0) * half
    y = (1.0 - 2.0 * (i + 0.5) / resolution) * half
    d = pose.forward + x * pose.right + y * pose.up
    return d / np.linalg.norm(d)


def pose_to_floats(pose: CameraPose) -> list[float]:
    """Row-major 3x4 [R | t] plus fov, 13 floats."""
    rt = np.concatenate([pose.rotation(), pose.origin[:, None]], axis=1)
    return [float(v) for v in rt.reshape(-1)] + [pose.fov]


def pose_from_floats(vals) -> CameraPose:
    vals = np.asarray(vals, dtype=np.float64)
    if vals.size != 13:
        raise ContractViolation(f"pose record needs 13 floats, got {vals.size}")
    rt = vals[:12].reshape(3, 4)
    return CameraPose(rt[:, 3].copy(), rt[0, :3].copy(), rt[1, :3].copy(), rt[2, :3].copy(), float(vals[12]))
