"""Procedural multi-object scene sampling.

Scenes live on the ground plane z = 0 (+z is up): spheres (size = radius) and
axis-aligned cubes (size = half edge length) resting on the plane, one
directional light, a constant sky. All sampling is a pure function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from slotmvd.errors import ContractViolation

SHAPE_SPHERE = 0
SHAPE_BOX = 1
SHAPE_NAMES = {SHAPE_SPHERE: "sphere", SHAPE_BOX: "box"}
SHAPE_IDS = {v: k for k, v in SHAPE_NAMES.items()}

SKY_COLOR = np.array([0.35, 0.55, 0.85])
AMBIENT = 0.2

_PLACEMENT_RADIUS = 2.1
_SIZE_RANGE = (0.38, 0.72)
_MAX_ATTEMPTS = 64
_MAX_RESEEDS = 32


@dataclass
class SceneObject:
    shape: int
    center: np.ndarray  # (3,) world units
    size: float  # radius (sphere) or half edge (box)
    albedo: np.ndarray  # (3,) in [0, 1]

    def bounding_radius(self) -> float:
        return self.size if self.shape == SHAPE_SPHERE else self.size * np.sqrt(3.0)


@dataclass
class SceneSpec:
    scene_id: int
    objects: list[SceneObject]
    ground_albedo: np.ndarray
    light_dir: np.ndarray  # unit vector pointing toward the light
    field_extra: dict = field(default_factory=dict)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    def arrays(self):
        """Primitive arrays consumed by the render kernel."""
        n = len(self.objects)
        kinds = np.array([o.shape for o in self.objects], dtype=np.int32)
        centers = np.array([o.center for o in self.objects], dtype=np.float64).reshape(n, 3)
        sizes = np.array([o.size for o in self.objects], dtype=np.float64)
        albedos = np.array([o.albedo for o in self.objects], dtype=np.float64).reshape(n, 3)
        return kinds, centers, sizes, albedos

    def without_object(self, index: int) -> "SceneSpec":
        if not 0 <= index < len(self.objects):
            raise ContractViolation(f"object index {index} out of range (n={len(self.objects)})")
        objs = [o for i, o in enumerate(self.objects) if i != index]
        return SceneSpec(self.scene_id, objs, self.ground_albedo, self.light_dir)


def _try_place(rng: np.random.Generator, count: int) -> list[SceneObject] | None:
    objects: list[SceneObject] = []
    for _ in range(count):
        placed = False
        for _ in range(_MAX_ATTEMPTS):
            shape = int(rng.integers(0, 2))
            size = float(rng.uniform(*_SIZE_RANGE))
            ang = rng.uniform(0.0, 2.0 * np.pi)
            rad = np.sqrt(rng.uniform(0.0, 1.0)) * _PLACEMENT_RADIUS
            center = np.array([rad * np.cos(ang), rad * np.sin(ang), size])
            cand = SceneObject(shape, center, size, rng.uniform(0.08, 0.95, size=3))
            ok = True
            for other in objects:
                dist = np.linalg.norm(cand.center - other.center)
                if dist <= cand.bounding_radius() + other.bounding_radius():
                    ok = False
                    break
            if ok:
                objects.append(cand)
                placed = True
                break
        if not placed:
            return None
    return objects


def sample_scene(seed: int, n_objects: int | None = None, k_max: int = 6) -> SceneSpec:
    """Deterministic scene from a u64 seed; never loops unboundedly."""
    if n_objects is not None and not 2 <= n_objects <= k_max:
        raise ContractViolation(f"n_objects must lie in [2, {k_max}]")
    for reseed in range(_MAX_RESEEDS):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(reseed,)))
        count = int(rng.integers(2, k_max + 1)) if n_objects is None else n_objects
        objects = _try_place(rng, count)
        if objects is None:
            continue
        ground = rng.uniform(0.15, 0.55, size=3)
        az = rng.uniform(0.0, 2.0 * np.pi)
        el = rng.uniform(np.deg2rad(40.0), np.deg2rad(70.0))
        light = np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        return SceneSpec(int(seed), objects, ground, light)
    raise ContractViolation(f"scene placement failed for seed {seed} after {_MAX_RESEEDS} reseeds")
