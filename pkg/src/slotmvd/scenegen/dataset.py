"""Dataset serialization: per-scene text manifest + binary tensor blob."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.numerics.checkpoint import read_container, write_container
from slotmvd.scenegen.camera import (
    CameraConfig,
    CameraPose,
    pose_from_floats,
    pose_to_floats,
    sample_poses,
)
from slotmvd.scenegen.render import render
from slotmvd.scenegen.scene import SHAPE_IDS, SHAPE_NAMES, SceneObject, SceneSpec, sample_scene


@dataclass
class ViewSet:
    poses: list[CameraPose]
    rgb: np.ndarray  # (V, H, W, 3) float32 in [0, 1]
    ids: np.ndarray  # (V, H, W) int32, 0 = background
    ray_o: np.ndarray  # (V, H, W, 3) float32
    ray_d: np.ndarray  # (V, H, W, 3) float32

    @property
    def n(self) -> int:
        return len(self.poses)


@dataclass
class SceneRecord:
    spec: SceneSpec
    input_views: ViewSet
    target_views: ViewSet


def _render_view_set(spec: SceneSpec, poses: list[CameraPose], resolution: int) -> ViewSet:
    rgbs, idss, ros, rds = [], [], [], []
    for pose in poses:
        rgb, ids, (ro, rd) = render(spec, pose, resolution)
        rgbs.append(rgb.astype(np.float32))
        idss.append(ids)
        ros.append(ro.astype(np.float32))
        rds.append(rd.astype(np.float32))
    return ViewSet(poses, np.stack(rgbs), np.stack(idss), np.stack(ros), np.stack(rds))


def scene_seed_for(dataset_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=(int(dataset_seed), int(index))).generate_state(1, dtype=np.uint64)[0])


def make_scene_record(
    scene_seed: int,
    resolution: int,
    n_input: int = 5,
    n_target: int = 5,
    mode: str = "uniform",
    k_max: int = 6,
    cfg: CameraConfig | None = None,
    n_objects: int | None = None,
) -> SceneRecord:
    spec = sample_scene(scene_seed, n_objects=n_objects, k_max=k_max)
    in_poses = sample_poses(n_input, "uniform", seed=scene_seed ^ 0x1, cfg=cfg)
    tg_poses = sample_poses(n_target, mode, seed=scene_seed ^ 0x2, cfg=cfg)
    return SceneRecord(
        spec,
        _render_view_set(spec, in_poses, resolution),
        _render_view_set(spec, tg_poses, resolution),
    )


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _scene_manifest_text(record: SceneRecord) -> str:
    spec = record.spec
    lines = [f"scene_id {spec.scene_id}", f"n_objects {spec.n_objects}"]
    for obj in spec.objects:
        vals = " ".join(_f(v) for v in [*obj.center, obj.size, *obj.albedo])
        lines.append(f"object {SHAPE_NAMES[obj.shape]} {vals}")
    lines.append("ground " + " ".join(_f(v) for v in spec.ground_albedo))
    lines.append("light " + " ".join(_f(v) for v in spec.light_dir))
    for tag, views in (("input", record.input_views), ("target", record.target_views)):
        for pose in views.poses:
            lines.append(f"pose_{tag} " + " ".join(_f(v) for v in pose_to_floats(pose)))
    return "\n".join(lines) + "\n"


def _parse_scene_manifest(text: str) -> tuple[SceneSpec, list[CameraPose], list[CameraPose]]:
    objects: list[SceneObject] = []
    ground = None
    light = None
    scene_id = None
    in_poses: list[CameraPose] = []
    tg_poses: list[CameraPose] = []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key == "scene_id":
            scene_id = int(parts[1])
        elif key == "object":
            shape = SHAPE_IDS[parts[1]]
            vals = [float(v) for v in parts[2:]]
            objects.append(SceneObject(shape, np.array(vals[:3]), vals[3], np.array(vals[4:7])))
        elif key == "ground":
            ground = np.array([float(v) for v in parts[1:4]])
        elif key == "light":
            light = np.array([float(v) for v in parts[1:4]])
        elif key == "pose_input":
            in_poses.append(pose_from_floats([float(v) for v in parts[1:]]))
        elif key == "pose_target":
            tg_poses.append(pose_from_floats([float(v) for v in parts[1:]]))
    if scene_id is None or ground is None or light is None:
        raise ContractViolation("scene manifest missing required fields")
    return SceneSpec(scene_id, objects, ground, light), in_poses, tg_poses


def save_scene(directory: str | Path, index: int, record: SceneRecord) -> None:
    directory = Path(directory)
    (directory / f"scene_{index:05d}.txt").write_text(_scene_manifest_text(record))
    blob = {}
    for tag, views in (("input", record.input_views), ("target", record.target_views)):
        blob[f"{tag}/rgb"] = views.rgb
        blob[f"{tag}/ids"] = views.ids
        blob[f"{tag}/ray_o"] = views.ray_o
        blob[f"{tag}/ray_d"] = views.ray_d
    write_container(directory / f"scene_{index:05d}.bin", blob)


def load_scene(directory: str | Path, index: int) -> SceneRecord:
    directory = Path(directory)
    text = (directory / f"scene_{index:05d}.txt").read_text()
    spec, in_poses, tg_poses = _parse_scene_manifest(text)
    blob = read_container(directory / f"scene_{index:05d}.bin")
    views = {}
    for tag, poses in (("input", in_poses), ("target", tg_poses)):
        views[tag] = ViewSet(
            poses,
            blob[f"{tag}/rgb"],
            blob[f"{tag}/ids"],
            blob[f"{tag}/ray_o"],
            blob[f"{tag}/ray_d"],
        )
    return SceneRecord(spec, views["input"], views["target"])


@dataclass
class DatasetMeta:
    scenes: int
    resolution: int
    views_input: int
    views_target: int
    mode: str
    seed: int
    k_max: int
    scene_ids: list[int]


def save_dataset_manifest(directory: str | Path, meta: DatasetMeta) -> None:
    lines = [
        f"scenes {meta.scenes}",
        f"resolution {meta.resolution}",
        f"views_input {meta.views_input}",
        f"views_target {meta.views_target}",
        f"mode {meta.mode}",
        f"seed {meta.seed}",
        f"k_max {meta.k_max}",
    ]
    for i, sid in enumerate(meta.scene_ids):
        lines.append(f"scene {i} {sid}")
    Path(directory, "manifest.txt").write_text("\n".join(lines) + "\n")


def load_dataset_manifest(directory: str | Path) -> DatasetMeta:
    path = Path(directory, "manifest.txt")
    if not path.exists():
        raise ContractViolation(f"{directory}: no dataset manifest found")
    fields: dict[str, str] = {}
    scene_ids: dict[int, int] = {}
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "scene":
            scene_ids[int(parts[1])] = int(parts[2])
        else:
            fields[parts[0]] = parts[1]
    ids = [scene_ids[i] for i in sorted(scene_ids)]
    return DatasetMeta(
        scenes=int(fields["scenes"]),
        resolution=int(fields["resolution"]),
        views_input=int(fields["views_input"]),
        views_target=int(fields["views_target"]),
        mode=fields["mode"],
        seed=int(fields["seed"]),
        k_max=int(fields["k_max"]),
        scene_ids=ids,
    )


def generate_dataset(
    out_dir: str | Path,
    n_scenes: int,
    resolution: int,
    n_input: int = 5,
    n_target: int = 5,
    mode: str = "uniform",
    seed: int = 0,
    k_max: int = 6,
    cfg: CameraConfig | None = None,
) -> DatasetMeta:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene_ids = []
    for i in range(n_scenes):
        sid = scene_seed_for(seed, i)
        record = make_scene_record(
            sid, resolution, n_input=n_input, n_target=n_target, mode=mode, k_max=k_max, cfg=cfg
        )
        save_scene(out_dir, i, record)
        scene_ids.append(sid)
    meta = DatasetMeta(n_scenes, resolution, n_input, n_target, mode, seed, k_max, scene_ids)
    save_dataset_manifest(out_dir, meta)
    return meta


def scene_index_for_id(meta: DatasetMeta, scene_id: int) -> int:
    try:
        return meta.scene_ids.index(int(scene_id))
    except ValueError:
        raise ContractViolation(f"scene id {scene_id} not present in dataset") from None
