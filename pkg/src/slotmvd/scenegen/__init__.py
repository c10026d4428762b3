from slotmvd.scenegen.camera import (
    CameraConfig,
    CameraPose,
    azimuth_of,
    look_at,
    pixel_rays,
    pose_from_floats,
    pose_from_spherical,
    pose_to_floats,
    ray_at,
    sample_poses,
)
from slotmvd.scenegen.dataset import (
    DatasetMeta,
    SceneRecord,
    ViewSet,
    generate_dataset,
    load_dataset_manifest,
    load_scene,
    make_scene_record,
    save_scene,
    scene_index_for_id,
    scene_seed_for,
)
from slotmvd.scenegen.render import render, render_without
from slotmvd.scenegen.scene import (
    AMBIENT,
    SHAPE_BOX,
    SHAPE_SPHERE,
    SKY_COLOR,
    SceneObject,
    SceneSpec,
    sample_scene,
)

__all__ = [
    "AMBIENT",
    "CameraConfig",
    "CameraPose",
    "DatasetMeta",
    "SHAPE_BOX",
    "SHAPE_SPHERE",
    "SKY_COLOR",
    "SceneObject",
    "SceneRecord",
    "SceneSpec",
    "ViewSet",
    "azimuth_of",
    "generate_dataset",
    "load_dataset_manifest",
    "load_scene",
    "look_at",
    "make_scene_record",
    "pixel_rays",
    "pose_from_floats",
    "pose_from_spherical",
    "pose_to_floats",
    "ray_at",
    "render",
    "render_without",
    "sample_poses",
    "sample_scene",
    "save_scene",
    "scene_index_for_id",
    "scene_seed_for",
]
