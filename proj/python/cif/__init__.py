"""Consistent instance field engine."""

from ._cif import (
    Camera,
    Checkpoint,
    DeformConfig,
    DeformationField,
    Error,
    GaussianSet,
    Scene,
    evaluate,
    load_checkpoint,
    load_scene,
    merge_views,
    panoptic_map,
    render,
    sampling_plan,
    save_checkpoint,
    score,
    synth,
    synth_presets,
    volume_conserving,
    write_scene,
)

__all__ = [
    "Camera",
    "Checkpoint",
    "DeformConfig",
    "DeformationField",
    "Error",
    "GaussianSet",
    "Scene",
    "evaluate",
    "load_checkpoint",
    "load_scene",
    "merge_views",
    "panoptic_map",
    "render",
    "sampling_plan",
    "save_checkpoint",
    "score",
    "synth",
    "synth_presets",
    "volume_conserving",
    "write_scene",
]
