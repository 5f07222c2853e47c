"""Synthetic paired channel/camera records for a street-canyon ISAC scene."""

from .channel import channel_from_paths, propagation_paths, synthesize_channel
from .dataset import (
    Dataset,
    LabelAccessError,
    Split,
    UnlabeledView,
    build_dataset,
    derive_seed,
    generate_dataset,
    generate_split,
    load_dataset,
    make_record,
    record_dtype,
    sample_scene,
    split_counts,
    write_dataset,
)
from .noise import inject_noise
from .render import render_scene
from .scenario import (
    Blocker,
    ConfigError,
    MultimodalRecord,
    NoiseSpec,
    ScenarioConfig,
    line_of_sight,
    segment_hits_box,
)

__all__ = [
    "Blocker", "ConfigError", "Dataset", "LabelAccessError", "MultimodalRecord", "NoiseSpec",
    "ScenarioConfig", "Split", "UnlabeledView", "build_dataset", "channel_from_paths", "derive_seed",
    "generate_dataset", "generate_split", "inject_noise", "line_of_sight", "load_dataset", "make_record",
    "propagation_paths", "record_dtype", "render_scene", "sample_scene", "segment_hits_box",
    "split_counts", "synthesize_channel", "write_dataset",
]
