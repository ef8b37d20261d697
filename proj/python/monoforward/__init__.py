"""Layerwise Mono-Forward training with BP, FF, FA and DFA baselines."""

from ._core import (
    CheckpointError,
    ConfigError,
    DataError,
    LabelError,
    Model,
    NumericError,
    ShapeError,
    accuracy,
    forward_pass_count,
    load_dataset,
    memory_vs_depth,
    reset_forward_pass_count,
    synth_blobs,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DataError",
    "LabelError",
    "Model",
    "NumericError",
    "ShapeError",
    "accuracy",
    "forward_pass_count",
    "load_dataset",
    "memory_vs_depth",
    "reset_forward_pass_count",
    "synth_blobs",
]
