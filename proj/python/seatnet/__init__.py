"""Driver vs passenger seat classifier: Python access to the C++ engine."""

from ._core import (
    SeatnetError,
    build_model,
    compute_metrics,
    format_accuracy,
    forward,
    generate_synthetic,
    load_weights,
    preprocess,
    save_weights,
    split_by_car,
    weight_manifest,
)

__all__ = [
    "SeatnetError",
    "build_model",
    "compute_metrics",
    "format_accuracy",
    "forward",
    "generate_synthetic",
    "load_weights",
    "preprocess",
    "save_weights",
    "split_by_car",
    "weight_manifest",
]
