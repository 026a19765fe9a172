"""
Bag I/O Package

Data model, on-disk bag format, dataset splits, class-balanced sampling
weights and the planted synthetic dataset generator.
"""

from .models import (
    Bag,
    BagError,
    BagValidationError,
    Fold,
    GradeScheme,
    RegionAnnotation,
    SplitSpec,
    SynthSpec,
    SynthSpecError,
)
from .storage import (
    FeatureSizeError,
    ManifestError,
    NonFiniteFeatureError,
    load_dataset,
    read_bag,
    write_bag,
    write_dataset,
)
from .synthetic import generate_synthetic_dataset, planting_log
from .splits import SplitError, bag_sampling_weights, class_balanced_weights, stratified_kfold

__all__ = [
    "Bag",
    "BagError",
    "BagValidationError",
    "Fold",
    "GradeScheme",
    "RegionAnnotation",
    "SplitSpec",
    "SynthSpec",
    "SynthSpecError",
    "FeatureSizeError",
    "ManifestError",
    "NonFiniteFeatureError",
    "load_dataset",
    "read_bag",
    "write_bag",
    "write_dataset",
    "generate_synthetic_dataset",
    "planting_log",
    "SplitError",
    "bag_sampling_weights",
    "class_balanced_weights",
    "stratified_kfold",
]
