"""
Data Models for Patch Bags

This module contains the core data structures shared by every stage:
- GradeScheme: Which ordinal grade labels a dataset uses
- RegionAnnotation: Evaluation-only ground truth for a tumour region
- Bag: One slide as patch features, tile coordinates and a grade label
- SplitSpec: Cross-validation layout
- SynthSpec: Parameters of the planted synthetic dataset
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


class BagError(ValueError):
    """Base class for every bag / dataset problem."""


class BagValidationError(BagError):
    """A Bag violates one of its structural invariants."""


class SynthSpecError(BagError):
    """A synthetic dataset specification is degenerate."""


class GradeScheme(Enum):
    """
    Ordinal grade label sets.

    SKIN and HEAD_NECK use four classes (normal, well, moderate, poor).
    LUNG has no well-differentiated cases and uses three classes.
    """
    SKIN = "skin"
    HEAD_NECK = "head_neck"
    LUNG = "lung"

    @property
    def class_names(self) -> Tuple[str, ...]:
        if self is GradeScheme.LUNG:
            return ("normal", "moderate", "poor")
        return ("normal", "well", "moderate", "poor")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def low_risk(self) -> Tuple[int, ...]:
        """Class codes on the low-risk side of the AUC split (well, or moderate for lung)."""
        return (1,)

    @property
    def high_risk(self) -> Tuple[int, ...]:
        """Class codes on the high-risk side of the AUC split."""
        if self is GradeScheme.LUNG:
            return (2,)
        return (2, 3)

    @classmethod
    def for_classes(cls, num_classes: int) -> "GradeScheme":
        if num_classes == 4:
            return cls.SKIN
        if num_classes == 3:
            return cls.LUNG
        raise BagValidationError(f"no grade scheme with {num_classes} classes")

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class RegionAnnotation:
    """
    A tumour region drawn by an annotator (or planted by the generator).

    Annotations are used for localisation scoring only and never reach the
    training objective.

    Attributes:
        region_id: Identifier unique within the bag
        patch_indices: Indices into the bag's patch list
        region_grade: Grade code of the region's dominant pattern
    """
    region_id: str
    patch_indices: Tuple[int, ...]
    region_grade: int

    def to_dict(self) -> dict:
        return {
            "region_id": self.region_id,
            "patch_indices": [int(i) for i in self.patch_indices],
            "region_grade": int(self.region_grade),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RegionAnnotation":
        return cls(
            region_id=str(raw["region_id"]),
            patch_indices=tuple(int(i) for i in raw["patch_indices"]),
            region_grade=int(raw["region_grade"]),
        )


@dataclass
class Bag:
    """
    One whole-slide image reduced to a bag of patches.

    Attributes:
        bag_id: Identifier, also used as the on-disk directory name
        grade: Bag-level grade code in [0, num_classes - 1]
        coords: (N, 2) int64 tile-grid indices (row s, column t)
        features: (N, d_f) float32 patch features
        num_classes: Number of classes of the dataset (4 or 3)
        annotations: Optional evaluation-only region annotations
    """
    bag_id: str
    grade: int
    coords: np.ndarray
    features: np.ndarray
    num_classes: int = 4
    annotations: List[RegionAnnotation] = field(default_factory=list)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)

    @property
    def num_patches(self) -> int:
        return int(self.features.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def scheme(self) -> GradeScheme:
        return GradeScheme.for_classes(self.num_classes)

    def validate(self) -> "Bag":
        """
        Check every structural invariant of the bag.

        Returns:
            The bag itself, so calls can be chained

        Raises:
            BagValidationError if any invariant is violated
        """
        if not self.bag_id:
            raise BagValidationError("bag_id cannot be empty")
        # bag_id names the bag directory and its cache files.
        if "/" in self.bag_id or "\\" in self.bag_id or self.bag_id in (".", ".."):
            raise BagValidationError(f"bag_id {self.bag_id!r} must be a plain file name")
        if self.features.ndim != 2 or self.num_patches < 1:
            raise BagValidationError(f"{self.bag_id}: features must be a non-empty (N, d_f) matrix")
        if self.coords.shape[0] != self.num_patches:
            raise BagValidationError(
                f"{self.bag_id}: {self.coords.shape[0]} coords for {self.num_patches} feature rows"
            )
        if not 0 <= self.grade < self.num_classes:
            raise BagValidationError(f"{self.bag_id}: grade {self.grade} outside [0, {self.num_classes - 1}]")
        if len({(int(s), int(t)) for s, t in self.coords}) != self.num_patches:
            raise BagValidationError(f"{self.bag_id}: duplicate tile coordinates")
        if not np.all(np.isfinite(self.features)):
            raise BagValidationError(f"{self.bag_id}: non-finite feature values")
        for region in self.annotations:
            if not region.patch_indices:
                raise BagValidationError(f"{self.bag_id}: region {region.region_id} is empty")
            if max(region.patch_indices) >= self.num_patches or min(region.patch_indices) < 0:
                raise BagValidationError(f"{self.bag_id}: region {region.region_id} indexes outside the bag")
            if not 0 <= region.region_grade < self.num_classes:
                raise BagValidationError(f"{self.bag_id}: region {region.region_id} has an invalid grade")
        return self

    def __eq__(self, other) -> bool:
        if not isinstance(other, Bag):
            return False
        return (
            self.bag_id == other.bag_id
            and self.grade == other.grade
            and self.num_classes == other.num_classes
            and np.array_equal(self.coords, other.coords)
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
            and list(self.annotations) == list(other.annotations)
        )


@dataclass(frozen=True)
class SplitSpec:
    """
    Cross-validation layout.

    The defaults reproduce 5-fold cross-validation with a 64:16:20
    train/validation/test split.
    """
    fold_count: int = 5
    train_fraction: float = 0.64
    val_fraction: float = 0.16
    test_fraction: float = 0.20

    def __post_init__(self):
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise BagValidationError(f"split fractions sum to {total}, expected 1")
        if self.fold_count < 1:
            raise BagValidationError("fold_count must be at least 1")
        if min(self.train_fraction, self.val_fraction, self.test_fraction) < 0:
            raise BagValidationError("split fractions must be non-negative")


@dataclass
class Fold:
    """Bag indices of one cross-validation fold."""
    index: int
    train: List[int]
    val: List[int]
    test: List[int]


@dataclass
class SynthSpec:
    """
    Parameters of the planted synthetic dataset.

    Each diseased bag receives spatially clustered "tumour" patches whose
    features are a grade signature plus noise; the bag label is the worst
    planted grade. Normal bags are pure noise.

    Attributes:
        class_counts: Number of bags per grade code
        min_patches / max_patches: Bag size range (inclusive)
        feature_dim: d_f
        noise_scale: Standard deviation of the Gaussian feature noise
        signal_scale: Length of the planted signature component
        tumor_fraction: Fraction of a diseased bag's patches that are planted
        lower_grade_prob: Probability of also planting each lower grade
        region_count: Planted regions per planted grade
        signatures: Optional explicit (C, d_f) unit-norm signatures; row 0 is
            unused (normal). Generated from the seed when omitted.
        min_signature_angle: Minimum pairwise angle in degrees
    """
    class_counts: Tuple[int, ...] = (111, 56, 22, 11)
    min_patches: int = 24
    max_patches: int = 64
    feature_dim: int = 32
    noise_scale: float = 0.35
    signal_scale: float = 1.0
    tumor_fraction: float = 0.3
    lower_grade_prob: float = 0.5
    region_count: int = 1
    signatures: Optional[List[List[float]]] = None
    min_signature_angle: float = 60.0

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)

    def validate(self) -> "SynthSpec":
        if self.num_classes not in (3, 4):
            raise SynthSpecError(f"{self.num_classes} classes declared; 3 or 4 expected")
        if any(c < 0 for c in self.class_counts) or sum(self.class_counts) == 0:
            raise SynthSpecError("class counts must be non-negative and not all zero")
        if self.noise_scale < 0 or self.signal_scale < 0:
            raise SynthSpecError("noise_scale and signal_scale must be non-negative")
        if not 1 <= self.min_patches <= self.max_patches:
            raise SynthSpecError("patch range must satisfy 1 <= min_patches <= max_patches")
        if not 0.0 <= self.tumor_fraction <= 1.0:
            raise SynthSpecError("tumor_fraction must lie in [0, 1]")
        if self.feature_dim < 1 or self.region_count < 1:
            raise SynthSpecError("feature_dim and region_count must be positive")
        if self.signatures is not None:
            sig = np.asarray(self.signatures, dtype=np.float64)
            if sig.shape != (self.num_classes, self.feature_dim):
                raise SynthSpecError(f"signatures must have shape ({self.num_classes}, {self.feature_dim})")
            check_signatures(sig[1:], self.min_signature_angle)
        return self

    def to_json(self, path: Path):
        Path(path).write_text(json.dumps(asdict(self), indent=2), encoding="utf-8")

    @classmethod
    def from_json(cls, path: Path) -> "SynthSpec":
        raw: Dict = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise SynthSpecError(f"unknown synth spec keys: {sorted(unknown)}")
        if "class_counts" in raw:
            raw["class_counts"] = tuple(int(c) for c in raw["class_counts"])
        return cls(**raw).validate()


def check_signatures(signatures: np.ndarray, min_angle_deg: float):
    """
    Verify that signatures are unit-norm and pairwise separated.

    Raises:
        SynthSpecError if a row is not unit length or two rows are closer
        than min_angle_deg
    """
    norms = np.linalg.norm(signatures, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-6):
        raise SynthSpecError("grade signatures must be unit-norm")
    max_cos = np.cos(np.deg2rad(min_angle_deg))
    gram = signatures @ signatures.T
    for i in range(len(signatures)):
        for j in range(i + 1, len(signatures)):
            if gram[i, j] > max_cos + 1e-9:
                raise SynthSpecError(f"signatures {i} and {j} closer than {min_angle_deg} degrees")


def class_histogram(labels: Sequence[int], num_classes: int) -> np.ndarray:
    """Count labels per class code."""
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes)
