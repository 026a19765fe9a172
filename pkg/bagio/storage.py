"""
Bag Storage

One directory per bag:
- manifest.json: UTF-8 header (bag_id, grade, C, N, d_f, coords, feature
  filename, optional annotations)
- features.f32: little-endian row-major float32 payload, exactly N x d_f values

Reading verifies the manifest, the payload size and finiteness and raises a
distinct error for each failure.
"""

from __future__ import annotations

import json
import logging
import shutil
from pathlib import Path
from typing import List

import numpy as np

from .models import Bag, BagError, BagValidationError, RegionAnnotation

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
FEATURES_NAME = "features.f32"
FEATURE_DTYPE = np.dtype("<f4")


class ManifestError(BagError):
    """The manifest is missing, not JSON, or lacks required keys."""


class FeatureSizeError(BagError):
    """The feature payload byte count does not equal N x d_f x 4."""


class NonFiniteFeatureError(BagError):
    """The feature payload contains NaN or infinite values."""


REQUIRED_KEYS = ("bag_id", "grade", "C", "N", "d_f", "coords", "features")


def write_bag(bag: Bag, directory: Path) -> Path:
    """
    Write a bag into <directory>/<bag_id>/.

    Args:
        bag: Bag satisfying its invariants
        directory: Parent directory (created if missing)

    Returns:
        Path of the bag directory
    """
    bag.validate()
    bag_dir = Path(directory) / bag.bag_id
    bag_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "bag_id": bag.bag_id,
        "grade": int(bag.grade),
        "C": int(bag.num_classes),
        "N": bag.num_patches,
        "d_f": bag.feature_dim,
        "coords": bag.coords.tolist(),
        "features": FEATURES_NAME,
    }
    if bag.annotations:
        manifest["annotations"] = [region.to_dict() for region in bag.annotations]

    (bag_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    bag.features.astype(FEATURE_DTYPE, copy=False).tofile(bag_dir / FEATURES_NAME)
    return bag_dir


def read_bag(path: Path) -> Bag:
    """
    Read a bag directory written by write_bag.

    Raises:
        ManifestError: manifest unreadable or incomplete
        FeatureSizeError: payload size differs from N x d_f
        NonFiniteFeatureError: payload contains NaN/inf
    """
    bag_dir = Path(path)
    manifest_path = bag_dir / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ManifestError(f"{bag_dir}: no {MANIFEST_NAME}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestError(f"{manifest_path}: malformed manifest ({exc})") from exc

    if not isinstance(manifest, dict):
        raise ManifestError(f"{manifest_path}: manifest must be a JSON object")
    missing = [key for key in REQUIRED_KEYS if key not in manifest]
    if missing:
        raise ManifestError(f"{manifest_path}: missing keys {missing}")

    try:
        n, d_f = int(manifest["N"]), int(manifest["d_f"])
        coords = np.asarray(manifest["coords"], dtype=np.int64)
        annotations = [RegionAnnotation.from_dict(r) for r in manifest.get("annotations", [])]
    except (TypeError, ValueError, KeyError) as exc:
        raise ManifestError(f"{manifest_path}: bad field ({exc})") from exc
    if coords.shape != (n, 2):
        raise ManifestError(f"{manifest_path}: coords shape {coords.shape} does not match N={n}")

    feature_path = bag_dir / str(manifest["features"])
    if not feature_path.is_file():
        raise ManifestError(f"{manifest_path}: feature file {feature_path.name} not found")
    expected = n * d_f * FEATURE_DTYPE.itemsize
    actual = feature_path.stat().st_size
    if actual != expected:
        raise FeatureSizeError(f"{feature_path}: {actual} bytes, expected {expected} for N={n}, d_f={d_f}")

    features = np.fromfile(feature_path, dtype=FEATURE_DTYPE).reshape(n, d_f)
    if not np.all(np.isfinite(features)):
        raise NonFiniteFeatureError(f"{feature_path}: non-finite feature values")

    bag = Bag(
        bag_id=str(manifest["bag_id"]),
        grade=int(manifest["grade"]),
        coords=coords,
        features=features.astype(np.float32),
        num_classes=int(manifest["C"]),
        annotations=annotations,
    )
    try:
        return bag.validate()
    except BagValidationError as exc:
        raise ManifestError(str(exc)) from exc


def is_bag_dir(path: Path) -> bool:
    return (Path(path) / MANIFEST_NAME).is_file()


def load_dataset(root: Path) -> List[Bag]:
    """
    Load every bag directory directly under root, sorted by directory name.

    Raises:
        BagError if root holds no bags
    """
    root = Path(root)
    if is_bag_dir(root):
        return [read_bag(root)]
    bag_dirs = sorted(p for p in root.iterdir() if p.is_dir() and is_bag_dir(p))
    if not bag_dirs:
        raise BagError(f"{root}: no bag directories found")
    bags = [read_bag(p) for p in bag_dirs]
    logger.info("Loaded %d bags from %s", len(bags), root)
    return bags


def write_dataset(bags: List[Bag], root: Path) -> List[Path]:
    """
    Write bags under root, replacing bag directories left by an earlier run
    so that re-running into the same directory gives the same tree.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for stale in sorted(p for p in root.iterdir() if p.is_dir() and is_bag_dir(p)):
        shutil.rmtree(stale)
    return [write_bag(bag, root) for bag in bags]
