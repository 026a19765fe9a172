"""
Planted Synthetic Dataset

Desk-scale stand-in for private clinical slides. Every diseased bag carries
spatially clustered tumour regions whose features are a grade signature plus
Gaussian noise; the bag label is the worst planted grade and the planted
regions are kept as RegionAnnotation ground truth.
"""

from __future__ import annotations

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from .models import Bag, RegionAnnotation, SynthSpec, SynthSpecError, check_signatures

logger = logging.getLogger(__name__)

# Share of the bounding grid occupied by tissue tiles.
TISSUE_DENSITY = 0.7


def grade_signatures(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """
    Signature vectors, one row per grade code.

    Row 0 (normal) is all zeros. Generated signatures are orthonormal, so
    every pair is 90 degrees apart.

    Raises:
        SynthSpecError if d_f is too small to hold C - 1 orthonormal rows
    """
    c, d_f = spec.num_classes, spec.feature_dim
    if spec.signatures is not None:
        signatures = np.asarray(spec.signatures, dtype=np.float64).copy()
        signatures[0] = 0.0
        return signatures
    if d_f < c - 1:
        raise SynthSpecError(f"feature_dim {d_f} cannot hold {c - 1} orthonormal signatures")
    q, _ = np.linalg.qr(rng.standard_normal((d_f, c - 1)))
    signatures = np.zeros((c, d_f))
    signatures[1:] = q.T
    check_signatures(signatures[1:], spec.min_signature_angle)
    return signatures


def _grid_coords(n: int, rng: np.random.Generator) -> np.ndarray:
    side = max(1, math.ceil(math.sqrt(n / TISSUE_DENSITY)))
    cells = np.sort(rng.choice(side * side, size=n, replace=False))
    return np.stack([cells // side, cells % side], axis=1).astype(np.int64)


def _nearest_cells(coords: np.ndarray, available: np.ndarray, center: int, size: int) -> np.ndarray:
    """The `size` available indices closest to coords[center], ties by index."""
    dist = np.linalg.norm(coords[available] - coords[center], axis=1)
    order = np.lexsort((available, dist))
    return np.sort(available[order[:size]])


def generate_bag(
    bag_id: str,
    grade: int,
    spec: SynthSpec,
    signatures: np.ndarray,
    seed: np.random.SeedSequence,
) -> Bag:
    """
    Generate one bag of the given grade.

    Args:
        bag_id: Identifier of the new bag
        grade: Worst grade to plant (0 plants nothing)
        spec: Dataset parameters
        signatures: Output of grade_signatures
        seed: Per-bag seed sequence

    Returns:
        Bag whose annotations record every planted region
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(spec.min_patches, spec.max_patches + 1))
    coords = _grid_coords(n, rng)
    features = rng.normal(0.0, spec.noise_scale, size=(n, spec.feature_dim))

    annotations: List[RegionAnnotation] = []
    if grade > 0:
        planted = [grade] + [g for g in range(grade - 1, 0, -1) if rng.random() < spec.lower_grade_prob]
        n_regions = len(planted) * spec.region_count
        total = max(n_regions, int(round(spec.tumor_fraction * n)))
        region_size = max(1, total // n_regions)
        available = np.arange(n)
        for g in planted:
            for _ in range(spec.region_count):
                if available.size == 0:
                    break
                center = int(rng.choice(available))
                members = _nearest_cells(coords, available, center, min(region_size, available.size))
                available = np.setdiff1d(available, members)
                features[members] += spec.signal_scale * signatures[g]
                annotations.append(RegionAnnotation(
                    region_id=f"{bag_id}_r{len(annotations)}",
                    patch_indices=tuple(int(i) for i in members),
                    region_grade=int(g),
                ))

    label = max((r.region_grade for r in annotations), default=0)
    return Bag(
        bag_id=bag_id,
        grade=label,
        coords=coords,
        features=features.astype(np.float32),
        num_classes=spec.num_classes,
        annotations=annotations,
    ).validate()


def generate_synthetic_dataset(spec: SynthSpec, seed: int, jobs: Optional[int] = 1) -> List[Bag]:
    """
    Generate the planted dataset.

    Bag labels follow the worst-grade rule; normal bags hold pure noise.
    Output is identical for a given (spec, seed) whatever the job count.

    Args:
        spec: Dataset parameters
        seed: Master seed
        jobs: joblib worker count

    Returns:
        List of bags ordered by bag_id
    """
    spec.validate()
    root = np.random.SeedSequence(seed)
    sig_seed, label_seed, bag_seed = root.spawn(3)
    signatures = grade_signatures(spec, np.random.default_rng(sig_seed))

    labels = np.repeat(np.arange(spec.num_classes), spec.class_counts)
    labels = np.random.default_rng(label_seed).permutation(labels)
    bag_seeds = bag_seed.spawn(len(labels))
    width = max(4, len(str(len(labels))))

    tasks = [
        delayed(generate_bag)(f"bag_{i:0{width}d}", int(grade), spec, signatures, bag_seeds[i])
        for i, grade in enumerate(labels)
    ]
    bags = Parallel(n_jobs=jobs)(tasks)
    logger.info("Generated %d synthetic bags (class counts %s, seed %d)", len(bags), spec.class_counts, seed)
    return bags


def planting_log(bag: Bag) -> Tuple[int, ...]:
    """Grades planted in a bag, read back from its annotations."""
    return tuple(sorted({r.region_grade for r in bag.annotations}))
