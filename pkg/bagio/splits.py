"""
Dataset Splits and Class-Balanced Sampling

- stratified_kfold: grade-stratified cross-validation folds
- class_balanced_weights: effective-number class weights for sampling
"""

from __future__ import annotations

import logging
from typing import List, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold, train_test_split

from .models import Bag, BagError, Fold, SplitSpec, class_histogram

logger = logging.getLogger(__name__)


class SplitError(BagError):
    """The dataset cannot be split as requested."""


def _stratified_subset(indices: np.ndarray, labels: np.ndarray, fraction: float, seed: int):
    """Split indices into (kept, taken) with `fraction` of them taken, stratified by label."""
    if fraction <= 0.0:
        return indices, indices[:0]
    if fraction >= 1.0:
        return indices[:0], indices
    counts = np.bincount(labels)
    stratify = labels if counts[counts > 0].min() >= 2 else None
    kept, taken = train_test_split(indices, test_size=fraction, stratify=stratify, random_state=seed)
    return np.sort(kept), np.sort(taken)


def stratified_kfold(bags: Sequence[Bag], spec: SplitSpec, seed: int) -> List[Fold]:
    """
    Build grade-stratified folds.

    With fold_count >= 2 the test partitions come from StratifiedKFold, so
    they are pairwise disjoint and together cover the dataset; the remaining
    bags are split into train and validation in the ratio of the spec's
    train/val fractions. With fold_count == 1 a single split uses the
    fractions directly.

    Args:
        bags: Dataset
        spec: Fold count and fractions
        seed: Shuffle seed

    Returns:
        One Fold per spec.fold_count

    Raises:
        SplitError if a present class has fewer bags than folds
    """
    labels = np.asarray([bag.grade for bag in bags], dtype=np.int64)
    num_classes = max(bag.num_classes for bag in bags)
    counts = class_histogram(labels, num_classes)
    present = counts[counts > 0]
    if spec.fold_count > 1 and present.min() < spec.fold_count:
        short = [c for c in range(num_classes) if 0 < counts[c] < spec.fold_count]
        raise SplitError(f"classes {short} have fewer members than {spec.fold_count} folds")

    indices = np.arange(len(bags))
    non_test = spec.train_fraction + spec.val_fraction
    val_share = spec.val_fraction / non_test if non_test > 0 else 0.0
    folds: List[Fold] = []

    if spec.fold_count == 1:
        rest, test = _stratified_subset(indices, labels, spec.test_fraction, seed)
        train, val = _stratified_subset(rest, labels[rest], val_share, seed)
        folds.append(Fold(0, train.tolist(), val.tolist(), test.tolist()))
    else:
        splitter = StratifiedKFold(n_splits=spec.fold_count, shuffle=True, random_state=seed)
        for k, (rest, test) in enumerate(splitter.split(indices, labels)):
            train, val = _stratified_subset(rest, labels[rest], val_share, seed + k)
            folds.append(Fold(k, train.tolist(), val.tolist(), sorted(test.tolist())))

    for fold in folds:
        logger.debug("fold %d: train=%d val=%d test=%d", fold.index, len(fold.train), len(fold.val), len(fold.test))
    return folds


def class_balanced_weights(class_counts: Sequence[int], beta: float = 0.999) -> np.ndarray:
    """
    Per-class sampling weights from the effective number of samples.

    weight_c is proportional to (1 - beta) / (1 - beta ** n_c), normalised to
    sum to 1. beta = 0 gives uniform weights.

    Raises:
        SplitError if beta is outside [0, 1) or a count is below 1
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if not 0.0 <= beta < 1.0:
        raise SplitError(f"beta must lie in [0, 1), got {beta}")
    if counts.size == 0 or np.any(counts < 1):
        raise SplitError("every class count must be at least 1")
    effective = (1.0 - np.power(beta, counts)) / (1.0 - beta)
    weights = 1.0 / effective
    return weights / weights.sum()


def bag_sampling_weights(labels: Sequence[int], num_classes: int, beta: float = 0.999) -> np.ndarray:
    """
    Per-bag draw probabilities that realise class_balanced_weights.

    Each class receives its class weight in total, split evenly among its bags.
    Classes absent from `labels` get no mass.
    """
    labels = np.asarray(labels, dtype=np.int64)
    counts = class_histogram(labels, num_classes)
    present = counts > 0
    class_w = np.zeros(num_classes)
    class_w[present] = class_balanced_weights(counts[present], beta)
    per_bag = class_w[labels] / counts[labels]
    return per_bag / per_bag.sum()
