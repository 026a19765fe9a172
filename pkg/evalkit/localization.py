"""
Attention Heatmaps and ROI Localization

Min-max heatmaps over patch attention, region-of-interest selection and the
sensitivity / saliency of ROIs against annotated tumour regions.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from bagio import Bag

from .models import BagResult, LocalizationScore

logger = logging.getLogger(__name__)

ROI_FRACTION = 0.25
ROI_MIN_PROB = 0.5
ROI_MODES = ("max_non_normal", "predicted")
GROUPS = ("correct", "incorrect", "all")


def heatmap(w: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    a_n = (w_n - min w) / (max w - min w).

    Returns:
        (a, degenerate). Constant attention gives all zeros and degenerate=True.
    """
    w = np.asarray(w, dtype=np.float64)
    span = w.max() - w.min()
    if span <= 0:
        logger.warning("Constant attention over %d patches; heatmap is all zeros", w.size)
        return np.zeros_like(w), True
    return (w - w.min()) / span, False


def roi_select(
    w: np.ndarray,
    probs: np.ndarray,
    mode: str = "max_non_normal",
    min_prob: float = ROI_MIN_PROB,
) -> np.ndarray:
    """
    Patches among the top quarter by attention whose grade probability exceeds min_prob.

    Args:
        w: (N,) patch attention
        probs: (N, C) patch class probabilities
        mode: "max_non_normal" uses max over grades >= 1;
            "predicted" uses the patch's predicted-class probability

    Returns:
        Sorted int64 patch indices. Attention ties go to the smaller index.
    """
    if mode not in ROI_MODES:
        raise ValueError(f"unknown ROI mode {mode!r}; expected one of {ROI_MODES}")
    w = np.asarray(w, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    count = math.ceil(w.size * ROI_FRACTION)
    candidates = np.lexsort((np.arange(w.size), -w))[:count]
    if mode == "max_non_normal":
        confidence = probs[:, 1:].max(axis=1) if probs.shape[1] > 1 else np.zeros(len(w))
    else:
        confidence = probs.max(axis=1)
    return np.sort(candidates[confidence[candidates] > min_prob]).astype(np.int64)


def region_prediction(patch_probs: np.ndarray, indices: Sequence[int]) -> int:
    """Majority argmax grade over a region's patches, ties to the lower grade."""
    votes = np.bincount(np.argmax(patch_probs[list(indices)], axis=1), minlength=patch_probs.shape[1])
    return int(np.argmax(votes))


def is_covered(indices: Sequence[int], roi: np.ndarray, min_overlap: float = 0.0) -> bool:
    """
    A region is covered when it shares at least one patch with the ROI, and at
    least ceil(min_overlap * |region|) patches when min_overlap > 0.
    """
    shared = len(set(int(i) for i in indices) & set(int(i) for i in roi))
    return shared >= max(1, math.ceil(min_overlap * len(indices)))


def localization(
    results: Sequence[BagResult],
    bags: Sequence[Bag],
    min_overlap: float = 0.0,
) -> Optional[Dict[str, LocalizationScore]]:
    """
    ROI sensitivity and saliency over every annotated region.

    Regions are grouped by whether their majority patch prediction equals the
    annotated grade. Saliency is the mean, over regions, of the mean patch
    probability of the annotated grade.

    Returns:
        Scores keyed by "correct", "incorrect" and "all", or None when no bag
        carries annotations
    """
    by_id = {bag.bag_id: bag for bag in bags}
    covered: Dict[str, list] = {g: [] for g in GROUPS}
    saliency: Dict[str, list] = {g: [] for g in GROUPS}
    for result in results:
        bag = by_id[result.bag_id]
        for region in bag.annotations:
            hit = is_covered(region.patch_indices, result.roi, min_overlap)
            conf = float(result.patch_probs[list(region.patch_indices), region.region_grade].mean())
            group = "correct" if region_prediction(result.patch_probs, region.patch_indices) == region.region_grade \
                else "incorrect"
            for g in (group, "all"):
                covered[g].append(hit)
                saliency[g].append(conf)

    if not covered["all"]:
        logger.info("No annotated regions; localization report omitted")
        return None
    return {
        g: LocalizationScore(
            regions=len(covered[g]),
            covered=int(sum(covered[g])),
            saliency=float(np.mean(saliency[g])) if saliency[g] else float("nan"),
        )
        for g in GROUPS
    }
