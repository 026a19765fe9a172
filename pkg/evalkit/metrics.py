"""
Bag-Level Metrics

Confusion-matrix metrics (macro precision / recall / F1, quadratic-weighted
kappa, multiclass MCC), the low- vs high-risk AUC and per-class
precision-recall curves.
"""

from __future__ import annotations

import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import average_precision_score, confusion_matrix, precision_recall_curve, roc_auc_score

from bagio import GradeScheme

from .models import MacroMetrics, MetricError

logger = logging.getLogger(__name__)


def confusion(labels: Sequence[int], predictions: Sequence[int], num_classes: int) -> np.ndarray:
    """C x C counts, rows true grade, columns predicted grade."""
    if len(labels) == 0:
        raise MetricError("cannot build a confusion matrix from zero bags")
    return confusion_matrix(labels, predictions, labels=list(range(num_classes))).astype(np.int64)


def _check(conf: np.ndarray) -> np.ndarray:
    conf = np.asarray(conf, dtype=np.float64)
    if conf.ndim != 2 or conf.shape[0] != conf.shape[1] or conf.shape[0] == 0:
        raise MetricError(f"confusion matrix must be square, got shape {conf.shape}")
    if np.any(conf < 0):
        raise MetricError("confusion matrix has negative counts")
    if conf.sum() == 0:
        raise MetricError("confusion matrix is empty")
    return conf


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def macro_metrics(conf: np.ndarray) -> MacroMetrics:
    """
    One-vs-rest precision, recall and F1 per class, averaged without weights.

    Classes without true bags contribute 0 to every mean and are listed in
    zero_support.

    Raises:
        MetricError on an empty or non-square matrix
    """
    conf = _check(conf)
    tp = np.diag(conf)
    support = conf.sum(axis=1)
    predicted = conf.sum(axis=0)

    precision = _safe_ratio(tp, predicted)
    recall = _safe_ratio(tp, support)
    f1 = _safe_ratio(2 * precision * recall, precision + recall)

    zero = tuple(int(c) for c in np.flatnonzero(support == 0))
    if zero:
        logger.warning("Classes %s have no true bags; they count as 0 in the macro averages", list(zero))
    return MacroMetrics(
        precision=float(precision.mean()),
        recall=float(recall.mean()),
        f1=float(f1.mean()),
        per_class_accuracy=tuple(float(r) for r in recall),
        zero_support=zero,
    )


def quadratic_weighted_kappa(conf: np.ndarray) -> Tuple[float, bool]:
    """
    Cohen's kappa with weights (i - j)^2 / (C - 1)^2.

    Returns:
        (kappa, degenerate). When the expected weighted disagreement is zero
        (one class observed on both axes) kappa is reported as 0 and flagged.
    """
    conf = _check(conf)
    n = conf.shape[0]
    if n < 2:
        logger.warning("Quadratic-weighted kappa is undefined for a single class")
        return 0.0, True
    idx = np.arange(n)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (n - 1) ** 2

    observed = conf / conf.sum()
    expected = np.outer(conf.sum(axis=1), conf.sum(axis=0)) / conf.sum() ** 2
    denominator = float((weights * expected).sum())
    if denominator == 0.0:
        logger.warning("Quadratic-weighted kappa has degenerate marginals; reporting 0")
        return 0.0, True
    return 1.0 - float((weights * observed).sum()) / denominator, False


def mcc(conf: np.ndarray) -> Tuple[float, bool]:
    """
    Multiclass Matthews correlation coefficient.

    Returns:
        (mcc, degenerate). 0 and flagged when either variance term vanishes.
    """
    conf = _check(conf)
    s = conf.sum()
    c = np.trace(conf)
    t = conf.sum(axis=1)
    p = conf.sum(axis=0)
    cov_tp = c * s - float(t @ p)
    cov_pp = s * s - float(p @ p)
    cov_tt = s * s - float(t @ t)
    if cov_pp == 0.0 or cov_tt == 0.0:
        logger.warning("MCC denominator vanishes; reporting 0")
        return 0.0, True
    return float(cov_tp / np.sqrt(cov_pp * cov_tt)), False


def auc_low_high(probabilities: np.ndarray, labels: Sequence[int], scheme: GradeScheme) -> Optional[float]:
    """
    AUC of low-risk against high-risk bags.

    Normal bags are excluded. Positives are the scheme's high-risk grades and
    the score is the bag probability mass on those grades.

    Returns:
        The AUC, or None when either side has no bags
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    high = list(scheme.high_risk)
    keep = np.isin(labels, list(scheme.low_risk) + high)
    positive = np.isin(labels[keep], high)
    if positive.all() or not positive.any():
        logger.warning("Low- vs high-risk AUC is undefined: one side has no bags")
        return None
    scores = probabilities[keep][:, high].sum(axis=1)
    return float(roc_auc_score(positive.astype(np.int64), scores))


def pr_curves(
    probabilities: np.ndarray, labels: Sequence[int], class_names: Sequence[str]
) -> Tuple[pd.DataFrame, Dict[str, float]]:
    """
    One-vs-rest precision-recall curve and average precision per class.

    Classes without true bags are skipped with a warning.

    Returns:
        (curves, average_precision). curves has columns class, precision,
        recall, threshold; the final curve point has no threshold (NaN).
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    frames = []
    ap = {}
    for code, name in enumerate(class_names):
        truth = (labels == code).astype(np.int64)
        if truth.sum() == 0:
            logger.warning("No %s bags; precision-recall curve skipped", name)
            continue
        precision, recall, thresholds = precision_recall_curve(truth, probabilities[:, code])
        frames.append(pd.DataFrame({
            "class": name,
            "precision": precision,
            "recall": recall,
            "threshold": np.append(thresholds, np.nan),
        }))
        ap[name] = float(average_precision_score(truth, probabilities[:, code]))
    curves = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["class", "precision", "recall", "threshold"])
    return curves, ap
