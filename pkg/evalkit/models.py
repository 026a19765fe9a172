"""
Data Models for Evaluation

- MetricError: Raised for inputs no metric is defined on
- MacroMetrics: One-vs-rest precision / recall / F1 averaged over classes
- BagResult: Per-bag predictions, attention and ROI
- LocalizationScore: ROI sensitivity and saliency for one group of regions
- EvalReport: Everything `racr eval` reports for one split
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np


class MetricError(ValueError):
    """A metric was asked for on an empty or malformed input."""


@dataclass(frozen=True)
class MacroMetrics:
    """
    Attributes:
        precision / recall / f1: Unweighted means over classes
        per_class_accuracy: Fraction of each class's bags predicted correctly
        zero_support: Class codes with no true bags (they contribute 0)
    """
    precision: float
    recall: float
    f1: float
    per_class_accuracy: Tuple[float, ...]
    zero_support: Tuple[int, ...] = ()


@dataclass
class BagResult:
    """
    Evaluation output of one bag.

    Attributes:
        attention: Raw patch attention w_n
        heatmap: Min-max normalised attention a_n
        patch_probs: (N, C) per-patch class probabilities
        probabilities: (C,) bag class probabilities
        roi: Sorted patch indices of the region of interest
    """
    bag_id: str
    label: int
    prediction: int
    probabilities: np.ndarray
    attention: np.ndarray
    heatmap: np.ndarray
    patch_probs: np.ndarray
    roi: np.ndarray
    heatmap_degenerate: bool = False

    @property
    def correct(self) -> bool:
        return self.label == self.prediction


@dataclass(frozen=True)
class LocalizationScore:
    """Annotated-region coverage of one group ("correct", "incorrect" or "all")."""
    regions: int
    covered: int
    saliency: float

    @property
    def sensitivity(self) -> float:
        return self.covered / self.regions if self.regions else float("nan")


@dataclass
class EvalReport:
    """
    Bag-level metrics of one evaluated split.

    The confusion matrix rows are true grades and columns predicted grades.
    """
    class_names: Tuple[str, ...]
    confusion: np.ndarray
    macro: MacroMetrics
    kappa: float
    kappa_degenerate: bool
    mcc: float
    mcc_degenerate: bool
    auc: Optional[float]
    average_precision: Dict[str, float] = field(default_factory=dict)
    localization: Optional[Dict[str, LocalizationScore]] = None

    @property
    def bag_count(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.confusion.sum())

    def scalar_metrics(self) -> Dict[str, float]:
        """Flat metric name -> value mapping; undefined values are NaN."""
        row = {
            "accuracy": self.accuracy,
            "macro_precision": self.macro.precision,
            "macro_recall": self.macro.recall,
            "macro_f1": self.macro.f1,
            "kappa": self.kappa,
            "mcc": self.mcc,
            "auc": self.auc if self.auc is not None else math.nan,
        }
        for name, acc in zip(self.class_names, self.macro.per_class_accuracy):
            row[f"accuracy_{name}"] = acc
        for group, score in (self.localization or {}).items():
            row[f"sensitivity_{group}"] = score.sensitivity
            row[f"saliency_{group}"] = score.saliency
        return row

    def to_dict(self) -> dict:
        """JSON-ready summary; undefined (NaN) values become None."""
        return json_safe({
            "class_names": list(self.class_names),
            "bag_count": self.bag_count,
            "confusion": self.confusion.astype(int).tolist(),
            "metrics": self.scalar_metrics(),
            "zero_support": [self.class_names[c] for c in self.macro.zero_support],
            "kappa_degenerate": self.kappa_degenerate,
            "mcc_degenerate": self.mcc_degenerate,
            "average_precision": dict(self.average_precision),
            "localization": None if self.localization is None else {
                group: {"regions": s.regions, "covered": s.covered,
                        "sensitivity": s.sensitivity, "saliency": s.saliency}
                for group, s in self.localization.items()
            },
        })


def json_safe(value):
    """Copy of a nested dict / list payload with NaN and infinite floats replaced by None."""
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def summarize_folds(reports: List[EvalReport]) -> Dict[str, Tuple[float, float]]:
    """Mean and standard deviation of every scalar metric over folds, ignoring NaN."""
    if not reports:
        raise MetricError("no fold reports to summarise")
    names = list(reports[0].scalar_metrics())
    summary = {}
    for name in names:
        values = np.array([r.scalar_metrics().get(name, math.nan) for r in reports], dtype=np.float64)
        finite = values[~np.isnan(values)]
        if finite.size == 0:
            summary[name] = (math.nan, math.nan)
        else:
            summary[name] = (float(finite.mean()), float(finite.std()))
    return summary
