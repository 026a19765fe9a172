"""
Evaluation Package

Bag-level metrics, attention heatmaps, ROI localization scoring, report
files and the ablation runner.
"""

from .models import BagResult, EvalReport, LocalizationScore, MacroMetrics, MetricError, summarize_folds
from .metrics import auc_low_high, confusion, macro_metrics, mcc, pr_curves, quadratic_weighted_kappa
from .localization import heatmap, is_covered, localization, region_prediction, roi_select
from .report import (
    EvalOptions,
    bag_results,
    build_report,
    evaluate,
    evaluate_folds,
    find_checkpoints,
    heatmap_for_bag,
    resolve_checkpoint,
    select_split,
)
from .ablation import VARIANTS, AblationResult, planted_attention, run_ablation

__all__ = [
    "BagResult",
    "EvalReport",
    "LocalizationScore",
    "MacroMetrics",
    "MetricError",
    "summarize_folds",
    "auc_low_high",
    "confusion",
    "macro_metrics",
    "mcc",
    "pr_curves",
    "quadratic_weighted_kappa",
    "heatmap",
    "is_covered",
    "localization",
    "region_prediction",
    "roi_select",
    "EvalOptions",
    "bag_results",
    "build_report",
    "evaluate",
    "evaluate_folds",
    "find_checkpoints",
    "heatmap_for_bag",
    "resolve_checkpoint",
    "select_split",
    "VARIANTS",
    "AblationResult",
    "planted_attention",
    "run_ablation",
]
