"""
Evaluation Reports

Runs a trained checkpoint over a split and writes the metric files and
figures behind `racr eval` and `racr heatmap`:

    <out>/metrics.json          scalar metrics, confusion, localization
    <out>/confusion.csv         rows true grade, columns predicted grade
    <out>/bag_predictions.csv   per-bag label, prediction and probabilities
    <out>/pr_curves.csv / .png  one-vs-rest precision-recall per grade
    <out>/heatmaps/<bag>_attention.png, <bag>_probability.png
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from attgnn import CheckpointError
from bagio import Bag, GradeScheme, stratified_kfold
from rankloss import patch_probs
from trainer import RacrMil, TrainConfig, load_trained, predict, prepare_bags

from .localization import heatmap, localization, roi_select
from .metrics import auc_low_high, confusion, macro_metrics, mcc, pr_curves, quadratic_weighted_kappa
from .models import BagResult, EvalReport, MetricError, json_safe, summarize_folds
from .plots import draw_attention_heatmap, draw_pr_curves, draw_probability_heatmaps

logger = logging.getLogger(__name__)

CHECKPOINT_MANIFEST = "checkpoint.json"


@dataclass
class EvalOptions:
    """
    Attributes:
        roi_mode: "max_non_normal" or "predicted" (see roi_select)
        min_overlap: Minimum region fraction an ROI must share to cover it
        heatmaps: Write per-bag attention and probability figures
    """
    roi_mode: str = "max_non_normal"
    min_overlap: float = 0.0
    heatmaps: bool = True


def bag_results(
    model: RacrMil,
    cfg: TrainConfig,
    bags: Sequence[Bag],
    graph_cache: Optional[Path] = None,
    roi_mode: str = "max_non_normal",
) -> List[BagResult]:
    """Eval-mode predictions, attention heatmaps and ROIs of every bag."""
    prepared = prepare_bags(bags, cfg, graph_cache)
    results = []
    for bag, forward in zip(bags, predict(model, prepared)):
        attention = forward.attention.detach().double().numpy()
        probs = patch_probs(forward.scores.detach().double()).numpy()
        normalised, degenerate = heatmap(attention)
        results.append(BagResult(
            bag_id=bag.bag_id,
            label=bag.grade,
            prediction=int(forward.likelihood.argmax()),
            probabilities=forward.probabilities.detach().double().numpy(),
            attention=attention,
            heatmap=normalised,
            patch_probs=probs,
            roi=roi_select(attention, probs, roi_mode),
            heatmap_degenerate=degenerate,
        ))
    return results


def build_report(
    results: Sequence[BagResult],
    bags: Sequence[Bag],
    scheme: GradeScheme,
    min_overlap: float = 0.0,
) -> Tuple[EvalReport, pd.DataFrame]:
    """EvalReport plus the precision-recall curve table."""
    if not results:
        raise MetricError("no bags to evaluate")
    labels = [r.label for r in results]
    probabilities = np.stack([r.probabilities for r in results])
    conf = confusion(labels, [r.prediction for r in results], scheme.num_classes)
    kappa, kappa_degenerate = quadratic_weighted_kappa(conf)
    mcc_value, mcc_degenerate = mcc(conf)
    curves, ap = pr_curves(probabilities, labels, scheme.class_names)
    report = EvalReport(
        class_names=scheme.class_names,
        confusion=conf,
        macro=macro_metrics(conf),
        kappa=kappa,
        kappa_degenerate=kappa_degenerate,
        mcc=mcc_value,
        mcc_degenerate=mcc_degenerate,
        auc=auc_low_high(probabilities, labels, scheme),
        average_precision=ap,
        localization=localization(results, bags, min_overlap),
    )
    return report, curves


def select_split(bags: Sequence[Bag], cfg: TrainConfig, fold: Optional[int]) -> List[Bag]:
    """Test bags of the given fold, or every bag when fold is None."""
    if fold is None:
        return list(bags)
    folds = stratified_kfold(bags, cfg.split_spec(), cfg.seed)
    if not 0 <= fold < len(folds):
        raise MetricError(f"fold {fold} outside [0, {len(folds) - 1}]")
    return [bags[i] for i in folds[fold].test]


def write_report(
    report: EvalReport,
    curves: pd.DataFrame,
    results: Sequence[BagResult],
    out_dir: Path,
    metadata: Optional[dict] = None,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    if metadata:
        payload["checkpoint"] = json_safe({k: v for k, v in metadata.items() if k != "config"})
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)
    (out_dir / "metrics.json").write_text(text, encoding="utf-8")

    frame = pd.DataFrame(report.confusion, columns=list(report.class_names))
    frame.insert(0, "true", list(report.class_names))
    frame.to_csv(out_dir / "confusion.csv", index=False)

    rows = []
    for r in results:
        row = {"bag_id": r.bag_id, "label": r.label, "prediction": r.prediction, "roi_size": len(r.roi)}
        row.update({f"prob_{name}": float(p) for name, p in zip(report.class_names, r.probabilities)})
        rows.append(row)
    pd.DataFrame(rows).to_csv(out_dir / "bag_predictions.csv", index=False)

    curves.to_csv(out_dir / "pr_curves.csv", index=False)
    if not curves.empty:
        draw_pr_curves(curves, report.average_precision, out_dir / "pr_curves.png")
    return out_dir


def write_heatmaps(results: Sequence[BagResult], bags: Sequence[Bag], out_dir: Path,
                   class_names: Sequence[str]) -> List[Path]:
    by_id = {bag.bag_id: bag for bag in bags}
    paths = []
    for result in results:
        bag = by_id[result.bag_id]
        paths.append(draw_attention_heatmap(bag, result, Path(out_dir) / f"{bag.bag_id}_attention.png", class_names))
        paths.append(draw_probability_heatmaps(bag, result, Path(out_dir) / f"{bag.bag_id}_probability.png",
                                               class_names))
    return paths


def evaluate(
    checkpoint_dir: Path,
    bags: Sequence[Bag],
    out_dir: Path,
    fold: Optional[int] = None,
    all_bags: bool = False,
    graph_cache: Optional[Path] = None,
    options: EvalOptions = EvalOptions(),
) -> EvalReport:
    """
    Evaluate one checkpoint and write its report files.

    Args:
        fold: Fold whose test split is evaluated; defaults to the fold the
            checkpoint was trained on
        all_bags: Evaluate every bag instead of a test split

    Returns:
        The EvalReport
    """
    model, cfg, metadata = load_trained(resolve_checkpoint(checkpoint_dir))
    if fold is None and not all_bags:
        fold = metadata.get("fold")
    split = select_split(bags, cfg, None if all_bags else fold)
    logger.info("Evaluating %s on %d bags", checkpoint_dir, len(split))

    results = bag_results(model, cfg, split, graph_cache, options.roi_mode)
    report, curves = build_report(results, split, cfg.grade_scheme, options.min_overlap)
    write_report(report, curves, results, out_dir, metadata)
    if options.heatmaps:
        write_heatmaps(results, split, Path(out_dir) / "heatmaps", cfg.grade_scheme.class_names)
    return report


def find_checkpoints(path: Path) -> List[Path]:
    """
    Checkpoint directories under path.

    Accepts a checkpoint directory, a training output directory holding
    checkpoint/, or a parent of several training output directories.
    """
    path = Path(path)
    if (path / CHECKPOINT_MANIFEST).is_file():
        return [path]
    if (path / "checkpoint" / CHECKPOINT_MANIFEST).is_file():
        return [path / "checkpoint"]
    found = sorted(d / "checkpoint" for d in path.iterdir()
                   if d.is_dir() and (d / "checkpoint" / CHECKPOINT_MANIFEST).is_file()) if path.is_dir() else []
    if not found:
        raise CheckpointError(f"no checkpoint found under {path}")
    return found


def resolve_checkpoint(path: Path) -> Path:
    """The single checkpoint under path; several fold checkpoints are an error."""
    found = find_checkpoints(path)
    if len(found) > 1:
        raise CheckpointError(f"{path} holds {len(found)} checkpoints; evaluate them with evaluate_folds")
    return found[0]


def evaluate_folds(
    path: Path,
    bags: Sequence[Bag],
    out_dir: Path,
    graph_cache: Optional[Path] = None,
    options: EvalOptions = EvalOptions(),
) -> Tuple[List[EvalReport], Dict[str, Tuple[float, float]]]:
    """
    Evaluate every fold checkpoint under path on its own test split.

    Writes one report directory per fold and fold_summary.csv with the mean
    and standard deviation of each metric.
    """
    out_dir = Path(out_dir)
    reports = []
    for checkpoint in find_checkpoints(path):
        name = checkpoint.parent.name if checkpoint.name == "checkpoint" else checkpoint.name
        reports.append(evaluate(checkpoint, bags, out_dir / name, graph_cache=graph_cache, options=options))
    summary = summarize_folds(reports)
    pd.DataFrame(
        [{"metric": name, "mean": mean, "std": std} for name, (mean, std) in summary.items()]
    ).to_csv(out_dir / "fold_summary.csv", index=False)
    return reports, summary


def heatmap_for_bag(checkpoint_dir: Path, bag: Bag, out_dir: Path, roi_mode: str = "max_non_normal") -> List[Path]:
    """Attention and probability heatmaps of a single bag."""
    model, cfg, _ = load_trained(resolve_checkpoint(checkpoint_dir))
    results = bag_results(model, cfg, [bag], None, roi_mode)
    return write_heatmaps(results, [bag], out_dir, cfg.grade_scheme.class_names)
