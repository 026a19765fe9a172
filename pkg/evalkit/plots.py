"""
Evaluation Figures

Attention and per-class probability heatmaps drawn on the tile grid, and
precision-recall curves.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from bagio import Bag

from .models import BagResult

logger = logging.getLogger(__name__)


def grid_image(coords: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Place per-patch values at their (row, column) tile; background is NaN."""
    coords = np.asarray(coords, dtype=np.int64)
    origin = coords.min(axis=0)
    shape = coords.max(axis=0) - origin + 1
    image = np.full(tuple(shape), np.nan)
    image[coords[:, 0] - origin[0], coords[:, 1] - origin[1]] = values
    return image


def _save(fig, save_path: Path) -> Path:
    save_path = Path(save_path)
    save_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(save_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    logger.debug("Figure saved to %s", save_path)
    return save_path


def draw_attention_heatmap(bag: Bag, result: BagResult, save_path: Path, class_names: Sequence[str]) -> Path:
    """Normalised attention a_n over the tile grid, ROI patches outlined."""
    fig, ax = plt.subplots(figsize=(7, 6))
    cmap = plt.get_cmap("jet").copy()
    cmap.set_bad("white")
    im = ax.imshow(grid_image(bag.coords, result.heatmap), cmap=cmap, vmin=0.0, vmax=1.0)
    origin = bag.coords.min(axis=0)
    for idx in result.roi:
        s, t = bag.coords[idx] - origin
        ax.add_patch(plt.Rectangle((t - 0.5, s - 0.5), 1, 1, fill=False, edgecolor="black", linewidth=1.2))
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="normalised attention")
    ax.set_title(
        f"{bag.bag_id}: true {class_names[result.label]}, predicted {class_names[result.prediction]}",
        fontsize=11, fontweight="bold",
    )
    ax.set_xticks([])
    ax.set_yticks([])
    return _save(fig, save_path)


def draw_probability_heatmaps(bag: Bag, result: BagResult, save_path: Path, class_names: Sequence[str]) -> Path:
    """One panel per grade class with the patch probabilities of that class."""
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad("white")
    fig, axes = plt.subplots(1, len(class_names), figsize=(4 * len(class_names), 4))
    for code, (ax, name) in enumerate(zip(np.atleast_1d(axes), class_names)):
        im = ax.imshow(grid_image(bag.coords, result.patch_probs[:, code]), cmap=cmap, vmin=0.0, vmax=1.0)
        ax.set_title(name, fontsize=11)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=list(np.atleast_1d(axes)), fraction=0.02, pad=0.02, label="patch probability")
    fig.suptitle(f"Grade probabilities of {bag.bag_id}", fontsize=13, fontweight="bold")
    return _save(fig, save_path)


def draw_pr_curves(curves: pd.DataFrame, average_precision: Dict[str, float], save_path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 6))
    for name, group in curves.groupby("class", sort=False):
        ax.step(group["recall"], group["precision"], where="post",
                label=f"{name} (AP {average_precision.get(name, float('nan')):.3f})")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Precision-recall per grade", fontsize=12, fontweight="bold")
    ax.legend(loc="lower left")
    ax.grid(True, alpha=0.3)
    return _save(fig, save_path)
