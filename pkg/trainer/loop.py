"""
Training Loop

Class-balanced bag sampling, AdamW updates over batches of bags, validation
macro-F1 after every epoch, early stopping and best-checkpoint retention.
Bags are processed one at a time in a fixed order, so a run is reproducible
from cfg.seed alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from sklearn.metrics import accuracy_score, f1_score
from torch import Tensor
from torch.utils.data import WeightedRandomSampler
from tqdm import tqdm

from attgnn import GraphMode, graph_tensors, load_checkpoint, read_checkpoint_metadata, save_checkpoint
from bagio import Bag, Fold, bag_sampling_weights
from graphbuild import load_graph

from .config import TrainConfig
from .model import BagForward, RacrMil, build_model
from .objective import NonFiniteLossError, TrainingError, total_loss

logger = logging.getLogger(__name__)

CHECKPOINT_DIRNAME = "checkpoint"
LOG_NAME = "training_log.csv"


class TrainingDivergedError(TrainingError):
    """The loss became non-finite; the best checkpoint so far is kept."""

    def __init__(self, message: str, checkpoint_dir: Optional[Path]):
        super().__init__(message)
        self.checkpoint_dir = checkpoint_dir


@dataclass
class PreparedBag:
    """A bag with its tensors ready for the model."""
    bag: Bag
    features: Tensor
    graphs: Dict[str, Tensor]

    @property
    def label(self) -> int:
        return self.bag.grade


@dataclass
class TrainResult:
    model: RacrMil
    checkpoint_dir: Path
    best_epoch: int
    best_val_f1: float
    log: pd.DataFrame


def prepare_bags(bags: Sequence[Bag], cfg: TrainConfig, graph_cache: Optional[Path] = None) -> List[PreparedBag]:
    """Attach feature tensors and, unless the graph mode is NONE, graph tensors."""
    prepared = []
    needs_graphs = cfg.graph_mode_enum is not GraphMode.NONE
    diffusion = cfg.diffusion_config()
    for bag in bags:
        graphs = graph_tensors(load_graph(bag, graph_cache, diffusion)) if needs_graphs else {}
        prepared.append(PreparedBag(bag, torch.as_tensor(bag.features, dtype=torch.float32), graphs))
    return prepared


def class_balanced_sampler(labels: Sequence[int], cfg: TrainConfig, generator: torch.Generator) -> WeightedRandomSampler:
    weights = bag_sampling_weights(labels, cfg.num_classes, cfg.beta_cb)
    return WeightedRandomSampler(
        torch.as_tensor(weights, dtype=torch.double),
        num_samples=len(labels),
        replacement=True,
        generator=generator,
    )


@torch.no_grad()
def predict(model: RacrMil, bags: Sequence[PreparedBag]) -> List[BagForward]:
    """Eval-mode forward pass of every bag."""
    model.eval()
    return [model(p.features, p.graphs) for p in bags]


def macro_f1(labels: Sequence[int], predictions: Sequence[int], num_classes: int) -> float:
    return float(f1_score(labels, predictions, labels=list(range(num_classes)), average="macro", zero_division=0))


def evaluate_split(model: RacrMil, bags: Sequence[PreparedBag], num_classes: int) -> Tuple[float, float]:
    """(macro-F1, accuracy) of the bag-level argmax predictions."""
    if not bags:
        return float("nan"), float("nan")
    predictions = [int(f.likelihood.argmax()) for f in predict(model, bags)]
    labels = [p.label for p in bags]
    return macro_f1(labels, predictions, num_classes), float(accuracy_score(labels, predictions))


def _train_epoch(
    model: RacrMil,
    optimizer: torch.optim.Optimizer,
    bags: Sequence[PreparedBag],
    order: Sequence[int],
    cfg: TrainConfig,
    epoch: int,
    rng: np.random.Generator,
) -> Dict[str, float]:
    model.train()
    rows = []
    for start in range(0, len(order), cfg.batch_size):
        batch = [bags[i] for i in order[start:start + cfg.batch_size]]
        forwards = [model(p.features, p.graphs) for p in batch]
        breakdown = total_loss(model, forwards, [p.label for p in batch], cfg, epoch, rng=rng)
        optimizer.zero_grad()
        breakdown.total.backward()
        optimizer.step()
        model.head.renormalize_prototypes()
        for forward in forwards:
            model.head.ema_update(forward.h1.detach(), forward.scores.detach())
        rows.append(breakdown.as_row())
        rows[-1]["lambda1"] = breakdown.lambda1
    return pd.DataFrame(rows).mean().to_dict()


def train(
    bags: Sequence[Bag],
    fold: Fold,
    cfg: TrainConfig,
    out_dir: Path,
    graph_cache: Optional[Path] = None,
    progress: bool = True,
) -> TrainResult:
    """
    Train on fold.train, early-stop on fold.val macro-F1.

    Writes <out_dir>/checkpoint/ (best validation epoch) and
    <out_dir>/training_log.csv. Without validation bags the last epoch is kept.

    Raises:
        TrainingDivergedError if a loss term turns non-finite
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_dir = out_dir / CHECKPOINT_DIRNAME
    feature_dim = bags[0].feature_dim

    model = build_model(feature_dim, cfg)
    optimizer = torch.optim.AdamW(
        [p for p in model.parameters() if p.requires_grad],
        lr=cfg.learning_rate,
        betas=cfg.betas,
        weight_decay=cfg.weight_decay,
    )
    train_bags = prepare_bags([bags[i] for i in fold.train], cfg, graph_cache)
    val_bags = prepare_bags([bags[i] for i in fold.val], cfg, graph_cache)
    generator = torch.Generator().manual_seed(cfg.seed)
    sampler = class_balanced_sampler([p.label for p in train_bags], cfg, generator)
    rng = np.random.default_rng(cfg.seed)

    metadata = {"config": cfg.to_dict(), "feature_dim": feature_dim, "fold": fold.index}
    best_f1, best_epoch, stale, saved = -1.0, -1, 0, False
    rows = []
    epochs = tqdm(range(cfg.max_epochs), desc=f"Fold {fold.index}", disable=not progress)
    for epoch in epochs:
        order = list(sampler)
        try:
            row = _train_epoch(model, optimizer, train_bags, order, cfg, epoch, rng)
        except NonFiniteLossError as exc:
            raise TrainingDivergedError(
                f"epoch {epoch}: {exc}", checkpoint_dir if saved else None
            ) from exc

        val_f1, val_acc = evaluate_split(model, val_bags, cfg.num_classes)
        score = val_f1 if val_bags else float(epoch)
        improved = score > best_f1
        if improved:
            best_f1, best_epoch, stale = score, epoch, 0
            save_checkpoint(model, checkpoint_dir, dict(metadata, epoch=epoch, val_macro_f1=val_f1))
            saved = True
        else:
            stale += 1

        rows.append({"epoch": epoch, **row, "val_macro_f1": val_f1, "val_accuracy": val_acc, "best": improved})
        pd.DataFrame(rows).to_csv(out_dir / LOG_NAME, index=False)
        epochs.set_postfix(loss=f"{row['loss']:.4f}", val_f1=f"{val_f1:.3f}")
        logger.debug("epoch %d: %s", epoch, rows[-1])

        if val_bags and stale >= cfg.early_stop_patience:
            logger.info("Early stopping at epoch %d (best epoch %d)", epoch, best_epoch)
            break

    load_checkpoint(model, checkpoint_dir)
    best_val = best_f1 if val_bags else float("nan")
    logger.info("Fold %d: best epoch %d, validation macro-F1 %.4f", fold.index, best_epoch, best_val)
    return TrainResult(model, checkpoint_dir, best_epoch, best_val, pd.DataFrame(rows))


def load_trained(checkpoint_dir: Path) -> Tuple[RacrMil, TrainConfig, dict]:
    """Rebuild a model from a checkpoint written by train()."""
    metadata = read_checkpoint_metadata(checkpoint_dir)
    cfg = TrainConfig.from_dict(metadata["config"])
    model = RacrMil(int(metadata["feature_dim"]), cfg)
    load_checkpoint(model, checkpoint_dir)
    model.eval()
    return model, cfg, metadata
