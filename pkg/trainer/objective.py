"""
Composite Objective

    L = L_grade + lambda1(epoch) (L_inter + L_intra) + lambda2 L_diversity

lambda1 ramps linearly from 0 to its configured value over the warm-up
epochs. Grade and ranking terms are averaged over the bags of a batch; the
diversity term depends only on parameters and is added once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from milhead import grade_loss
from rankloss import RankSelection, patch_probs, ranking_losses, select

from .config import TrainConfig
from .model import BagForward, RacrMil

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Base class for failures during optimisation."""


class NonFiniteLossError(TrainingError):
    """A loss term evaluated to NaN or infinity."""

    def __init__(self, term: str, value: float):
        super().__init__(f"loss term {term!r} is not finite ({value})")
        self.term = term
        self.value = value


@dataclass
class LossBreakdown:
    total: Tensor
    grade: Tensor
    inter: Tensor
    intra: Tensor
    diversity: Tensor
    lambda1: float
    diversity_degenerate: bool = False

    def as_row(self) -> dict:
        return {
            "loss": self.total.item(),
            "grade": self.grade.item(),
            "inter": self.inter.item(),
            "intra": self.intra.item(),
            "diversity": self.diversity.item(),
        }


def lambda1_at(cfg: TrainConfig, epoch: int) -> float:
    """Linear warm-up: lambda1 * min(1, epoch / warmup_epochs)."""
    if cfg.warmup_epochs == 0:
        return cfg.lambda1
    return cfg.lambda1 * min(1.0, epoch / cfg.warmup_epochs)


def select_all(
    forwards: Sequence[BagForward], labels: Sequence[int], cfg: TrainConfig, rng: Optional[np.random.Generator] = None
) -> List[RankSelection]:
    """Ranking selections of every bag, label = the bag's ground-truth grade."""
    return [
        select(f.attention, patch_probs(f.scores), int(y), cfg.rank_k, cfg.bin_width, cfg.pair_cap, rng)
        for f, y in zip(forwards, labels)
    ]


def total_loss(
    model: RacrMil,
    forwards: Sequence[BagForward],
    labels: Sequence[int],
    cfg: TrainConfig,
    epoch: int,
    selections: Optional[Sequence[RankSelection]] = None,
    rng: Optional[np.random.Generator] = None,
) -> LossBreakdown:
    """
    Raises:
        NonFiniteLossError naming the first non-finite term
    """
    if selections is None:
        selections = select_all(forwards, labels, cfg, rng)
    label_t = torch.as_tensor(list(labels), dtype=torch.long)
    likelihood = torch.stack([f.likelihood for f in forwards])
    grade = grade_loss(likelihood, label_t, cfg.grade_loss_mode)

    inters, intras = [], []
    for forward, selection in zip(forwards, selections):
        inter, intra = ranking_losses(
            forward.h1, forward.scores, forward.attention,
            model.head.a, model.head.u, selection,
            intra_mode=cfg.intra_loss_mode, normalize_prototypes=cfg.normalize_prototypes,
        )
        inters.append(inter)
        intras.append(intra)
    inter = torch.stack(inters).mean()
    intra = torch.stack(intras).mean()
    diversity, degenerate = model.gnn.diversity(cfg.diversity_mode)

    for name, term in (("grade", grade), ("inter", inter), ("intra", intra), ("diversity", diversity)):
        value = term.item()
        if not math.isfinite(value):
            raise NonFiniteLossError(name, value)

    lam1 = lambda1_at(cfg, epoch)
    total = grade + lam1 * (inter + intra) + cfg.lambda2 * diversity
    return LossBreakdown(total, grade, inter, intra, diversity, lam1, degenerate)
