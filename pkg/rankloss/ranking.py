"""
Ordinal Ranking Constraints on Attention

Inter-grade: per bag, class prototypes are built from confident patches and
scored by the pooling attention net; adjacent grades (c, c + 1) that are
both present must rank c + 1 above c.

Intra-grade: within the candidate set of top-attention and top-confidence
patches, a patch in a higher confidence bin must receive more attention
than one in a lower bin (RankNet cross-entropy).

Which patches and pairs take part is a discrete choice made without
gradients; it is returned as a RankSelection so a caller can reuse it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

logger = logging.getLogger(__name__)

CONFIDENCE_THRESHOLD = 0.5


@dataclass
class RankSelection:
    """
    Attributes:
        assignment: (N, C) bool, patch n contributes to prototype c
        candidates: Sorted candidate patch indices
        pairs: (P, 2) patch index pairs (i, j) with bin(p_i) < bin(p_j)
    """
    assignment: np.ndarray
    candidates: np.ndarray
    pairs: np.ndarray

    @property
    def present(self) -> np.ndarray:
        return self.assignment.any(axis=0)


def patch_probs(scores: Tensor) -> Tensor:
    """Per-patch softmax over classes."""
    return torch.softmax(scores, dim=-1)


def grade_prototypes(
    h: Tensor, probs: Tensor, assignment: Optional[np.ndarray] = None, normalize: bool = False
) -> Tuple[Tensor, np.ndarray]:
    """
    W_c = sum over patches with p_n,c > 0.5 of p_n,c h_n.

    Args:
        h: (N, d_h) contextual features
        probs: (N, C) patch class probabilities
        assignment: Precomputed (N, C) contribution mask; derived from probs when None
        normalize: Divide each prototype by its total probability mass

    Returns:
        ((C, d_h) prototypes, (C,) bool present flags)
    """
    if assignment is None:
        assignment = (probs.detach() > CONFIDENCE_THRESHOLD).cpu().numpy()
    mask = torch.as_tensor(assignment, dtype=probs.dtype, device=probs.device)
    weights = probs * mask
    prototypes = weights.T @ h
    if normalize:
        mass = weights.sum(dim=0).clamp_min(torch.finfo(probs.dtype).tiny)
        prototypes = prototypes / mass.unsqueeze(-1)
    return prototypes, assignment.any(axis=0)


def prototype_attention(prototypes: Tensor, present: np.ndarray, a: nn.Linear, u: nn.Linear) -> Tensor:
    """
    Softmax of a^T tanh(U W_c) over the present classes.

    Returns:
        (C,) weights, zero for absent classes; all zero when none is present
    """
    logits = a(torch.tanh(u(prototypes))).squeeze(-1)
    present_t = torch.as_tensor(present, dtype=torch.bool, device=logits.device)
    if not present_t.any():
        return torch.zeros_like(logits)
    masked = logits.masked_fill(~present_t, float("-inf"))
    return torch.softmax(masked, dim=0).masked_fill(~present_t, 0.0)


def inter_grade_loss(class_weights: Tensor, present: np.ndarray) -> Tensor:
    """Sum over adjacent present grades of log(1 + exp(w_c - w_c+1)); 0 when no pair exists."""
    total = class_weights.new_zeros(())
    for c in range(len(present) - 1):
        if present[c] and present[c + 1]:
            total = total + F.softplus(class_weights[c] - class_weights[c + 1])
    return total


def _top_k(values: np.ndarray, k: int) -> np.ndarray:
    order = np.lexsort((np.arange(values.size), -values))
    return order[:k]


def intra_candidates(weights: np.ndarray, class_probs: np.ndarray, k: int) -> np.ndarray:
    """TopK(w) union TopK(p_c), ties by smaller index, sorted ascending."""
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    weights, class_probs = np.asarray(weights), np.asarray(class_probs)
    return np.union1d(_top_k(weights, k), _top_k(class_probs, k)).astype(np.int64)


def confidence_bins(class_probs: np.ndarray, bin_width: float) -> np.ndarray:
    if bin_width <= 0:
        raise ValueError(f"bin width must be positive, got {bin_width}")
    return np.floor(np.asarray(class_probs) / bin_width).astype(np.int64)


def rank_pairs(
    class_probs: np.ndarray,
    candidates: np.ndarray,
    bin_width: float = 0.1,
    pair_cap: int = 512,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    All candidate pairs (i, j) with bin(p_i) < bin(p_j).

    When more than pair_cap pairs exist, a seeded random subset of pair_cap
    is kept, in the original order.
    """
    bins = confidence_bins(class_probs, bin_width)
    cand = np.asarray(candidates, dtype=np.int64)
    i_idx, j_idx = np.meshgrid(cand, cand, indexing="ij")
    keep = bins[i_idx] < bins[j_idx]
    pairs = np.stack([i_idx[keep], j_idx[keep]], axis=1)
    if len(pairs) > pair_cap:
        rng = rng if rng is not None else np.random.default_rng(0)
        chosen = np.sort(rng.choice(len(pairs), size=pair_cap, replace=False))
        logger.debug("subsampled %d of %d ranking pairs", pair_cap, len(pairs))
        pairs = pairs[chosen]
    return pairs.reshape(-1, 2)


def intra_grade_loss(weights: Tensor, pairs: np.ndarray, mode: str = "ranknet") -> Tensor:
    """
    Mean over pairs of the RankNet loss -log sigmoid(w_j - w_i).

    Args:
        mode: "ranknet" (default) or "literal", the signed form
            mean log sigmoid(w_i - w_j)
    """
    if len(pairs) == 0:
        return weights.new_zeros(())
    pairs_t = torch.as_tensor(pairs, dtype=torch.long, device=weights.device)
    diff = weights[pairs_t[:, 1]] - weights[pairs_t[:, 0]]
    if mode == "ranknet":
        return F.softplus(-diff).mean()
    if mode == "literal":
        return F.logsigmoid(-diff).mean()
    raise ValueError(f"unknown intra loss mode {mode!r}")


def select(
    weights: Tensor,
    probs: Tensor,
    label: int,
    k: int = 16,
    bin_width: float = 0.1,
    pair_cap: int = 512,
    rng: Optional[np.random.Generator] = None,
) -> RankSelection:
    """Discrete choices of both ranking losses for one bag, made on detached values."""
    w = weights.detach().cpu().numpy()
    p = probs.detach().cpu().numpy()
    candidates = intra_candidates(w, p[:, label], k)
    return RankSelection(
        assignment=p > CONFIDENCE_THRESHOLD,
        candidates=candidates,
        pairs=rank_pairs(p[:, label], candidates, bin_width, pair_cap, rng),
    )


def ranking_losses(
    h: Tensor,
    scores: Tensor,
    weights: Tensor,
    a: nn.Linear,
    u: nn.Linear,
    selection: RankSelection,
    intra_mode: str = "ranknet",
    normalize_prototypes: bool = False,
) -> Tuple[Tensor, Tensor]:
    """
    Inter- and intra-grade losses of one bag.

    Returns:
        (inter, intra)
    """
    probs = patch_probs(scores)
    prototypes, present = grade_prototypes(h, probs, selection.assignment, normalize_prototypes)
    inter = inter_grade_loss(prototype_attention(prototypes, present, a, u), present)
    intra = intra_grade_loss(weights, selection.pairs, intra_mode)
    return inter, intra
