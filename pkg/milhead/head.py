"""
Attention MIL Head

Attention pooling over patch-level class scores:

    w_n   = softmax_n(a^T tanh(U h1_n))
    s_n,c = ReLU(cos(h1_n, z_c) / tau)          (cosine classifier)
    p_b,c = sum_n w_n s_n,c

Patch scores are pooled, not patch embeddings, so every patch keeps its own
class evidence for heatmaps and the ranking losses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

logger = logging.getLogger(__name__)

LITERAL_LOG_EPS = 1e-8


class ClassifierKind(Enum):
    COSINE = "cosine"
    LINEAR = "linear"


class PrototypeMode(Enum):
    """LEARNED prototypes train by gradient; EMA prototypes track assigned patch embeddings."""
    LEARNED = "learned"
    EMA = "ema"


@dataclass
class HeadOutput:
    """
    Attributes:
        attention: (N,) pooling weights w, summing to 1
        scores: (N, C) patch class scores S
        likelihood: (C,) bag class likelihood p_b
    """
    attention: Tensor
    scores: Tensor
    likelihood: Tensor


def attention_weights(h: Tensor, a: nn.Linear, u: nn.Linear) -> Tensor:
    """Softmax over patches of a^T tanh(U h_n)."""
    return torch.softmax(a(torch.tanh(u(h))).squeeze(-1), dim=0)


def class_scores(h: Tensor, prototypes: Tensor, tau: float) -> Tensor:
    """ReLU of scaled cosine similarity between each patch and each unit prototype."""
    return F.relu(F.normalize(h, dim=-1) @ F.normalize(prototypes, dim=-1).T / tau)


def bag_likelihood(weights: Tensor, scores: Tensor) -> Tensor:
    return weights @ scores


def grade_loss(likelihood: Tensor, labels: Tensor, mode: str = "softmax") -> Tensor:
    """
    Bag grade loss, averaged over the batch.

    Args:
        likelihood: (B, C) bag likelihoods
        labels: (B,) grade codes
        mode: "softmax" is cross-entropy with p_b as logits;
            "literal" is -log(p_b,Y + 1e-8) on the raw scores
    """
    if mode == "softmax":
        return F.cross_entropy(likelihood, labels)
    if mode == "literal":
        picked = likelihood.gather(1, labels.view(-1, 1)).squeeze(1)
        return -torch.log(picked + LITERAL_LOG_EPS).mean()
    raise ValueError(f"unknown grade loss mode {mode!r}")


class MilHead(nn.Module):
    """
    Attention pooling plus patch classifier.

    Args:
        hidden_dim: d_h
        num_classes: C
        tau: Cosine classifier temperature
        classifier: COSINE (prototypes) or LINEAR (plain affine scores, no ReLU)
        prototype_mode: How cosine prototypes are updated
        ema_momentum: Momentum of EMA prototype updates
        ema_confidence: Patch softmax confidence required for EMA assignment
    """

    def __init__(
        self,
        hidden_dim: int,
        num_classes: int,
        tau: float = 0.1,
        classifier: ClassifierKind = ClassifierKind.COSINE,
        prototype_mode: PrototypeMode = PrototypeMode.LEARNED,
        ema_momentum: float = 0.9,
        ema_confidence: float = 0.5,
    ):
        super().__init__()
        if tau <= 0:
            raise ValueError(f"tau must be positive, got {tau}")
        self.classifier = classifier
        self.prototype_mode = prototype_mode
        self.ema_momentum = ema_momentum
        self.ema_confidence = ema_confidence
        self.a = nn.Linear(hidden_dim, 1, bias=False)
        self.u = nn.Linear(hidden_dim, hidden_dim, bias=False)
        self.register_buffer("tau", torch.tensor(float(tau)))

        if classifier is ClassifierKind.COSINE:
            prototypes = torch.empty(num_classes, hidden_dim)
            nn.init.orthogonal_(prototypes)
            self.prototypes = nn.Parameter(
                F.normalize(prototypes, dim=-1),
                requires_grad=prototype_mode is PrototypeMode.LEARNED,
            )
            self.linear = None
        else:
            self.prototypes = None
            self.linear = nn.Linear(hidden_dim, num_classes)

    def scores(self, h: Tensor) -> Tensor:
        if self.classifier is ClassifierKind.COSINE:
            return class_scores(h, self.prototypes, self.tau)
        return self.linear(h)

    def forward(self, h: Tensor) -> HeadOutput:
        weights = attention_weights(h, self.a, self.u)
        scores = self.scores(h)
        return HeadOutput(weights, scores, bag_likelihood(weights, scores))

    @torch.no_grad()
    def renormalize_prototypes(self):
        """Project prototype rows back to unit length; called after every optimiser step."""
        if self.prototypes is not None:
            self.prototypes.copy_(F.normalize(self.prototypes, dim=-1))

    @torch.no_grad()
    def ema_update(self, h: Tensor, scores: Tensor):
        """
        Move each prototype towards the mean unit embedding of the patches
        assigned to its class (argmax with softmax confidence above the
        threshold). Classes with no assigned patch keep their prototype.
        """
        if self.prototypes is None or self.prototype_mode is not PrototypeMode.EMA:
            return
        probs = torch.softmax(scores, dim=-1)
        confidence, assigned = probs.max(dim=-1)
        unit = F.normalize(h, dim=-1)
        for c in range(self.prototypes.shape[0]):
            mask = (assigned == c) & (confidence > self.ema_confidence)
            if mask.any():
                target = unit[mask].mean(dim=0)
                blended = self.ema_momentum * self.prototypes[c] + (1.0 - self.ema_momentum) * target
                self.prototypes[c] = F.normalize(blended, dim=0)
