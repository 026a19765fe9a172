"""
Ranking Loss Package

Inter-grade and intra-grade ordinal ranking constraints on MIL attention.
"""

from .ranking import (
    RankSelection,
    confidence_bins,
    grade_prototypes,
    inter_grade_loss,
    intra_candidates,
    intra_grade_loss,
    patch_probs,
    prototype_attention,
    rank_pairs,
    ranking_losses,
    select,
)

__all__ = [
    "RankSelection",
    "confidence_bins",
    "grade_prototypes",
    "inter_grade_loss",
    "intra_candidates",
    "intra_grade_loss",
    "patch_probs",
    "prototype_attention",
    "rank_pairs",
    "ranking_losses",
    "select",
]
