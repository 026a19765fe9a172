"""
MIL Head Package

Attention pooling over patch class scores with a cosine-softmax classifier.
"""

from .head import (
    ClassifierKind,
    HeadOutput,
    MilHead,
    PrototypeMode,
    attention_weights,
    bag_likelihood,
    class_scores,
    grade_loss,
)

__all__ = [
    "ClassifierKind",
    "HeadOutput",
    "MilHead",
    "PrototypeMode",
    "attention_weights",
    "bag_likelihood",
    "class_scores",
    "grade_loss",
]
