"""
Trainer Package

Configuration and presets, the composed RACR-MIL model, the composite
objective, the training loop and the finite-difference gradient check.
"""

from .config import DATASET_PRESETS, GRAPH_VARIANTS, ConfigError, TrainConfig, preset_config, resolve_config
from .model import BagForward, RacrMil, build_model
from .objective import LossBreakdown, NonFiniteLossError, TrainingError, lambda1_at, select_all, total_loss
from .loop import (
    PreparedBag,
    TrainingDivergedError,
    TrainResult,
    class_balanced_sampler,
    evaluate_split,
    load_trained,
    macro_f1,
    predict,
    prepare_bags,
    train,
)
from .gradcheck import GradcheckReport, TensorCheck, run_gradcheck

__all__ = [
    "DATASET_PRESETS",
    "GRAPH_VARIANTS",
    "ConfigError",
    "TrainConfig",
    "preset_config",
    "resolve_config",
    "BagForward",
    "RacrMil",
    "build_model",
    "LossBreakdown",
    "NonFiniteLossError",
    "TrainingError",
    "lambda1_at",
    "select_all",
    "total_loss",
    "PreparedBag",
    "TrainingDivergedError",
    "TrainResult",
    "class_balanced_sampler",
    "evaluate_split",
    "load_trained",
    "macro_f1",
    "predict",
    "prepare_bags",
    "train",
    "GradcheckReport",
    "TensorCheck",
    "run_gradcheck",
]
