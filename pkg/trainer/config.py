"""
Training Configuration

TrainConfig is one flat dataclass holding every knob of the pipeline. Values
are resolved with the precedence

    command-line flag > JSON config file > dataset preset > dataclass default

Dataset presets (skin, head_neck, lung) each come in three graph variants
(dual, latent, spatial).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from attgnn import GraphMode
from bagio import GradeScheme, SplitSpec
from graphbuild import DiffusionConfig, WeightMode
from milhead import ClassifierKind, PrototypeMode

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Unknown key or invalid value in a training configuration."""


@dataclass(frozen=True)
class TrainConfig:
    # objective
    lambda1: float = 0.2
    lambda2: float = 0.1
    warmup_epochs: int = 10
    grade_loss_mode: str = "softmax"
    intra_loss_mode: str = "ranknet"
    diversity_mode: str = "decorrelate"

    # optimisation
    learning_rate: float = 1e-4
    weight_decay: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    batch_size: int = 16
    max_epochs: int = 60
    early_stop_patience: int = 9
    beta_cb: float = 0.999
    seed: int = 0

    # graphs
    alpha: float = 0.25
    delta: float = 0.02
    top_m: int = 5
    k_latent: int = 8
    k_spatial: int = 8
    weight_mode: str = "similarity"

    # network
    hidden_dim: int = 64
    num_layers: int = 1
    dropout: float = 0.5
    graph_mode: str = "dual"
    fuse_scale: float = 1.0

    # head
    scheme: str = "skin"
    classifier: str = "cosine"
    tau: float = 0.1
    prototype_mode: str = "learned"

    # ranking
    rank_k: int = 16
    bin_width: float = 0.1
    pair_cap: int = 512
    normalize_prototypes: bool = False

    # folds
    fold_count: int = 5

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        self.validate()

    def validate(self) -> "TrainConfig":
        positive = ("batch_size", "max_epochs", "hidden_dim", "num_layers",
                    "tau", "rank_k", "bin_width", "pair_cap", "fold_count", "top_m", "k_latent", "k_spatial")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        non_negative = ("learning_rate", "lambda1", "lambda2", "weight_decay",
                        "warmup_epochs", "early_stop_patience", "delta")
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError(f"betas must be two values in [0, 1), got {self.betas}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.beta_cb < 1.0:
            raise ConfigError(f"beta_cb must lie in [0, 1), got {self.beta_cb}")
        choices = {
            "grade_loss_mode": ("softmax", "literal"),
            "intra_loss_mode": ("ranknet", "literal"),
            "diversity_mode": ("decorrelate", "literal"),
            "weight_mode": tuple(m.value for m in WeightMode),
            "graph_mode": tuple(m.value for m in GraphMode),
            "scheme": tuple(s.value for s in GradeScheme),
            "classifier": tuple(c.value for c in ClassifierKind),
            "prototype_mode": tuple(p.value for p in PrototypeMode),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        # Linear scores can be negative; the literal loss takes their log.
        if self.grade_loss_mode == "literal" and self.classifier == ClassifierKind.LINEAR.value:
            raise ConfigError("grade_loss_mode 'literal' needs the cosine classifier, got classifier 'linear'")
        return self

    # ------------------------------------------------------------------
    # typed views
    # ------------------------------------------------------------------

    @property
    def grade_scheme(self) -> GradeScheme:
        return GradeScheme(self.scheme)

    @property
    def num_classes(self) -> int:
        return self.grade_scheme.num_classes

    @property
    def graph_mode_enum(self) -> GraphMode:
        return GraphMode(self.graph_mode)

    def diffusion_config(self) -> DiffusionConfig:
        return DiffusionConfig(
            alpha=self.alpha,
            top_m=self.top_m,
            delta=self.delta,
            k_latent=self.k_latent,
            k_spatial=self.k_spatial,
            weight_mode=WeightMode(self.weight_mode),
        )

    def split_spec(self) -> SplitSpec:
        return SplitSpec(fold_count=self.fold_count)

    # ------------------------------------------------------------------
    # serialisation
    # ------------------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        raw = asdict(self)
        raw["betas"] = list(self.betas)
        return raw

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base: Optional["TrainConfig"] = None) -> "TrainConfig":
        """
        Apply raw over base (defaults when omitted).

        Raises:
            ConfigError on unknown keys or invalid values
        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return replace(base or cls(), **dict(raw))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self, path: Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def from_json(cls, path: Path, base: Optional["TrainConfig"] = None) -> "TrainConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"{path}: config file not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw, base)


# =============================================================================
# PRESETS
# =============================================================================

DATASET_PRESETS: Dict[str, Dict[str, Any]] = {
    "skin": {"scheme": "skin", "tau": 0.1, "lambda1": 0.2, "lambda2": 0.1, "max_epochs": 60},
    "head_neck": {
        "scheme": "head_neck", "tau": 0.1, "lambda1": 0.1, "lambda2": 0.1,
        "max_epochs": 100, "classifier": "linear",
    },
    "lung": {"scheme": "lung", "tau": 0.3, "lambda1": 0.3, "lambda2": 0.1, "max_epochs": 100},
}

GRAPH_VARIANTS = ("dual", "latent", "spatial", "none")


def preset_config(dataset: str, variant: str = "dual") -> TrainConfig:
    """
    Hyperparameters of one dataset preset and graph variant.

    Variants other than dual have no diversity term, so lambda2 is 0.
    """
    if dataset not in DATASET_PRESETS:
        raise ConfigError(f"unknown preset {dataset!r}; choose from {sorted(DATASET_PRESETS)}")
    if variant not in GRAPH_VARIANTS:
        raise ConfigError(f"unknown graph variant {variant!r}; choose from {GRAPH_VARIANTS}")
    values = dict(DATASET_PRESETS[dataset], graph_mode=variant)
    if variant != "dual":
        values["lambda2"] = 0.0
    return TrainConfig.from_dict(values)


def resolve_config(
    preset: Optional[str] = None,
    variant: Optional[str] = None,
    config_path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> TrainConfig:
    """
    Layer preset, config file and explicit overrides; None overrides are ignored.

    A variant without a dataset preset only sets graph_mode.
    """
    if preset is not None:
        cfg = preset_config(preset, variant or "dual")
    else:
        cfg = TrainConfig() if variant is None else TrainConfig(graph_mode=variant)
    if config_path is not None:
        cfg = TrainConfig.from_json(config_path, base=cfg)
    flags = {k: v for k, v in (overrides or {}).items() if v is not None}
    if flags:
        cfg = TrainConfig.from_dict(flags, base=cfg)
    logger.debug("Resolved config: %s", cfg.to_dict())
    return cfg
