"""
Image-to-Bag Pipeline

Decode a raster, mask tissue, tile, drop low-texture tiles, and ask a
feature provider for patch features.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from bagio import Bag, GradeScheme
from .provider import FeatureProvider, IngestError
from .tissue import entropy_filter, otsu_tissue_mask, tile

logger = logging.getLogger(__name__)


@dataclass
class IngestConfig:
    """
    Tissue extraction settings.

    Attributes:
        tile_size: Tile edge in pixels at working resolution
        min_coverage: Tissue fraction a tile needs to be kept
        entropy_threshold: Gradient entropy a tile must exceed
        min_component_tiles: Smallest tissue component kept, in tiles' worth of pixels
    """
    tile_size: int = 448
    min_coverage: float = 0.5
    entropy_threshold: float = 4.0
    min_component_tiles: float = 20.0

    @property
    def min_component_area(self) -> int:
        return int(round(self.min_component_tiles * self.tile_size ** 2))

    @classmethod
    def from_json(cls, path: Path) -> "IngestConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise IngestError(f"unknown ingest config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)


def decode_image(path: Path) -> np.ndarray:
    """Read a PNG/PPM/... raster as an (H, W, 3) uint8 array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise IngestError(f"{path}: cannot decode image ({exc})") from exc


def image_to_bag(
    image: np.ndarray,
    bag_id: str,
    grade: int,
    provider: FeatureProvider,
    config: Optional[IngestConfig] = None,
    scheme: GradeScheme = GradeScheme.SKIN,
) -> Bag:
    """
    Convert an RGB image into a bag.

    Args:
        image: (H, W, 3) uint8 array at working resolution
        bag_id: Identifier of the new bag
        grade: Slide-level grade code
        provider: Feature provider for the kept crops
        config: Tissue extraction settings
        scheme: Grade scheme of the dataset

    Returns:
        Validated Bag

    Raises:
        IngestError if no tile survives filtering
    """
    config = config or IngestConfig()
    tissue = otsu_tissue_mask(image, min_area=config.min_component_area)
    tiles = tile(image, tissue.mask, config.tile_size, config.min_coverage)
    kept = [(coord, crop) for coord, crop in tiles if entropy_filter(crop, config.entropy_threshold)]
    logger.info(
        "%s: tissue area %d px, %d tiles at coverage >= %.2f, %d after entropy filter",
        bag_id, tissue.area, len(tiles), config.min_coverage, len(kept),
    )
    if not kept:
        raise IngestError(f"{bag_id}: no tissue tiles survived filtering")

    features = np.asarray(provider([crop for _, crop in kept]), dtype=np.float32)
    if features.shape != (len(kept), provider.feature_dim):
        raise IngestError(f"{bag_id}: provider returned shape {features.shape}")
    return Bag(
        bag_id=bag_id,
        grade=grade,
        coords=np.array([coord for coord, _ in kept], dtype=np.int64),
        features=features,
        num_classes=scheme.num_classes,
    ).validate()
