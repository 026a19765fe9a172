"""
Ingest Package

Turns a plain RGB raster into a bag: Otsu tissue masking, non-overlapping
tiling, gradient-entropy filtering and provider-supplied features.
"""

from .tissue import TissueMask, entropy_filter, gradient_entropy, otsu_tissue_mask, tile
from .provider import CommandFeatureProvider, FeatureProvider, IngestError
from .pipeline import IngestConfig, decode_image, image_to_bag

__all__ = [
    "TissueMask",
    "entropy_filter",
    "gradient_entropy",
    "otsu_tissue_mask",
    "tile",
    "CommandFeatureProvider",
    "FeatureProvider",
    "IngestError",
    "IngestConfig",
    "decode_image",
    "image_to_bag",
]
