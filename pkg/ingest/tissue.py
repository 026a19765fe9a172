"""
Tissue Extraction

Otsu tissue masking with small-component removal, non-overlapping tiling at
a minimum tissue coverage, and the gradient-entropy texture filter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy import ndimage, stats
from skimage.color import rgb2gray
from skimage.filters import threshold_otsu

logger = logging.getLogger(__name__)

# 8-connectivity for tissue components.
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class TissueMask:
    """Boolean tissue mask plus the threshold that produced it."""
    mask: np.ndarray
    threshold: float
    degenerate: bool = False

    @property
    def area(self) -> int:
        return int(self.mask.sum())


def to_gray(image: np.ndarray) -> np.ndarray:
    """Grayscale on the 0-255 scale as float64."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.float64)
    return rgb2gray(image[..., :3].astype(np.uint8)) * 255.0


def otsu_tissue_mask(image: np.ndarray, min_area: int = 0) -> TissueMask:
    """
    Tissue mask from Otsu thresholding of the grayscale image.

    Tissue is the darker side of the threshold (stained tissue on a bright
    background). Connected components smaller than min_area pixels are removed.

    Args:
        image: (H, W, 3) uint8 array
        min_area: Smallest component area kept, in pixels

    Returns:
        TissueMask; a constant image gives an empty mask flagged degenerate
    """
    gray = to_gray(image)
    if gray.size == 0:
        raise ValueError("image must have H, W >= 1")
    if gray.min() == gray.max():
        logger.warning("constant image: no inter-class variance, empty tissue mask")
        return TissueMask(np.zeros(gray.shape, dtype=bool), float(gray.min()), degenerate=True)

    threshold = float(threshold_otsu(gray))
    mask = gray <= threshold
    if min_area > 0:
        labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
        if count:
            sizes = np.bincount(labels.ravel())
            small = sizes < min_area
            small[0] = False
            mask[small[labels]] = False
    return TissueMask(mask, threshold)


def tile(image: np.ndarray, mask: np.ndarray, tile_size: int, min_coverage: float = 0.5) -> List[Tuple[Tuple[int, int], np.ndarray]]:
    """
    Cut the image into a non-overlapping grid anchored at the origin.

    A tile is kept iff at least min_coverage of its pixels are tissue.
    Partial tiles at the right/bottom border are dropped.

    Args:
        image: (H, W, ...) array
        mask: (H, W) boolean tissue mask
        tile_size: Tile edge length in pixels
        min_coverage: Required tissue fraction per tile

    Returns:
        List of ((row, col), crop) in row-major order
    """
    if tile_size < 1:
        raise ValueError("tile_size must be at least 1")
    rows, cols = mask.shape[0] // tile_size, mask.shape[1] // tile_size
    if rows == 0 or cols == 0:
        return []
    blocks = mask[: rows * tile_size, : cols * tile_size].reshape(rows, tile_size, cols, tile_size)
    coverage = blocks.mean(axis=(1, 3))
    tiles = []
    for s, t in zip(*np.nonzero(coverage >= min_coverage)):
        y, x = s * tile_size, t * tile_size
        tiles.append(((int(s), int(t)), image[y:y + tile_size, x:x + tile_size]))
    return tiles


def gradient_entropy(crop: np.ndarray) -> float:
    """
    Shannon entropy (bits) of the gradient-magnitude histogram.

    Gradients are central differences on the grayscale crop; the histogram
    has 256 bins over the observed magnitude range.
    """
    gray = to_gray(crop)
    if min(gray.shape) < 2:
        return 0.0
    gy, gx = np.gradient(gray)
    magnitude = np.hypot(gx, gy)
    hist, _ = np.histogram(magnitude, bins=256)
    if hist.sum() == 0:
        return 0.0
    return float(stats.entropy(hist, base=2))


def entropy_filter(crop: np.ndarray, threshold: float = 4.0) -> bool:
    """Keep a crop iff its gradient entropy is strictly above threshold."""
    return gradient_entropy(crop) > threshold
