"""
Feature Providers

The pretrained patch encoder lives outside this repository. A provider turns
a stack of RGB crops into an (N, d_f) float32 matrix. The command provider
implements the external-executable contract:

    <command> <crops.npy> <features.f32>

The executable reads an (N, T, T, 3) uint8 array saved with numpy and must
write exactly N x d_f little-endian float32 values.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class IngestError(RuntimeError):
    """Raised when an image cannot be turned into a bag."""


class FeatureProvider(Protocol):
    feature_dim: int

    def __call__(self, crops: Sequence[np.ndarray]) -> np.ndarray:
        ...


class CommandFeatureProvider:
    """
    Run an external feature extractor once per image.

    Args:
        command: Command line; the crops and output paths are appended
        feature_dim: d_f the command is expected to produce
        timeout: Seconds before the command is abandoned
    """

    def __init__(self, command: str, feature_dim: int, timeout: float = 3600.0):
        if not command:
            raise IngestError("provider command cannot be empty")
        if feature_dim < 1:
            raise IngestError("feature_dim must be positive")
        self.command = shlex.split(command)
        self.feature_dim = feature_dim
        self.timeout = timeout

    def __call__(self, crops: Sequence[np.ndarray]) -> np.ndarray:
        stack = np.stack([np.asarray(c, dtype=np.uint8) for c in crops])
        with tempfile.TemporaryDirectory(prefix="racr_crops_") as tmp:
            crops_path = Path(tmp) / "crops.npy"
            out_path = Path(tmp) / "features.f32"
            np.save(crops_path, stack)
            logger.info("Running feature provider on %d crops: %s", len(stack), " ".join(self.command))
            result = subprocess.run(
                [*self.command, str(crops_path), str(out_path)],
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
            if result.returncode != 0:
                raise IngestError(f"feature provider exited {result.returncode}: {result.stderr.strip()}")
            if not out_path.is_file():
                raise IngestError("feature provider wrote no output file")
            expected = len(stack) * self.feature_dim * 4
            actual = out_path.stat().st_size
            if actual != expected:
                raise IngestError(f"feature provider wrote {actual} bytes, expected {expected}")
            return np.fromfile(out_path, dtype="<f4").reshape(len(stack), self.feature_dim)
