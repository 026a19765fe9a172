"""
Checkpoint Format

A checkpoint directory holds:
- checkpoint.json: every named tensor with its shape and element offset,
  plus free-form metadata (training config, epoch, metrics)
- weights.f32: all tensors concatenated as little-endian float32

Saving then loading reproduces every tensor byte for byte.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch
import torch.nn as nn

logger = logging.getLogger(__name__)

MANIFEST_NAME = "checkpoint.json"
PAYLOAD_NAME = "weights.f32"
PAYLOAD_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    """A checkpoint is missing, malformed or does not match the model."""


def save_checkpoint(model: nn.Module, directory: Path, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write every entry of model.state_dict() into directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors, chunks, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        if not tensor.is_floating_point():
            raise CheckpointError(f"{name}: only floating point tensors are stored")
        values = tensor.detach().cpu().numpy().astype(PAYLOAD_DTYPE).ravel()
        tensors.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        chunks.append(values)
        offset += values.size
    manifest = {"format": 1, "dtype": PAYLOAD_DTYPE.str, "tensors": tensors, "metadata": metadata or {}}
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    payload = np.concatenate(chunks) if chunks else np.zeros(0, dtype=PAYLOAD_DTYPE)
    payload.astype(PAYLOAD_DTYPE, copy=False).tofile(directory / PAYLOAD_NAME)
    logger.debug("Saved %d tensors (%d values) to %s", len(tensors), offset, directory)
    return directory


def read_checkpoint_metadata(directory: Path) -> Dict[str, Any]:
    return _read_manifest(Path(directory))["metadata"]


def _read_manifest(directory: Path) -> dict:
    try:
        manifest = json.loads((directory / MANIFEST_NAME).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CheckpointError(f"{directory}: no {MANIFEST_NAME}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{directory}: malformed manifest ({exc})") from exc
    if "tensors" not in manifest:
        raise CheckpointError(f"{directory}: manifest lists no tensors")
    manifest.setdefault("metadata", {})
    return manifest


def load_checkpoint(model: nn.Module, directory: Path) -> Dict[str, Any]:
    """
    Load tensors into model in place.

    Returns:
        The stored metadata

    Raises:
        CheckpointError if names, shapes or payload size disagree with the model
    """
    directory = Path(directory)
    manifest = _read_manifest(directory)
    payload_path = directory / PAYLOAD_NAME
    if not payload_path.is_file():
        raise CheckpointError(f"{directory}: no {PAYLOAD_NAME}")
    payload = np.fromfile(payload_path, dtype=PAYLOAD_DTYPE)
    expected = sum(int(np.prod(t["shape"], dtype=np.int64)) for t in manifest["tensors"])
    if payload.size != expected:
        raise CheckpointError(f"{payload_path}: {payload.size} values, manifest lists {expected}")

    current = model.state_dict()
    stored = {t["name"] for t in manifest["tensors"]}
    if stored != set(current):
        missing, extra = sorted(set(current) - stored), sorted(stored - set(current))
        raise CheckpointError(f"{directory}: tensor names differ (missing {missing}, unexpected {extra})")

    state = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        if shape != tuple(current[entry["name"]].shape):
            raise CheckpointError(f"{entry['name']}: stored shape {shape}, model has {tuple(current[entry['name']].shape)}")
        size = int(np.prod(shape, dtype=np.int64))
        values = payload[entry["offset"]:entry["offset"] + size].reshape(shape)
        state[entry["name"]] = torch.from_numpy(values.copy()).to(current[entry["name"]].dtype)
    model.load_state_dict(state)
    return manifest["metadata"]
