"""
Checkpoint directories: manifest.json (model config + tensor index) and one
container file per state_dict entry under tensors/.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import torch

from swformer.core.container import load_tensor, save_tensor
from swformer.errors import FormatError, PreconditionError
from swformer.models import ModelConfig
from swformer.network.swformer import SWformer

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
CHECKPOINT_FORMAT = "swformer-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: SWformer, directory: Path) -> Path:
    """
    Write every state_dict tensor as f32; the manifest keeps the original dtype.

    The tensor container only holds f32, so float64 models (the gradient-check
    path) are rejected rather than silently truncated.
    """
    state = model.state_dict()
    wide = [name for name, tensor in state.items() if tensor.dtype == torch.float64]
    if wide:
        raise PreconditionError(
            f"checkpoints store f32 only; {len(wide)} float64 tensors (first {wide[0]!r}), call model.float() first"
        )
    directory = Path(directory)
    (directory / "tensors").mkdir(parents=True, exist_ok=True)

    entries: List[Dict[str, Any]] = []
    for name, tensor in state.items():
        rel = f"tensors/{name}.swft"
        save_tensor(directory / rel, tensor.detach().cpu().to(torch.float32))
        entries.append(
            {
                "name": name,
                "file": rel,
                "shape": list(tensor.shape),
                "dtype": str(tensor.dtype).replace("torch.", ""),
            }
        )

    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model": model.cfg.model_dump(mode="json"),
        "tensors": entries,
    }
    path = directory / MANIFEST
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info("Saved checkpoint with %d tensors to %s", len(entries), directory)
    return path


def load_checkpoint(directory: Path) -> SWformer:
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise PreconditionError(f"checkpoint manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path} is not a swformer checkpoint")

    cfg = ModelConfig.model_validate(manifest["model"])
    model = SWformer(cfg)

    state = {}
    for entry in manifest["tensors"]:
        tensor = load_tensor(directory / entry["file"])
        if list(tensor.shape) != entry["shape"]:
            raise FormatError(f"tensor {entry['name']} has shape {list(tensor.shape)}, manifest says {entry['shape']}")
        state[entry["name"]] = tensor.to(getattr(torch, entry["dtype"]))
    model.load_state_dict(state)
    logger.info("Loaded checkpoint from %s", directory)
    return model
