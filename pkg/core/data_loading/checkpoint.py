"""
Checkpoint directories: one CHT1 file per named parameter (and per AdamW
moment when the optimizer state is saved) plus checkpoint.json.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from core.tensor.io import load_tensor, save_tensor
from core.utils.errors import CheckpointError, TensorFormatError
from core.utils.utils import HymbaConfig, LossWeights, TrainConfig

log = logging.getLogger(__name__)

__all__ = ["ParamEntry", "CheckpointManifest", "save_checkpoint", "load_checkpoint", "CHECKPOINT_NAME"]

CHECKPOINT_NAME = "checkpoint.json"


class ParamEntry(BaseModel):
    name: str
    shape: List[int]
    file: Optional[str] = Field(None, description="CHT1 file of the value; None for empty tensors.")


class CheckpointManifest(BaseModel):
    config: HymbaConfig
    payload_dim: int
    seed: int = 0
    step: int = Field(0, ge=0, description="Optimizer steps taken so far.")
    total_steps: Optional[int] = None
    train: Optional[TrainConfig] = None
    loss: Optional[LossWeights] = None
    params: List[ParamEntry]
    adam_t: Optional[int] = Field(None, description="AdamW step counter; None when moments were not saved.")
    schedule: Dict[str, float] = {}


def _write(directory, stem, array):
    if array.size == 0:
        return None
    name = f"{stem}.cht"
    save_tensor(directory / name, array)
    return name


def _read(directory, entry):
    if entry.file is None:
        return np.zeros(entry.shape)
    try:
        value = load_tensor(directory / entry.file)
    except TensorFormatError as e:
        raise CheckpointError(str(e)) from e
    if list(value.shape) != entry.shape:
        raise CheckpointError(f"{entry.file}: shape {list(value.shape)} but manifest says {entry.shape}")
    return value


def save_checkpoint(path, model, optimizer=None, step=0, seed=0, total_steps=None, train=None, loss=None,
                    schedule=None):
    """Write model parameters, optionally the AdamW state, and the manifest into `path`."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, p in model.params.items():
        entries.append(ParamEntry(name=name, shape=list(p.shape), file=_write(path, f"param.{name}", p.value)))
    if optimizer is not None:
        for name in model.params:
            _write(path, f"adam_m.{name}", optimizer.m[name])
            _write(path, f"adam_v.{name}", optimizer.v[name])
    manifest = CheckpointManifest(config=model.config, payload_dim=model.payload_dim, seed=seed, step=step,
                                  total_steps=total_steps, train=train, loss=loss, params=entries,
                                  adam_t=None if optimizer is None else optimizer.t, schedule=schedule or {})
    (path / CHECKPOINT_NAME).write_text(manifest.model_dump_json(indent=2))
    log.info("saved checkpoint at step %d to %s", step, path)
    return manifest


def load_checkpoint(path):
    """
    Rebuild the model of a checkpoint directory.

    Returns:
        (ComHymba, CheckpointManifest, optimizer state dict or None)
    """
    from core.mae.model import ComHymba

    path = Path(path)
    manifest_file = path / CHECKPOINT_NAME
    if not manifest_file.is_file():
        raise CheckpointError(f"{path}: no {CHECKPOINT_NAME}, not a checkpoint directory")
    manifest = CheckpointManifest.model_validate_json(manifest_file.read_text())
    model = ComHymba(manifest.config, manifest.payload_dim, seed=manifest.seed)
    names = [e.name for e in manifest.params]
    if names != list(model.params):
        raise CheckpointError(f"{path}: parameter names do not match the configured architecture")
    for entry in manifest.params:
        model.params[entry.name].value = _read(path, entry)

    state = None
    if manifest.adam_t is not None:
        state = {"t": manifest.adam_t, "m": {}, "v": {}}
        for entry in manifest.params:
            for moment in ("m", "v"):
                stem = f"adam_{moment}.{entry.name}"
                moment_entry = ParamEntry(name=entry.name, shape=entry.shape,
                                          file=None if entry.file is None else f"{stem}.cht")
                state[moment][entry.name] = _read(path, moment_entry)
    return model, manifest, state
