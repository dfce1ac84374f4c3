import hashlib
import logging
from pathlib import Path

import numpy as np

from core.channel.dataset import MANIFEST_NAME, DatasetManifest
from core.tensor.io import load_tensor
from core.utils.errors import ChannelModelError

log = logging.getLogger(__name__)

__all__ = ["load_manifest", "load_dataset", "split_indices", "dataset_checksum"]


def load_manifest(path):
    manifest_file = Path(path) / MANIFEST_NAME
    if not manifest_file.is_file():
        raise ChannelModelError(f"{path}: no {MANIFEST_NAME}, not a dataset directory")
    return DatasetManifest.model_validate_json(manifest_file.read_text())


def load_dataset(path, indices=None):
    """
    Load samples of a generated dataset.

    Args:
        path: dataset directory holding manifest.json and the CHT1 samples.
        indices: optional subset of sample indices, in the order wanted.

    Returns:
        (DatasetManifest, array of shape [N, L, K, N_s, 2])
    """
    manifest = load_manifest(path)
    records = manifest.records if indices is None else [manifest.records[i] for i in indices]
    data = np.stack([load_tensor(Path(path) / r.file) for r in records])
    if data.shape[1:] != manifest.sample_shape:
        raise ChannelModelError(f"{path}: samples have shape {data.shape[1:]}, manifest says {manifest.sample_shape}")
    log.debug("loaded %d samples from %s", len(records), path)
    return manifest, data


def split_indices(n_samples, holdout, seed=0):
    """Shuffle sample indices and split off a held-out fraction."""
    order = np.random.default_rng(seed).permutation(n_samples)
    n_hold = int(round(holdout * n_samples))
    return np.sort(order[n_hold:]), np.sort(order[:n_hold])


def dataset_checksum(path):
    """SHA-256 over the manifest and every sample file, in name order."""
    digest = hashlib.sha256()
    for f in sorted(Path(path).iterdir()):
        if f.is_file():
            digest.update(f.name.encode())
            digest.update(f.read_bytes())
    return digest.hexdigest()
