"""
Synthetic CSI datasets: a directory of CHT1 sample files plus manifest.json.
"""
import logging
from multiprocessing import Pool
from pathlib import Path
from typing import List

import numpy as np
from pydantic import BaseModel, Field
from tqdm import tqdm

from core.tensor.io import save_tensor
from core.utils.errors import ChannelModelError, ConfigurationError
from core.utils.utils import make_config
from .gbsm import ArrayGeometry, GridSpec, generate_channel, normalize_power, random_scene

log = logging.getLogger(__name__)

__all__ = ["SampleRecord", "DatasetManifest", "sample_seed", "generate_sample", "generate_dataset", "MANIFEST_NAME"]

MANIFEST_NAME = "manifest.json"


class SampleRecord(BaseModel):
    index: int = Field(..., ge=0)
    file: str = Field(..., description="File name of the CHT1 tensor, relative to the dataset directory.")
    seed: int = Field(..., description="Scene seed derived from (dataset seed, index).")
    n_paths: int = Field(..., ge=1)
    mobility: str


class DatasetManifest(BaseModel):
    seed: int
    samples: int = Field(..., ge=1)
    n_paths: int = Field(..., ge=1, description="Paths per sample P.")
    mobility: str
    delay_spread: float = Field(..., ge=0, description="Delay spread in seconds.")
    grid: GridSpec
    geom_tx: ArrayGeometry
    geom_rx: ArrayGeometry
    power_normalized: bool = Field(True, description="Every sample scaled to unit mean element power.")
    records: List[SampleRecord] = []

    @property
    def sample_shape(self):
        return (self.grid.n_time, self.grid.n_freq, self.geom_tx.n_elements * self.geom_rx.n_elements, 2)


def sample_seed(seed, index):
    """Scene seed of one sample; independent of how the samples are distributed over workers."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate_sample(manifest, index):
    """Real L x K x N_s x 2 array of sample `index` of a dataset."""
    scene = random_scene(sample_seed(manifest.seed, index), manifest.n_paths, manifest.mobility, manifest.delay_spread)
    x = generate_channel(scene, manifest.grid, manifest.geom_tx, manifest.geom_rx).data
    return normalize_power(x) if manifest.power_normalized else x


def _sample_worker(args):
    manifest, index, out = args
    name = f"sample_{index:06d}.cht"
    save_tensor(Path(out) / name, generate_sample(manifest, index))
    return SampleRecord(index=index, file=name, seed=sample_seed(manifest.seed, index),
                        n_paths=manifest.n_paths, mobility=manifest.mobility)


def generate_dataset(out, seed, samples, grid, geom_tx, geom_rx, n_paths=8, mobility="pedestrian",
                     delay_spread=300e-9, normalize=True, processes=1):
    """Write `samples` channels and their manifest into directory `out`.

    Output bytes do not depend on `processes`.

    Returns
    -------
    DatasetManifest
    """
    if samples < 1:
        raise ChannelModelError(f"need at least one sample, got {samples}")
    if processes < 1:
        raise ConfigurationError(f"need at least one worker process, got {processes}")
    # validate the scene parameters once before fanning out
    random_scene(seed, n_paths, mobility, delay_spread)
    manifest = make_config(DatasetManifest, seed=seed, samples=samples, n_paths=n_paths, mobility=mobility,
                           delay_spread=delay_spread, grid=grid, geom_tx=geom_tx, geom_rx=geom_rx,
                           power_normalized=normalize)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    args_list = [(manifest, i, str(out)) for i in range(samples)]
    if processes > 1:
        with Pool(processes=processes) as pool:
            records = list(tqdm(pool.imap(_sample_worker, args_list), total=samples, desc="generating channels"))
    else:
        records = [_sample_worker(args) for args in tqdm(args_list, desc="generating channels")]

    manifest.records = records
    (out / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2))
    log.info("wrote %d samples of shape %s to %s", samples, manifest.sample_shape, out)
    return manifest
