"""
Inference latency of the hybrid encoder against a parameter-matched
full-attention transformer, and the log-log scaling fit over sequence length.

A timed call runs the encoder pipeline on a CSI tensor: patch slicing, patch
embedding, 3D RoPE, meta tokens and the encoder stack, with every patch
visible and no tape.
"""
import logging
import time

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from core.hymba.block import baseline_config
from core.mae.model import ComHymba, count_parameters
from core.masking.strategies import mask_random
from core.patchify.patches import patch_grid_for, slice_patches
from core.tensor import tensor as T
from core.utils.errors import ConfigurationError, MetricError
from core.utils.utils import make_config, model_parameters

log = logging.getLogger(__name__)

__all__ = ["VARIANTS", "BENCH_COLUMNS", "SPEEDUP_COLUMNS", "BenchCase", "bench_case", "variant_config",
           "bench_forward", "run_benchmark", "speedup_table", "speedup_trend", "scaling_fit", "dims_for_tokens"]

VARIANTS = ("comhymba", "transformer")
BENCH_COLUMNS = ["variant", "scale", "L", "K", "Ns", "tokens", "median_ms", "p10_ms", "p90_ms", "threads"]
SPEEDUP_COLUMNS = ["scale", "L", "K", "Ns", "tokens", "t_comhymba", "t_transformer", "ratio"]


class BenchCase(BaseModel):
    scale: str = Field(..., description="Model scale preset, see model_parameters().")
    n_time: int = Field(..., gt=0, description="Input extent L.")
    n_freq: int = Field(..., gt=0, description="Input extent K.")
    n_space: int = Field(..., gt=0, description="Input extent N_s.")
    repetitions: int = Field(10, ge=5, description="Timed forward passes.")
    warmup: int = Field(2, ge=2, description="Untimed forward passes before the timed ones.")


def bench_case(scale, dims, repetitions=10, warmup=2):
    """BenchCase from an (L, K, N_s) triple; bad values raise ConfigurationError."""
    L, K, Ns = dims
    return make_config(BenchCase, scale=scale, n_time=L, n_freq=K, n_space=Ns, repetitions=repetitions,
                       warmup=warmup)


def variant_config(variant, config, keep_full_layers=False):
    """
    Encoder configuration timed for a variant.

    The comhymba variant drops the preset full-attention layers unless
    `keep_full_layers`; the meta tokens stay its global anchors.
    """
    if variant == "comhymba":
        return config if keep_full_layers else config.model_copy(update={"full_attention_layers": []})
    if variant == "transformer":
        return baseline_config(config)
    raise ConfigurationError(f"unknown benchmark variant {variant!r}, expected one of {VARIANTS}")


def _timings(fn, repetitions, warmup):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        times.append((time.perf_counter() - start) * 1e3)
    return np.asarray(times)


def bench_forward(variant, case, config=None, threads=1, keep_full_layers=False, seed=0):
    """
    Time the inference pipeline of one variant on one case.

    Parameters
    ----------
    variant : {"comhymba", "transformer"}
    case : BenchCase
    config : HymbaConfig, optional
        Defaults to model_parameters(case.scale).
    threads : int
        Thread count in effect, recorded with the timings.

    Returns
    -------
    dict
        One row of BENCH_COLUMNS; a case that ran out of memory has NaN timings.
    """
    config = variant_config(variant, config or model_parameters(case.scale), keep_full_layers)
    dims = (case.n_time, case.n_freq, case.n_space)
    grid = patch_grid_for(dims, config)
    record = {"variant": variant, "scale": case.scale, "L": case.n_time, "K": case.n_freq, "Ns": case.n_space,
              "tokens": grid.n_patches, "threads": threads}

    x = np.random.default_rng(seed).normal(0.0, 1.0, (*dims, 2))
    plan = mask_random(grid, 0.0, seed)
    try:
        with T.precision(np.float32), T.no_grad():
            model = ComHymba(config, grid.payload_dim, seed=seed)
            log.debug("%s at %s: %d parameters", variant, case.scale, count_parameters(model))

            def forward():
                payloads, coords = slice_patches(x, grid)
                return model.encode(payloads, coords, plan)

            times = _timings(forward, case.repetitions, case.warmup)
    except MemoryError:
        log.warning("%s ran out of memory at dims %s, case recorded as failed", variant, dims)
        return {**record, "median_ms": np.nan, "p10_ms": np.nan, "p90_ms": np.nan}
    return {**record, "median_ms": float(np.median(times)), "p10_ms": float(np.percentile(times, 10)),
            "p90_ms": float(np.percentile(times, 90))}


def run_benchmark(cases, variants=VARIANTS, threads=1, keep_full_layers=False, seed=0, progress=True):
    """All (case, variant) pairs as a DataFrame of BENCH_COLUMNS."""
    jobs = [(case, variant) for case in cases for variant in variants]
    records = [bench_forward(variant, case, threads=threads, keep_full_layers=keep_full_layers, seed=seed)
               for case, variant in tqdm(jobs, desc="benchmarking", disable=not progress)]
    return pd.DataFrame(records, columns=BENCH_COLUMNS)


def speedup_table(records):
    """
    One row per case measured for both variants, ratio = t_transformer / t_comhymba.

    Cases missing a variant (or with a failed timing) are dropped with a warning.
    """
    frame = pd.DataFrame(records, columns=BENCH_COLUMNS)
    rows = []
    for (scale, L, K, Ns), group in frame.groupby(["scale", "L", "K", "Ns"], sort=False):
        medians = group.dropna(subset=["median_ms"]).set_index("variant")["median_ms"]
        if not set(VARIANTS) <= set(medians.index):
            log.warning("no timing pair for %s at (%d, %d, %d), row omitted", scale, L, K, Ns)
            continue
        t_hymba, t_full = float(medians["comhymba"]), float(medians["transformer"])
        rows.append({"scale": scale, "L": L, "K": K, "Ns": Ns, "tokens": int(group["tokens"].iloc[0]),
                     "t_comhymba": t_hymba, "t_transformer": t_full, "ratio": t_full / t_hymba})
    return pd.DataFrame(rows, columns=SPEEDUP_COLUMNS)


def speedup_trend(table):
    """True when the ratio at the largest token count exceeds the ratio at the smallest."""
    if len(table) < 2:
        raise MetricError("a speedup trend needs at least two cases")
    ordered = table.sort_values("tokens")
    return bool(ordered["ratio"].iloc[-1] > ordered["ratio"].iloc[0])


def scaling_fit(lengths, times):
    """Least-squares slope of log(time) against log(length)."""
    lengths = np.asarray(lengths, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(lengths) != len(times):
        raise ConfigurationError(f"{len(lengths)} lengths for {len(times)} timings")
    if len(np.unique(lengths)) < 4 or lengths.max() < 8 * lengths.min():
        raise ConfigurationError("scaling fit needs at least 4 lengths spanning a factor of 8")
    if np.any(times <= 0) or not np.all(np.isfinite(times)):
        raise MetricError("scaling fit needs positive finite timings")
    slope, _ = np.polyfit(np.log(lengths), np.log(times), 1)
    return float(slope)


def dims_for_tokens(n_tokens, config, freq_patches=4, space_patches=4):
    """(L, K, N_s) whose patch grid holds n_tokens patches; the time axis takes what the others leave."""
    per_slab = freq_patches * space_patches
    if n_tokens % per_slab:
        freq_patches, space_patches, per_slab = 1, 1, 1
    return n_tokens // per_slab * config.patch_l, freq_patches * config.patch_k, space_patches * config.patch_s
