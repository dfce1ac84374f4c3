"""
Masking strategies over the patch grid.

Every plan partitions the patch indices into observed and masked sets and keeps
at least one patch observed.
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.utils.errors import MaskingError

log = logging.getLogger(__name__)

__all__ = [
    "AXES", "MaskPlan", "mask_random", "mask_dimension", "mask_pilot", "mask_pilot_comb", "mask_block",
    "mask_cuboids", "strategy_feasible", "make_plan", "save_plan", "load_plan",
]

AXES = ("time", "frequency", "space")


def _round(x):
    return int(np.floor(x + 0.5))


def _axis_index(axis):
    if axis not in AXES:
        raise MaskingError(f"unknown axis {axis!r}, expected one of {AXES}")
    return AXES.index(axis)


class MaskPlan(BaseModel):
    """Partition of the patch indices; `masked[i]` is True for i in the masked set."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    strategy: str
    ratio: float = Field(..., ge=0, le=1, description="Target masking ratio.")
    seed: Optional[int] = None
    masked: np.ndarray
    cuboids: List[Tuple[Tuple[int, int, int], Tuple[int, int, int]]] = Field(
        [], description="(origin, size) of every masked cuboid, block strategy only.")

    @model_validator(mode="after")
    def _check(self):
        self.masked = np.asarray(self.masked, dtype=bool)
        if self.masked.ndim != 1:
            raise ValueError("mask bitmap must be one-dimensional")
        if self.masked.all():
            raise ValueError("at least one patch must stay observed")
        return self

    @property
    def n_patches(self):
        return len(self.masked)

    @property
    def observed(self):
        """Observed patch indices in ascending (encoder) order."""
        return np.flatnonzero(~self.masked)

    @property
    def masked_indices(self):
        return np.flatnonzero(self.masked)

    @property
    def achieved_ratio(self):
        return float(self.masked.mean())

    def bitmap(self):
        return "".join("1" if m else "0" for m in self.masked)

    def to_json(self):
        return json.dumps({"strategy": self.strategy, "ratio": self.ratio, "seed": self.seed,
                           "cuboids": self.cuboids, "bitmap": self.bitmap()})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        masked = np.array([c == "1" for c in d.pop("bitmap")], dtype=bool)
        d["cuboids"] = [tuple(tuple(v) for v in c) for c in d.get("cuboids", [])]
        return _plan(masked=masked, **d)


def _plan(**kwargs):
    try:
        return MaskPlan(**kwargs)
    except ValueError as e:
        raise MaskingError(f"{kwargs.get('strategy')}: {e}") from e


def _check_ratio(ratio, low_open=False):
    if not (0.0 < ratio < 1.0 if low_open else 0.0 <= ratio < 1.0):
        raise MaskingError(f"masking ratio {ratio} outside {'(0, 1)' if low_open else '[0, 1)'}")


def mask_random(grid, ratio, seed):
    """Mask round(ratio * N_p) patches drawn uniformly without replacement."""
    _check_ratio(ratio)
    n = grid.n_patches
    n_mask = _round(ratio * n)
    if n_mask >= n:
        raise MaskingError(f"ratio {ratio} masks all {n} patches")
    rng = np.random.default_rng(seed)
    masked = np.zeros(n, dtype=bool)
    masked[rng.choice(n, size=n_mask, replace=False)] = True
    return _plan(strategy="random", ratio=ratio, seed=seed, masked=masked)


def mask_dimension(grid, axis, ratio, seed):
    """Mask a contiguous run of whole slabs along one patch-grid axis."""
    _check_ratio(ratio)
    a = _axis_index(axis)
    extent = grid.counts[a]
    if extent < 2:
        raise MaskingError(f"{axis} axis has {extent} slab(s), need at least 2")
    run = _round(ratio * extent)
    if run >= extent:
        raise MaskingError(f"run of {run} slabs does not fit the {axis} axis of {extent} slabs")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, extent - run + 1))
    position = grid.coords()[:, a]
    masked = (position >= start) & (position < start + run)
    return _plan(strategy=f"dimension-{axis}", ratio=ratio, seed=seed, masked=masked)


def mask_pilot(grid):
    """Observe the (0,0,0) corner of every 2x2x2 cube of patches."""
    for axis, extent in zip(AXES, grid.counts):
        if extent % 2:
            raise MaskingError(f"pilot pattern needs even patch counts, {axis} axis has {extent}")
    observed = (grid.coords() % 2 == 0).all(axis=1)
    return _plan(strategy="pilot", ratio=0.875, seed=None, masked=~observed)


def mask_pilot_comb(grid, axis="frequency", spacing=2):
    """Comb-type pilots: every `spacing`-th slab along `axis` is observed."""
    a = _axis_index(axis)
    if spacing < 2:
        raise MaskingError(f"comb spacing must be at least 2, got {spacing}")
    if grid.counts[a] < 2:
        raise MaskingError(f"{axis} axis has {grid.counts[a]} slab(s), need at least 2")
    observed = grid.coords()[:, a] % spacing == 0
    return _plan(strategy=f"comb-{axis}", ratio=1.0 - 1.0 / spacing, seed=None, masked=~observed)


def _cuboid_mask(grid, cuboids):
    coords = grid.coords()
    masked = np.zeros(len(coords), dtype=bool)
    for origin, size in cuboids:
        lo = np.asarray(origin)
        hi = lo + np.asarray(size)
        masked |= ((coords >= lo) & (coords < hi)).all(axis=1)
    return masked


def mask_cuboids(grid, cuboids, strategy="block"):
    """Mask explicit cuboids given as (origin, size) in patch coordinates."""
    cuboids = [(tuple(int(v) for v in o), tuple(int(v) for v in s)) for o, s in cuboids]
    for origin, size in cuboids:
        if min(size) < 1 or any(o < 0 or o + s > g for o, s, g in zip(origin, size, grid.counts)):
            raise MaskingError(f"cuboid at {origin} of size {size} leaves the patch grid {grid.counts}")
    masked = _cuboid_mask(grid, cuboids)
    return _plan(strategy=strategy, ratio=float(masked.mean()), seed=None, masked=masked, cuboids=cuboids)


def mask_block(grid, ratio, seed):
    """Union of random cuboids until coverage reaches `ratio`.

    Edge lengths are uniform in [1, max(1, G_a // 2)] per axis. If the last
    cuboid covers the whole grid, one masked patch is drawn back to observed.
    """
    _check_ratio(ratio, low_open=True)
    rng = np.random.default_rng(seed)
    counts = np.asarray(grid.counts)
    cuboids = []
    masked = np.zeros(grid.n_patches, dtype=bool)
    while masked.mean() < ratio:
        size = rng.integers(1, np.maximum(1, counts // 2) + 1)
        origin = rng.integers(0, counts - size + 1)
        cuboids.append((tuple(int(v) for v in origin), tuple(int(v) for v in size)))
        masked = _cuboid_mask(grid, cuboids)
    if masked.all():
        masked[int(rng.integers(0, len(masked)))] = False
    return _plan(strategy="block", ratio=ratio, seed=seed, masked=masked, cuboids=cuboids)


def strategy_feasible(strategy, grid):
    """Whether `make_plan(strategy, grid, ...)` can mask one patch and observe another on `grid`."""
    if strategy == "dimension":
        return max(grid.counts) >= 2
    if strategy == "pilot":
        return all(g % 2 == 0 for g in grid.counts)
    if strategy in ("random", "block"):
        return grid.n_patches >= 2
    raise MaskingError(f"unknown masking strategy {strategy!r}")


def make_plan(strategy, grid, ratio, seed):
    """
    Plan for one of the training strategies (random, dimension, pilot, block).

    Random and dimension ratios are clamped so at least one patch (slab) is
    masked and one stays observed. The dimension strategy picks its axis from
    the seed among axes with at least two slabs.
    """
    if strategy == "random":
        n = grid.n_patches
        if n < 2:
            raise MaskingError(f"random masking needs two patches, the grid has {n}")
        return mask_random(grid, min(max(ratio, 1.0 / n), (n - 1) / n), seed)
    if strategy == "dimension":
        rng = np.random.default_rng(seed)
        axes = [ax for ax, g in zip(AXES, grid.counts) if g >= 2]
        if not axes:
            raise MaskingError(f"no axis of the patch grid {grid.counts} has two slabs")
        axis = axes[int(rng.integers(0, len(axes)))]
        extent = grid.counts[AXES.index(axis)]
        return mask_dimension(grid, axis, min(max(ratio, 1.0 / extent), (extent - 1.5) / extent), seed)
    if strategy == "pilot":
        return mask_pilot(grid)
    if strategy == "block":
        return mask_block(grid, max(ratio, 1e-9), seed)
    raise MaskingError(f"unknown masking strategy {strategy!r}")


def save_plan(plan, filepath):
    Path(filepath).write_text(plan.to_json() + "\n")


def load_plan(filepath):
    return MaskPlan.from_json(Path(filepath).read_text())
