"""
Pilot-pattern channel estimation: reconstruct masked patches from the observed
ones and compare with trilinear interpolation of the same observations.
"""
import logging

import numpy as np
import pandas as pd
from tqdm import tqdm

from core.patchify.patches import slice_patches, unslice_patches
from core.utils.errors import MaskingError
from .metrics import nmse

log = logging.getLogger(__name__)

__all__ = ["reconstruct", "add_awgn", "lattice_axes", "trilinear_baseline", "eval_pilot_estimation"]


def reconstruct(model, x, plan, grid):
    """Full L x K x N_s x 2 tensor: observed patches as given, masked ones predicted."""
    payloads, coords = slice_patches(x, grid)
    predicted = model.predict(payloads, coords, plan)
    out = payloads.copy()
    out[plan.masked] = predicted[plan.masked]
    return unslice_patches(out, grid)


def add_awgn(x, snr_db, rng):
    """Complex white Gaussian noise at `snr_db` relative to the mean element power of x [..., 2]."""
    power = 2.0 * np.mean(x ** 2)
    sigma = np.sqrt(power / 10 ** (snr_db / 10) / 2.0)
    return x + rng.normal(0.0, sigma, x.shape)


def lattice_axes(plan, grid):
    """
    Raw sample indices observed along each axis, for plans whose observed
    patches form a product set (pilot and comb layouts).
    """
    coords = grid.coords()[plan.observed]
    patch = (grid.patch_l, grid.patch_k, grid.patch_s)
    slabs = [np.unique(coords[:, a]) for a in range(3)]
    if len(coords) != np.prod([len(s) for s in slabs]):
        raise MaskingError(f"{plan.strategy} plan is not a lattice, interpolation baseline needs pilot or comb masks")
    return [np.concatenate([np.arange(g * p, (g + 1) * p) for g in s]) for s, p in zip(slabs, patch)]


def trilinear_baseline(x, plan, grid):
    """Trilinear interpolation (linear extrapolation at the edges) from the observed samples of x."""
    from scipy.interpolate import RegularGridInterpolator

    axes = lattice_axes(plan, grid)
    values = x[np.ix_(*axes)]
    extents = (grid.n_time, grid.n_freq, grid.n_space)
    keep = [a for a in range(3) if len(axes[a]) > 1]
    dropped = tuple(a for a in range(3) if len(axes[a]) == 1)
    values = values.squeeze(axis=dropped) if dropped else values
    if not keep:
        return np.broadcast_to(values, x.shape).copy()

    interp = RegularGridInterpolator([axes[a] for a in keep], values, method="linear", bounds_error=False,
                                     fill_value=None)
    mesh = np.meshgrid(*[np.arange(extents[a]) for a in keep], indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    estimate = interp(points).reshape(*[extents[a] for a in keep], 2)
    for a in dropped:
        estimate = np.expand_dims(estimate, a)
    return np.broadcast_to(estimate, x.shape).copy()


def eval_pilot_estimation(model, data, grid, plan, snr_db=None, seed=0, progress=True):
    """
    NMSE of the model and of the interpolation baseline on the masked patches.

    Parameters
    ----------
    model : object with predict(payloads, coords, plan)
    data : array
        [N, L, K, N_s, 2] clean channels.
    plan : MaskPlan
        Lattice plan (pilot or comb).
    snr_db : float, optional
        Noise on the observations; NMSE is always against the clean channel.

    Returns
    -------
    pd.DataFrame
        One row per sample: sample, nmse_model, nmse_baseline.
    """
    rng = np.random.default_rng(seed)
    coords = grid.coords()
    masked = plan.masked
    rows = []
    for i, x in enumerate(tqdm(data, desc="evaluating", disable=not progress)):
        observed_x = x if snr_db is None else add_awgn(x, snr_db, rng)
        truth, _ = slice_patches(x, grid)
        inputs, _ = slice_patches(observed_x, grid)
        predicted = model.predict(inputs, coords, plan)
        baseline, _ = slice_patches(trilinear_baseline(observed_x, plan, grid), grid)
        rows.append({"sample": i, "nmse_model": nmse(truth[masked], predicted[masked]),
                     "nmse_baseline": nmse(truth[masked], baseline[masked])})
    report = pd.DataFrame(rows, columns=["sample", "nmse_model", "nmse_baseline"])
    log.info("%s masking over %d samples: model NMSE %.4g, interpolation NMSE %.4g", plan.strategy, len(report),
             report["nmse_model"].mean(), report["nmse_baseline"].mean())
    return report
