"""
Non-overlapping 3D patches of a CSI tensor and their linear embedding.

Patches enumerate the grid in lexicographic (t, f, s) order; inside a patch the
payload is flattened (t, f, s, re/im).
"""
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.channel.gbsm import CsiTensor
from core.tensor import tensor as T
from core.utils.errors import ShapeMismatchError
from core.utils.utils import make_config

__all__ = ["PatchGrid", "patch_grid", "patch_grid_for", "PatchSequence", "slice_patches", "unslice_patches", "embed"]


class PatchGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    patch_l: int = Field(..., gt=0, description="Patch length along time.")
    patch_k: int = Field(..., gt=0, description="Patch length along frequency.")
    patch_s: int = Field(..., gt=0, description="Patch length along space.")
    n_time: int = Field(..., gt=0, description="Tensor extent L.")
    n_freq: int = Field(..., gt=0, description="Tensor extent K.")
    n_space: int = Field(..., gt=0, description="Tensor extent N_s.")

    @model_validator(mode="after")
    def _divisible(self):
        for axis, n, p in (("time", self.n_time, self.patch_l), ("frequency", self.n_freq, self.patch_k),
                           ("space", self.n_space, self.patch_s)):
            if n % p:
                raise ValueError(f"{axis} axis: extent {n} is not divisible by patch size {p}")
        return self

    @property
    def counts(self):
        """Patch counts (G_L, G_K, G_s)."""
        return self.n_time // self.patch_l, self.n_freq // self.patch_k, self.n_space // self.patch_s

    @property
    def n_patches(self):
        return int(np.prod(self.counts))

    @property
    def payload_dim(self):
        return self.patch_l * self.patch_k * self.patch_s * 2

    def coords(self):
        """[N_p, 3] integer patch coordinates in (t, f, s) lexicographic order."""
        g_l, g_k, g_s = self.counts
        return np.stack(np.meshgrid(np.arange(g_l), np.arange(g_k), np.arange(g_s), indexing="ij"), axis=-1).reshape(-1, 3)


def patch_grid(shape, patch_l, patch_k, patch_s):
    """PatchGrid for a tensor of shape (L, K, N_s[, 2]); a non-divisible axis raises ConfigurationError."""
    return make_config(PatchGrid, patch_l=patch_l, patch_k=patch_k, patch_s=patch_s,
                       n_time=shape[0], n_freq=shape[1], n_space=shape[2])


def patch_grid_for(shape, config):
    return patch_grid(shape, config.patch_l, config.patch_k, config.patch_s)


class PatchSequence(BaseModel):
    """Patch embeddings [N, D] with their grid coordinates [N, 3]."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    embeddings: T.DiffTensor
    coords: np.ndarray
    payload_dim: int

    @model_validator(mode="after")
    def _rows(self):
        if self.coords.ndim != 2 or self.coords.shape != (self.embeddings.shape[0], 3):
            raise ValueError(f"coords {self.coords.shape} do not match {self.embeddings.shape[0]} tokens")
        return self


def _check(x, grid):
    expected = (grid.n_time, grid.n_freq, grid.n_space, 2)
    if tuple(x.shape) != expected:
        raise ShapeMismatchError(f"tensor shape {tuple(x.shape)} does not match patch grid {expected}")


def slice_patches(x, grid):
    """
    Cut X [L, K, N_s, 2] into payloads [N_p, E].

    Returns
    -------
    (payloads, coords)
    """
    x = np.asarray(x.data if isinstance(x, CsiTensor) else x)
    _check(x, grid)
    g_l, g_k, g_s = grid.counts
    blocks = x.reshape(g_l, grid.patch_l, g_k, grid.patch_k, g_s, grid.patch_s, 2)
    payloads = blocks.transpose(0, 2, 4, 1, 3, 5, 6).reshape(grid.n_patches, grid.payload_dim)
    return payloads, grid.coords()


def unslice_patches(payloads, grid):
    """Inverse of slice_patches."""
    payloads = np.asarray(getattr(payloads, "value", payloads))
    if payloads.shape != (grid.n_patches, grid.payload_dim):
        raise ShapeMismatchError(f"payloads {payloads.shape} do not match grid ({grid.n_patches}, {grid.payload_dim})")
    g_l, g_k, g_s = grid.counts
    blocks = payloads.reshape(g_l, g_k, g_s, grid.patch_l, grid.patch_k, grid.patch_s, 2)
    return blocks.transpose(0, 3, 1, 4, 2, 5, 6).reshape(grid.n_time, grid.n_freq, grid.n_space, 2)


def embed(payloads, W, b):
    """Affine patch embedding payloads @ W + b."""
    payloads = T.as_tensor(payloads)
    if payloads.shape[-1] != W.shape[0]:
        raise ShapeMismatchError(f"embed: payload dim {payloads.shape[-1]} does not match weights {W.shape}")
    return T.add(T.matmul(payloads, W), b)
