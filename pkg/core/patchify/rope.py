"""
3D rotary positional encoding.

The feature axis is cut into three contiguous thirds (time, frequency, space);
inside a third, pair (2k, 2k+1) is rotated by pos * omega_k.
"""
import numpy as np

from core.tensor import tensor as T
from core.utils.constants import rope_base
from core.utils.errors import ConfigurationError, ShapeMismatchError

__all__ = ["rope_frequencies", "rope_tables", "apply_3d_rope", "rope_sequence"]


def rope_frequencies(dim, base=rope_base):
    """omega_k = base^(-2k / (dim/6)) for k = 0 .. dim/6 - 1."""
    if dim <= 0 or dim % 6:
        raise ConfigurationError(f"rotary width {dim} must be a positive multiple of 6")
    n = dim // 6
    return base ** (-2.0 * np.arange(n) / n)


def rope_tables(coords, dim, n_prefix=0, base=rope_base):
    """
    cos/sin tables [n_prefix + N, dim] for rotate_pairs.

    The first n_prefix rows (meta tokens) carry no rotation.
    """
    if coords is None:
        raise ShapeMismatchError("rotary encoding needs per-token coordinates")
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ShapeMismatchError(f"coordinates must be [N, 3], got {coords.shape}")
    omega = rope_frequencies(dim, base)
    # [N, 3, dim/6] -> each angle repeated for both members of its pair
    angles = np.repeat(coords[:, :, None] * omega[None, None, :], 2, axis=-1).reshape(len(coords), dim)
    prefix = np.zeros((n_prefix, dim))
    angles = np.concatenate([prefix, angles], axis=0)
    return np.cos(angles), np.sin(angles)


def apply_3d_rope(x, coords, n_prefix=0, base=rope_base):
    """Rotate token features x [..., n_prefix + N, dim] by their 3D grid coordinates."""
    x = T.as_tensor(x)
    coords = None if coords is None else np.asarray(coords)
    if coords is not None and x.shape[-2] != n_prefix + len(coords):
        raise ShapeMismatchError(f"{x.shape[-2]} tokens but {len(coords)} coordinates and {n_prefix} prefix rows")
    cos, sin = rope_tables(coords, x.shape[-1], n_prefix, base)
    return T.rotate_pairs(x, cos, sin)


def rope_sequence(seq):
    """PatchSequence -> PatchSequence with rotated embeddings."""
    from .patches import PatchSequence
    return PatchSequence(embeddings=apply_3d_rope(seq.embeddings, seq.coords), coords=seq.coords,
                         payload_dim=seq.payload_dim)
