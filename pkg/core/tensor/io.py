"""
CHT1 binary tensor files: magic b"CHT1", u32 rank, rank x u64 dims, then the
row-major little-endian float64 payload.
"""
from pathlib import Path

import numpy as np

from core.utils.constants import tensor_magic
from core.utils.errors import TensorFormatError

__all__ = ["save_tensor", "load_tensor"]


def save_tensor(filepath, array):
    """Write a real array to `filepath` in CHT1 format. Every axis must be non-empty."""
    array = np.asarray(getattr(array, "value", array))
    if np.iscomplexobj(array):
        raise TensorFormatError(f"{filepath}: complex arrays must be mapped to real first")
    if array.ndim == 0 or min(array.shape) <= 0:
        raise TensorFormatError(f"{filepath}: shape {array.shape} has an empty or missing axis")
    with open(filepath, "wb") as f:
        f.write(tensor_magic)
        np.array([array.ndim], dtype="<u4").tofile(f)
        np.array(array.shape, dtype="<u8").tofile(f)
        np.ascontiguousarray(array, dtype="<f8").tofile(f)


def load_tensor(filepath):
    """Read a CHT1 file back into a float64 array."""
    filepath = Path(filepath)
    if not filepath.is_file():
        raise TensorFormatError(f"{filepath}: no such tensor file")
    with open(filepath, "rb") as f:
        magic = f.read(len(tensor_magic))
        if magic != tensor_magic:
            raise TensorFormatError(f"{filepath}: bad magic {magic!r}")
        rank = np.fromfile(f, dtype="<u4", count=1)
        if rank.size != 1 or rank[0] == 0:
            raise TensorFormatError(f"{filepath}: truncated or zero rank")
        shape = np.fromfile(f, dtype="<u8", count=int(rank[0]))
        if shape.size != rank[0] or (shape == 0).any():
            raise TensorFormatError(f"{filepath}: bad shape header {shape.tolist()}")
        count = int(np.prod(shape))
        data = np.fromfile(f, dtype="<f8", count=count)
        if data.size != count or f.read(1):
            raise TensorFormatError(f"{filepath}: payload holds {data.size} values, header says {count}")
    return data.astype(np.float64).reshape(tuple(int(n) for n in shape))
