"""
Band-limited self-attention with globally visible meta tokens.

Tokens are laid out [meta (n_meta rows), sequence (L rows)]. Meta rows attend to
every token. A sequence row i attends to every meta token and to sequence rows
j with |i - j| <= W (and j <= i when causal).
"""
import numpy as np

from core.tensor import tensor as T

__all__ = ["attention_mask", "masked_attention", "full_attention", "windowed_attention"]


def attention_mask(n_meta, length, window=None, causal=False, meta_global=True):
    """Dense boolean [N, N] mask of allowed (query, key) pairs; window None means unbounded."""
    n = n_meta + length
    allowed = np.zeros((n, n), dtype=bool)
    allowed[:n_meta] = True
    allowed[n_meta:, :n_meta] = meta_global
    i = np.arange(length)[:, None]
    j = np.arange(length)[None, :]
    band = np.ones((length, length), dtype=bool) if window is None else np.abs(i - j) <= window
    if causal:
        band &= j <= i
    allowed[n_meta:, n_meta:] = band
    return allowed


def _scaled_scores(Q, K):
    return T.mul(T.matmul(Q, T.swapaxes(K, -1, -2)), 1.0 / np.sqrt(Q.shape[-1]))


def masked_attention(Q, K, V, allowed, return_weights=False):
    """softmax(QK^T / sqrt(d_k) + bias) V with -inf bias outside `allowed`. Quadratic in N."""
    Q, K, V = T.as_tensor(Q), T.as_tensor(K), T.as_tensor(V)
    bias = np.where(allowed, 0.0, -np.inf).astype(Q.value.dtype)
    A = T.softmax(T.add(_scaled_scores(Q, K), bias), axis=-1)
    Y = T.matmul(A, V)
    return (Y, A.value) if return_weights else Y


def full_attention(Q, K, V, n_meta=0, causal=False, return_weights=False):
    allowed = attention_mask(n_meta, Q.shape[-2] - n_meta, None, causal)
    return masked_attention(Q, K, V, allowed, return_weights)


def windowed_attention(Q, K, V, window, n_meta=0, causal=False, meta_global=True, return_weights=False):
    """
    Attention restricted to a band of half-width `window`, in O(N * window) time and memory.

    Parameters
    ----------
    Q, K, V : DiffTensor
        [heads, n_meta + L, d_k].
    window : int
        Half-width W >= 1.
    return_weights : bool
        Also return the dense [heads, N, N] weight matrix (for inspection only).
    """
    Q, K, V = T.as_tensor(Q), T.as_tensor(K), T.as_tensor(V)
    heads, n, d = Q.shape
    length = n - n_meta
    dtype = Q.value.dtype
    scale = 1.0 / np.sqrt(d)

    if n_meta:
        Qm, Qs = T.split(Q, [n_meta, length], axis=-2)
        Km, Ks = T.split(K, [n_meta, length], axis=-2)
        Vm, Vs = T.split(V, [n_meta, length], axis=-2)
        A_meta_rows = T.softmax(_scaled_scores(Qm, K), axis=-1)
        Y_meta = T.matmul(A_meta_rows, V)
    else:
        Qs, Ks, Vs = Q, K, V

    Kg = T.window_gather(Ks, window)
    Vg = T.window_gather(Vs, window)
    span = Kg.shape[-2]
    w = (span - 1) // 2
    local = T.reshape(T.matmul(T.reshape(Qs, (heads, length, 1, d)), T.swapaxes(Kg, -1, -2)), (heads, length, span))
    offset = np.arange(span)[None, :] - w
    position = np.arange(length)[:, None] + offset
    valid = (position >= 0) & (position < length) & (np.abs(offset) <= window)
    if causal:
        valid &= offset <= 0
    local = T.add(T.mul(local, scale), np.where(valid, 0.0, -np.inf).astype(dtype))

    if n_meta:
        to_meta = _scaled_scores(Qs, Km)
        if not meta_global:
            to_meta = T.add(to_meta, np.full(to_meta.shape[-2:], -np.inf, dtype=dtype))
        A = T.softmax(T.concat([to_meta, local], axis=-1), axis=-1)
        A_meta, A_local = T.split(A, [n_meta, span], axis=-1)
    else:
        A = T.softmax(local, axis=-1)
        A_local = A

    Y_seq = T.reshape(T.matmul(T.reshape(A_local, (heads, length, 1, span)), Vg), (heads, length, d))
    if n_meta:
        Y_seq = T.add(T.matmul(A_meta, Vm), Y_seq)
        Y = T.concat([Y_meta, Y_seq], axis=-2)
    else:
        Y = Y_seq

    if not return_weights:
        return Y
    weights = np.zeros((heads, n, n))
    rows, cols = np.nonzero(valid)
    weights[:, n_meta + rows, n_meta + position[rows, cols]] = A_local.value[:, rows, cols]
    if n_meta:
        weights[:, :n_meta] = A_meta_rows.value
        weights[:, n_meta:, :n_meta] = A_meta.value
    return Y, weights
