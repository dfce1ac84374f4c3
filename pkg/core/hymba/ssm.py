"""
Selective state space branch, Mamba-2 style: a scalar decay per head and
input-dependent B, C and step size.

    u   = SiLU(x)
    dt  = softplus(u W_dt + dt_bias)              [L, heads]
    a   = exp(-dt * exp(A_log))                   [L, heads], in (0, 1)
    h_t = a_t h_{t-1} + dt_t (u_t outer B_t)      [heads, p, N_state]
    y_t = h_t C_t + D * u_t
"""
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict

from core.tensor import tensor as T
from core.utils.errors import ShapeMismatchError

log = logging.getLogger(__name__)

__all__ = ["SsmParams", "init_ssm", "ssm_discretize", "ssm_scan"]


class SsmParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    W_dt: T.DiffTensor      # [width, heads]
    dt_bias: T.DiffTensor   # [heads]
    A_log: T.DiffTensor     # [heads]
    W_B: T.DiffTensor       # [width, N_state]
    W_C: T.DiffTensor       # [width, N_state]
    D_skip: T.DiffTensor    # [width]

    @property
    def n_heads(self):
        return self.A_log.shape[0]

    @classmethod
    def from_params(cls, params, prefix):
        return cls(**{k: params[f"{prefix}ssm.{k}"] for k in cls.model_fields})


def init_ssm(rng, prefix, width, n_heads, n_state, dt_min=1e-3, dt_max=1e-1, std=0.02):
    """Parameter dict of one SSM branch, keys prefixed with `prefix`ssm."""
    dt = np.exp(rng.uniform(np.log(dt_min), np.log(dt_max), n_heads))
    return {
        f"{prefix}ssm.W_dt": T.parameter(rng.normal(0.0, std, (width, n_heads)), f"{prefix}ssm.W_dt"),
        f"{prefix}ssm.dt_bias": T.parameter(dt + np.log(-np.expm1(-dt)), f"{prefix}ssm.dt_bias"),
        f"{prefix}ssm.A_log": T.parameter(np.log(rng.uniform(1.0, 16.0, n_heads)), f"{prefix}ssm.A_log"),
        f"{prefix}ssm.W_B": T.parameter(rng.normal(0.0, std, (width, n_state)), f"{prefix}ssm.W_B"),
        f"{prefix}ssm.W_C": T.parameter(rng.normal(0.0, std, (width, n_state)), f"{prefix}ssm.W_C"),
        f"{prefix}ssm.D_skip": T.parameter(np.ones(width), f"{prefix}ssm.D_skip"),
    }


def ssm_discretize(x, params):
    """
    Input-dependent discretization of x [L, width].

    Returns
    -------
    u, dt, a, B, C : DiffTensor
        [L, width], [L, heads], [L, heads], [L, N_state], [L, N_state]
    """
    x = T.as_tensor(x)
    width = params.W_dt.shape[0]
    if x.ndim != 2 or x.shape[-1] != width:
        raise ShapeMismatchError(f"ssm: input {x.shape} does not match branch width {width}")
    if width % params.n_heads:
        raise ShapeMismatchError(f"ssm: width {width} does not split into {params.n_heads} heads")
    u = T.silu(x)
    dt = T.softplus(T.add(T.matmul(u, params.W_dt), params.dt_bias))
    a = T.exp(T.neg(T.mul(dt, T.exp(params.A_log))))
    unstable = int((a.value >= 1.0).sum())
    if unstable:
        log.warning("ssm: %d discretized decays reached 1, clamped below", unstable)
        a = T.minimum(a, 1.0 - np.finfo(a.value.dtype).eps)
    B = T.matmul(u, params.W_B)
    C = T.matmul(u, params.W_C)
    return u, dt, a, B, C


def ssm_scan(x, params):
    """y [L, width] of the selective recurrence, evaluated with a parallel linear scan."""
    u, dt, a, B, C = ssm_discretize(x, params)
    length, width = u.shape
    heads = params.n_heads
    n_state = B.shape[-1]
    per_head = width // heads

    # [L, heads, p, N]
    drive = T.mul(T.reshape(T.mul(T.reshape(u, (length, heads, per_head)), T.reshape(dt, (length, heads, 1))),
                            (length, heads, per_head, 1)),
                  T.reshape(B, (length, 1, 1, n_state)))
    states = T.linear_scan(T.reshape(a, (length, heads, 1, 1)), drive, axis=0)
    y = T.sum(T.mul(states, T.reshape(C, (length, 1, 1, n_state))), axis=-1)
    return T.add(T.reshape(y, (length, width)), T.mul(u, params.D_skip))
