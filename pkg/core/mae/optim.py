"""
AdamW with decoupled weight decay, and the warmup + cosine learning-rate schedule.
"""
import math

import numpy as np

__all__ = ["lr_at", "warmup_steps", "AdamW"]


def warmup_steps(config, total_steps):
    return max(1, int(round(config.warmup_ratio * total_steps)))


def _cosine_anneal(x, min_y, max_y):
    return min_y + (max_y - min_y) * (1 + math.cos(x * math.pi)) / 2


def lr_at(config, step, total_steps):
    """Linear base_lr -> max_lr over the warmup steps, then cosine down to min_lr at the last step, total_steps - 1."""
    warm = warmup_steps(config, total_steps)
    if step < warm:
        return config.base_lr + (config.max_lr - config.base_lr) * step / warm
    span = total_steps - 1 - warm
    if span <= 0:
        return config.max_lr
    frac = min(1.0, (step - warm) / span)
    return _cosine_anneal(frac, config.min_lr, config.max_lr)


class AdamW:
    """
    Adam moments with decoupled weight decay on matrices (ndim >= 2).

    Parameters
    ----------
    params : dict
        name -> DiffTensor, updated in place.
    """

    def __init__(self, params, beta1=0.9, beta2=0.95, eps=1e-8, weight_decay=0.05):
        self.params = params
        self.beta1, self.beta2, self.eps, self.weight_decay = beta1, beta2, eps, weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.value) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.value) for name, p in params.items()}

    @classmethod
    def from_config(cls, params, config):
        return cls(params, config.beta1, config.beta2, config.adam_eps, config.weight_decay)

    def step(self, lr):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            if p.ndim >= 2 and self.weight_decay:
                p.value = p.value - lr * self.weight_decay * p.value
            p.value = p.value - lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)

    def state_dict(self):
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state_dict(self, state):
        self.t = int(state["t"])
        for name in self.params:
            self.m[name] = np.asarray(state["m"][name], dtype=np.float64).reshape(self.params[name].shape)
            self.v[name] = np.asarray(state["v"][name], dtype=np.float64).reshape(self.params[name].shape)
