"""
Joint reconstruction loss on masked patches.

    L_total = lambda_stat L_stat + gamma(t) (lambda_energy L_eng + lambda_phase L_phase)

Payload rows hold interleaved (re, im) pairs; L_eng and L_phase re-pair them
into complex elements.
"""
import logging

import numpy as np

from core.tensor import tensor as T
from core.utils.constants import phase_epsilon
from core.utils.errors import MaskingError, ShapeMismatchError

log = logging.getLogger(__name__)

__all__ = ["loss_stat", "loss_energy", "loss_phase", "loss_components", "loss_total", "PhysicsSchedule"]


def _masked(H, H_hat, plan):
    H = np.asarray(getattr(H, "value", H))
    H_hat = T.as_tensor(H_hat)
    if H.shape != H_hat.shape:
        raise ShapeMismatchError(f"target {H.shape} and reconstruction {H_hat.shape} differ")
    idx = plan.masked_indices
    if len(idx) == 0:
        raise MaskingError("loss needs at least one masked patch")
    return H[idx], T.take(H_hat, idx, axis=0)


def _pairs(H, H_hat):
    n, E = H.shape
    if E % 2:
        raise ShapeMismatchError(f"payload width {E} does not pair into (re, im)")
    return H.reshape(n, E // 2, 2), T.reshape(H_hat, (n, E // 2, 2))


def loss_stat(H, H_hat, plan):
    """Mean squared error over the masked patches."""
    target, pred = _masked(H, H_hat, plan)
    diff = T.sub(pred, target)
    return T.mean(T.mul(diff, diff))


def loss_energy(H, H_hat, plan):
    """Mean squared difference of the |.|^2 maps over the masked patches."""
    target, pred = _pairs(*_masked(H, H_hat, plan))
    energy_target = np.sum(target ** 2, axis=-1)
    energy = T.sum(T.mul(pred, pred), axis=-1)
    diff = T.sub(energy, energy_target)
    return T.mean(T.mul(diff, diff))


def loss_phase(H, H_hat, plan, eps=phase_epsilon):
    """
    Mean |H/|H| - H_hat/|H_hat||^2 over the masked complex elements, each in [0, 4].

    Elements where either magnitude is below eps contribute 0.
    """
    target, pred = _pairs(*_masked(H, H_hat, plan))
    mag_target = np.sqrt(np.sum(target ** 2, axis=-1, keepdims=True))
    mag2_pred = T.sum(T.mul(pred, pred), axis=-1, keepdims=True)
    valid = (mag_target >= eps) & (np.sqrt(mag2_pred.value) >= eps)
    unit_target = np.where(valid, target / np.maximum(mag_target, eps), 0.0)
    unit_pred = T.div(pred, T.add(T.sqrt(T.add(mag2_pred, eps ** 2)), eps))
    diff = T.mul(T.sub(unit_pred, unit_target), valid.astype(target.dtype))
    return T.mean(T.sum(T.mul(diff, diff), axis=-1))


def loss_components(H, H_hat, plan):
    return {"L_stat": loss_stat(H, H_hat, plan), "L_eng": loss_energy(H, H_hat, plan),
            "L_phase": loss_phase(H, H_hat, plan)}


def loss_total(components, weights, step, gamma=None):
    """
    Weighted sum of the three terms at `step`.

    Parameters
    ----------
    components : dict
        L_stat, L_eng and L_phase as DiffTensors or floats.
    weights : LossWeights
        Resolved weights (activation_step and ramp_steps set).
    gamma : float, optional
        Overrides weights.gamma(step), e.g. from a PhysicsSchedule.
    """
    g = weights.gamma(step) if gamma is None else gamma
    total = weights.lambda_stat * components["L_stat"]
    if g > 0:
        total = total + g * (weights.lambda_energy * components["L_eng"] + weights.lambda_phase * components["L_phase"])
    return total


class PhysicsSchedule:
    """gamma(t) with the optional plateau trigger.

    Without a patience the schedule is weights.gamma(step). With one, the ramp
    starts early once L_stat has not improved by plateau_min_delta for
    plateau_patience consecutive steps.
    """

    def __init__(self, weights):
        self.weights = weights
        self.activation_step = weights.activation_step
        self.best = np.inf
        self.stale = 0

    def gamma(self, step):
        w = self.weights
        if step < self.activation_step:
            return 0.0
        if w.ramp_steps == 0:
            return 1.0
        return min(1.0, (step - self.activation_step) / w.ramp_steps)

    def update(self, step, l_stat):
        w = self.weights
        if w.plateau_patience is None or step >= self.activation_step:
            return
        if l_stat < self.best - w.plateau_min_delta:
            self.best = l_stat
            self.stale = 0
            return
        self.stale += 1
        if self.stale >= w.plateau_patience:
            self.activation_step = step + 1
            log.warning("L_stat plateaued for %d steps, physical losses activate at step %d",
                        self.stale, self.activation_step)

    def state(self):
        return {"activation_step": self.activation_step, "best": min(self.best, np.finfo(np.float64).max),
                "stale": self.stale}

    def load_state(self, state):
        self.activation_step = int(state["activation_step"])
        self.best = float(state["best"])
        self.stale = int(state["stale"])
