"""
Pretraining loop: curriculum masking, joint loss, AdamW with warmup + cosine.

Every random choice of step t (batch order, strategy, mask) is a function of
(seed, t), so a run resumed from a full-state checkpoint reproduces the
uninterrupted one.
"""
import logging

import numpy as np
import pandas as pd
from tqdm import tqdm

from core.masking.curriculum import curriculum_ratio, sample_strategy, schedule_from
from core.masking.strategies import make_plan, strategy_feasible
from core.patchify.patches import patch_grid_for, slice_patches
from core.tensor import tensor as T
from core.utils.errors import ConfigurationError, TrainingDivergedError
from core.utils.utils import STRATEGIES
from .loss import PhysicsSchedule, loss_components, loss_total
from .optim import AdamW, lr_at

log = logging.getLogger(__name__)

__all__ = [
    "LOSS_COLUMNS", "step_seed", "batch_indices", "grid_strategy_weights", "plan_for_step", "train_step", "pretrain",
]

LOSS_COLUMNS = ["step", "lr", "rho", "L_stat", "L_eng", "L_phase", "L_total"]


def step_seed(seed, step):
    return int(np.random.SeedSequence([seed, step]).generate_state(1)[0])


def batch_indices(n_samples, batch_size, seed, step):
    """Sample indices of `step`; each epoch is a fresh permutation."""
    per_epoch = -(-n_samples // batch_size)
    epoch, k = divmod(step, per_epoch)
    order = np.random.default_rng([seed, epoch]).permutation(n_samples)
    return order[k * batch_size:(k + 1) * batch_size]


def grid_strategy_weights(grid, weights):
    """
    `weights` with the strategies the patch grid cannot host set to zero.

    Raises ConfigurationError when no strategy with a positive weight is left.
    """
    kept = [w if strategy_feasible(s, grid) else 0.0 for s, w in zip(STRATEGIES, weights)]
    if not sum(kept):
        raise ConfigurationError(f"no masking strategy with a positive weight fits the patch grid {grid.counts}")
    return kept


def plan_for_step(grid, config, schedule, step):
    strategy = sample_strategy(step, config.seed, grid_strategy_weights(grid, config.strategy_weights))
    return make_plan(strategy, grid, curriculum_ratio(schedule, step), step_seed(config.seed, step))


def train_step(model, batch, plan, step, config, weights, optimizer, total_steps, gamma=None):
    """
    One optimizer step on a batch of CSI tensors sharing one mask plan.

    Parameters
    ----------
    model : ComHymba
    batch : array
        [B, L, K, N_s, 2].
    plan : MaskPlan
    step : int
    config : TrainConfig
    weights : LossWeights
        Resolved loss weights.
    optimizer : AdamW
    total_steps : int
    gamma : float, optional
        Physical-loss weight of this step; defaults to weights.gamma(step).

    Returns
    -------
    dict
        step, lr, rho and the batch-mean loss terms.
    """
    lr = lr_at(config, step, total_steps)
    grid = patch_grid_for(batch.shape[1:], model.config)
    coords = grid.coords()
    model.zero_grad()
    sums = dict.fromkeys(LOSS_COLUMNS[3:], 0.0)
    scale = 1.0 / len(batch)
    for x in batch:
        payloads, _ = slice_patches(x, grid)
        components = loss_components(payloads, model.forward(payloads, coords, plan), plan)
        total = loss_total(components, weights, step, gamma)
        values = {k: float(v.value) for k, v in components.items()}
        values["L_total"] = float(total.value)
        if not np.isfinite(list(values.values())).all():
            log.error("loss diverged at step %d: %s", step, values)
            raise TrainingDivergedError(step, values)
        T.mul(total, scale).backward()
        for k, v in values.items():
            sums[k] += v * scale
    optimizer.step(lr)
    return {"step": step, "lr": lr, "rho": plan.ratio, **sums}


def pretrain(model, data, config, weights, total_steps=None, start_step=0, optimizer_state=None,
             schedule_state=None, stop_step=None, progress=True):
    """
    Run (or continue) pretraining on `data` [N, L, K, N_s, 2].

    Steps start_step .. min(stop_step, total_steps) - 1 are taken; the schedules
    always span total_steps, so a run split at stop_step and resumed matches an
    uninterrupted one.

    Returns
    -------
    (pd.DataFrame of LOSS_COLUMNS, AdamW, PhysicsSchedule)
    """
    data = np.asarray(data)
    total_steps = total_steps or config.total_steps(len(data))
    weights = weights.resolved(total_steps)
    schedule = PhysicsSchedule(weights)
    if schedule_state:
        schedule.load_state(schedule_state)
    curriculum = schedule_from(config, total_steps)
    grid = patch_grid_for(data.shape[1:], model.config)
    weights_in_use = grid_strategy_weights(grid, config.strategy_weights)
    if weights_in_use != list(config.strategy_weights):
        log.warning("patch grid %s cannot host every masking strategy, sampling weights %s", grid.counts,
                    dict(zip(STRATEGIES, weights_in_use)))
    optimizer = AdamW.from_config(model.params, config)
    if optimizer_state is not None:
        optimizer.load_state_dict(optimizer_state)

    end = total_steps if stop_step is None else min(stop_step, total_steps)
    log.info("pretraining steps %d..%d of %d on %d samples, batch %d", start_step, end, total_steps, len(data),
             config.batch_size)
    records = []
    for step in tqdm(range(start_step, end), desc="pretraining", disable=not progress):
        plan = plan_for_step(grid, config, curriculum, step)
        batch = data[batch_indices(len(data), config.batch_size, config.seed, step)]
        record = train_step(model, batch, plan, step, config, weights, optimizer, total_steps,
                            gamma=schedule.gamma(step))
        schedule.update(step, record["L_stat"])
        log.debug("step %d strategy %s %s", step, plan.strategy, record)
        records.append(record)
    return pd.DataFrame(records, columns=LOSS_COLUMNS), optimizer, schedule
