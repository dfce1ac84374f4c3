import numpy as np
from pydantic import BaseModel, Field, model_validator

from core.utils.errors import MaskingError
from core.utils.utils import STRATEGIES

__all__ = ["CurriculumSchedule", "curriculum_ratio", "sample_strategy", "schedule_from"]


class CurriculumSchedule(BaseModel):
    start: float = Field(0.5, ge=0, le=1, description="Masking ratio at step 0.")
    end: float = Field(0.75, ge=0, le=1, description="Masking ratio at the last step.")
    total_steps: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _monotone(self):
        if self.start > self.end:
            raise ValueError("curriculum ratio must not decrease")
        return self


def schedule_from(train_config, total_steps):
    return CurriculumSchedule(start=train_config.mask_ratio_start, end=train_config.mask_ratio_end,
                              total_steps=total_steps)


def curriculum_ratio(schedule, step):
    """Linear ramp from start to end, clamped outside [0, total_steps]."""
    if schedule.total_steps == 0:
        return schedule.end
    frac = min(max(step / schedule.total_steps, 0.0), 1.0)
    return schedule.start + (schedule.end - schedule.start) * frac


def sample_strategy(step, seed, weights=(1.0, 1.0, 1.0, 1.0)):
    """Draw the masking strategy of a step; a pure function of (step, seed, weights)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(STRATEGIES),) or (weights < 0).any():
        raise MaskingError(f"need {len(STRATEGIES)} non-negative strategy weights, got {weights.tolist()}")
    if weights.sum() == 0:
        raise MaskingError("all strategy weights are zero")
    rng = np.random.default_rng([seed, step])
    return STRATEGIES[int(rng.choice(len(STRATEGIES), p=weights / weights.sum()))]
