"""Learning-rate schedule: linear warmup then cosine decay to zero."""

from __future__ import annotations

import math

from ..errors import SchemaError
from .config import TrainConfig


class StepOutOfRange(SchemaError):
    """Schedule queried outside [0, total_steps]."""


def cosine_lr(step: int, cfg: TrainConfig) -> float:
    """Learning rate at a given step.

    Ramps linearly from 0 to max_lr over warmup_steps, then follows
    max_lr * 0.5 * (1 + cos(pi * progress)) down the decay span.  The peak
    value at step == warmup_steps and the zero at step == total_steps are
    exact, not approximate.
    """
    if step < 0 or step > cfg.total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {cfg.total_steps}]")
    if step < cfg.warmup_steps:
        return cfg.max_lr * step / cfg.warmup_steps
    if step == cfg.warmup_steps:
        return cfg.max_lr
    if step == cfg.total_steps:
        return 0.0
    progress = (step - cfg.warmup_steps) / (cfg.total_steps - cfg.warmup_steps)
    return cfg.max_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
