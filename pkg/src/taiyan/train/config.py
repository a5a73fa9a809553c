"""Training hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SchemaError

PRETRAIN_MAX_LR = 2e-4
SFT_MAX_LR = 5e-5


class BadTrainConfig(SchemaError):
    """A TrainConfig field violates its invariant."""


def default_warmup(total_steps: int) -> int:
    """One percent of the step budget, rounded."""
    return round(0.01 * total_steps)


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run.

    warmup_steps defaults to 1% of total_steps when passed as None.  max_lr
    carries no default here; use PRETRAIN_MAX_LR or SFT_MAX_LR per mode.
    """

    max_lr: float
    total_steps: int
    batch_size: int
    seq_len: int
    warmup_steps: int | None = None
    repeat_factor: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.warmup_steps is None:
            object.__setattr__(self, "warmup_steps", default_warmup(self.total_steps))
        if not (isinstance(self.max_lr, (int, float)) and self.max_lr > 0):
            raise BadTrainConfig(f"max_lr must be positive, got {self.max_lr!r}")
        for name in ("total_steps", "batch_size", "seq_len", "repeat_factor"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise BadTrainConfig(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.warmup_steps, int) or self.warmup_steps < 0:
            raise BadTrainConfig(f"warmup_steps must be nonnegative, got {self.warmup_steps!r}")
        if self.warmup_steps >= self.total_steps:
            raise BadTrainConfig(
                f"warmup_steps ({self.warmup_steps}) must be < total_steps ({self.total_steps})"
            )
        if not isinstance(self.seed, int):
            raise BadTrainConfig(f"seed must be an integer, got {self.seed!r}")
