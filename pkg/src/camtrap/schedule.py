"""One-cycle learning rate: linear warm start, then cosine annealing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StepOutOfRange, ValidationError

MAX_LR = 1e-4
END_LR = 1e-6
WARMUP_ITERATIONS = 600


@dataclass(frozen=True)
class ScheduleConfig:
    warmup_steps: int
    total_steps: int
    max_lr: float = MAX_LR
    end_lr: float = END_LR

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValidationError(f"total_steps must be positive, got {self.total_steps}")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValidationError(
                f"need 0 <= warmup_steps < total_steps, got {self.warmup_steps}/{self.total_steps}"
            )
        if not 0 < self.end_lr <= self.max_lr:
            raise ValidationError(f"need 0 < end_lr <= max_lr, got {self.end_lr}, {self.max_lr}")


def warmup_steps_for(batch_size: int, grad_accum: int) -> int:
    """Optimizer steps covering 600 forward iterations at ``batch_size``.

    The image count (600 * batch_size) is fixed, so only the accumulation
    factor changes the number of optimizer steps.
    """
    if batch_size < 1 or grad_accum < 1:
        raise ValidationError("batch_size and grad_accum must be >= 1")
    return -(-WARMUP_ITERATIONS // grad_accum)


def lr_at(step: int, config: ScheduleConfig) -> float:
    if not 0 <= step < config.total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {config.total_steps})")
    w, last = config.warmup_steps, config.total_steps - 1
    lo, hi = config.end_lr, config.max_lr
    if step == last:
        return lo
    if step < w:
        return lo + (hi - lo) * (step / w)
    u = (step - w) / (last - w)
    return lo + 0.5 * (hi - lo) * (1.0 + math.cos(math.pi * u))


def lr_curve(config: ScheduleConfig) -> np.ndarray:
    """``lr_at`` for every step, vectorized. Agrees with the scalar form to rounding."""
    steps = np.arange(config.total_steps, dtype=np.float64)
    w, last = config.warmup_steps, config.total_steps - 1
    lo, hi = config.end_lr, config.max_lr
    out = np.empty_like(steps)
    warm = steps < w
    if w > 0:
        out[warm] = lo + (hi - lo) * (steps[warm] / w)
    if last > w:
        u = (steps[~warm] - w) / (last - w)
        out[~warm] = lo + 0.5 * (hi - lo) * (1.0 + np.cos(np.pi * u))
    out[last] = lo
    return out


def write_schedule(config: ScheduleConfig, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "lr"])
        for step in range(config.total_steps):
            w.writerow([step, repr(lr_at(step, config))])
