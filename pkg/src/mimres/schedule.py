"""Training schedule: linear warmup followed by cosine decay to zero."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InputError


@dataclass(frozen=True)
class TrainSchedule:
    base_lr: float
    total_steps: int
    warmup_steps: int = 0
    batch_size: int = 128
    weight_decay: float = 0.05

    def __post_init__(self):
        if self.base_lr <= 0:
            raise InputError(f"base_lr must be > 0, got {self.base_lr}")
        if self.total_steps < 1:
            raise InputError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise InputError(f"warmup_steps {self.warmup_steps} must be in [0, total_steps={self.total_steps}]")
        if self.batch_size < 1:
            raise InputError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0:
            raise InputError(f"weight_decay must be >= 0, got {self.weight_decay}")

    def lr_at(self, step: int) -> float:
        """Learning rate for step (0-based): base_lr*step/warmup during warmup,
        then cosine decay reaching 0 at total_steps."""
        if step < self.warmup_steps:
            return self.base_lr * step / self.warmup_steps
        span = self.total_steps - self.warmup_steps
        if span == 0:
            return 0.0
        progress = (step - self.warmup_steps) / span
        progress = min(max(progress, 0.0), 1.0)
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
