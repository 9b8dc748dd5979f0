"""Learning-rate schedule: linear warmup then continuous exponential decay."""

from __future__ import annotations

from dataclasses import dataclass

from ..models import ConfigError


@dataclass(frozen=True)
class LrSchedule:
    peak: float = 1e-3
    warmup: int = 2000
    decay: float = 0.9
    period: int = 2000

    def __post_init__(self):
        if self.peak < 0:
            raise ConfigError("peak learning rate must be nonnegative")
        if self.warmup < 0 or self.period < 1:
            raise ConfigError("warmup must be >= 0 and decay period >= 1")
        if not 0 < self.decay <= 1:
            raise ConfigError("decay rate must be in (0, 1]")

    def __call__(self, k: int) -> float:
        return lr_at(self, k)


def lr_at(schedule: LrSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("step index must be >= 0")
    if k < schedule.warmup:
        return schedule.peak * k / schedule.warmup
    return schedule.peak * schedule.decay ** ((k - schedule.warmup) / schedule.period)
