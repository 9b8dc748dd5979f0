"""Pseudo-time step management: fixed steps and the adaptive two-point estimator."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .models import ConfigError

log = logging.getLogger(__name__)

TAU_MIN, TAU_MAX = 1e-6, 1e6


@dataclass(frozen=True)
class Shrink:
    start: float = 2.0
    end: float = 6.0
    gamma_min: float = 0.1
    enabled: bool = True

    def __post_init__(self):
        if not self.end > self.start:
            raise ConfigError("shrink end must exceed start")
        if not 0.0 < self.gamma_min <= 1.0:
            raise ConfigError("gamma_min must be in (0, 1]")


@dataclass(frozen=True)
class PtsState:
    """Per-residual step sizes plus the adaptive-update settings.

    ``anchor`` is the interior loss of the initial parameters, one entry per
    residual component; it is set once by the trainer.
    """

    tau: tuple[float, ...]
    mode: str = "adaptive"
    beta: float = 0.5
    freq: int = 1000
    eps: float = 1e-8
    shrink: Shrink = field(default_factory=Shrink)
    anchor: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ConfigError(f"unknown pts mode {self.mode!r}")
        if not self.tau or any(not (t > 0 and math.isfinite(t)) for t in self.tau):
            raise ConfigError("tau components must be positive and finite")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("beta must be in (0, 1]")
        if self.freq < 1:
            raise ConfigError("update frequency must be >= 1")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")

    @classmethod
    def fixed(cls, tau: float | Sequence[float], components: int = 1) -> "PtsState":
        taus = (float(tau),) * components if np.isscalar(tau) else tuple(float(t) for t in tau)
        return cls(tau=taus, mode="fixed")

    @classmethod
    def adaptive(cls, components: int = 1, tau0: float = 1.0, **kw) -> "PtsState":
        return cls(tau=(float(tau0),) * components, mode="adaptive", **kw)

    def due(self, k: int) -> bool:
        return self.mode == "adaptive" and k >= 1 and k % self.freq == 0


def shrink_factor(l0: float, lk: float, start: float = 2.0, end: float = 6.0, gamma_min: float = 0.1, eps: float = 1e-8) -> float:
    """Cosine decay in the log10 loss reduction, from 1 down to ``gamma_min``."""
    p = (math.log10((l0 + eps) / (lk + eps)) - start) / (end - start)
    return gamma_from_progress(p, gamma_min)


def gamma_from_progress(p: float, gamma_min: float = 0.1) -> float:
    p = min(max(p, 0.0), 1.0)
    return gamma_min + (1.0 - gamma_min) * 0.5 * (1.0 + math.cos(math.pi * p))


def estimate_tau_hat(du, dr, gamma: float, eps: float = 1e-8) -> float:
    """``gamma * ||du|| / (||dr|| + eps)`` over the batch samples."""
    du = np.asarray(du, dtype=np.float64).reshape(-1)
    dr = np.asarray(dr, dtype=np.float64).reshape(-1)
    if du.shape != dr.shape:
        raise ValueError("du and dr must have the same length")
    return float(gamma * np.linalg.norm(du) / (np.linalg.norm(dr) + eps))


def update_tau(state: PtsState, k: int, tau_hat: Sequence[float]) -> PtsState:
    """EMA blend on update iterations, identity otherwise; result clamped."""
    if k < 1:
        raise ValueError("iteration index must be >= 1")
    if state.mode == "fixed" or k % state.freq != 0:
        return state
    if len(tau_hat) != len(state.tau):
        raise ValueError("tau_hat must have one entry per tau component")
    new = []
    for old, hat in zip(state.tau, tau_hat):
        hat = float(hat)
        if not math.isfinite(hat):
            log.warning("nonfinite tau estimate at iteration %d; keeping tau=%g", k, old)
            new.append(old)
            continue
        blended = (1.0 - state.beta) * old + state.beta * hat
        new.append(min(max(blended, TAU_MIN), TAU_MAX))
    return replace(state, tau=tuple(new))


def component_gammas(state: PtsState, smoothed_losses: Sequence[float]) -> list[float]:
    """Shrink factor per residual component against its own initial anchor."""
    if not state.shrink.enabled or state.anchor is None:
        return [1.0] * len(state.tau)
    s = state.shrink
    return [shrink_factor(l0, lk, s.start, s.end, s.gamma_min, state.eps) for l0, lk in zip(state.anchor, smoothed_losses)]
