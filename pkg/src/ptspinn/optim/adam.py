"""Bias-corrected Adam on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ParamVector


class NonFiniteGradient(FloatingPointError):
    """Gradient contains NaN or inf; the step was not applied."""


def _flat(x) -> np.ndarray:
    return x.numpy() if isinstance(x, ParamVector) else np.asarray(x, dtype=np.float64)


def check_finite(grad: np.ndarray) -> None:
    if not np.all(np.isfinite(grad)):
        bad = int(np.count_nonzero(~np.isfinite(grad)))
        raise NonFiniteGradient(f"{bad} nonfinite gradient entries; step rejected")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params, **kw) -> "AdamState":
        n = len(_flat(params))
        return cls(np.zeros(n), np.zeros(n), **kw)

    def arrays(self, prefix: str = "adam") -> dict[str, np.ndarray]:
        return {f"{prefix}.m": self.m, f"{prefix}.v": self.v, f"{prefix}.step": np.array(self.step)}

    def load(self, arrays: dict, prefix: str = "adam") -> "AdamState":
        return AdamState(
            np.array(arrays[f"{prefix}.m"]), np.array(arrays[f"{prefix}.v"]), int(arrays[f"{prefix}.step"]),
            self.beta1, self.beta2, self.eps,
        )


def adam_direction(m, v, g, step, beta1, beta2, eps):
    """Moment update and bias-corrected direction; shared with the rotated-basis path."""
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    return m, v, mhat / (np.sqrt(vhat) + eps)


def adam_step(state: AdamState, params, grad, lr: float):
    """One update. Returns ``(new_state, new_params)``; inputs are not modified."""
    g = _flat(grad)
    check_finite(g)
    step = state.step + 1
    m, v, d = adam_direction(state.m, state.v, g, step, state.beta1, state.beta2, state.eps)
    theta = _flat(params) - lr * d
    new = AdamState(m, v, step, state.beta1, state.beta2, state.eps)
    out = params.with_values(theta) if isinstance(params, ParamVector) else theta
    return new, out
