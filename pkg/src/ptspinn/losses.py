"""Empirical PINN losses, pseudo-time-relaxed residual losses and loss weighting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .autodiff import ops
from .models import ConfigError
from .problems import Batch, ProblemSpec, evaluate_fields
from .problems.definitions import Fields


@dataclass
class LossBreakdown:
    """Per-term losses, their weights, and by-products of the interior pass.

    ``terms`` values may be tape variables; ``values()`` gives floats.
    ``raw_interior`` holds the unrelaxed mean squared residual per component,
    which drives the shrink factor regardless of the loss being minimized.
    """

    terms: dict
    weights: dict
    raw_interior: dict = field(default_factory=dict)
    residuals: tuple = ()
    outputs: tuple = ()
    causal: np.ndarray | None = None

    @property
    def total(self):
        acc = None
        for name, value in self.terms.items():
            w = self.weights.get(name, 1.0)
            acc = value * w if acc is None else acc + value * w
        return acc

    def values(self) -> dict[str, float]:
        return {k: float(np.asarray(ops.value_of(v))) for k, v in self.terms.items()}

    def total_value(self) -> float:
        return float(np.asarray(ops.value_of(self.total)))


def interior_term_names(spec: ProblemSpec) -> tuple[str, ...]:
    return ("int",) if spec.num_residuals == 1 else spec.residual_names


def term_names(spec: ProblemSpec) -> tuple[str, ...]:
    names = list(interior_term_names(spec))
    if spec.time_axis is not None and spec.ic is not None:
        names.append("ic")
    if spec.bc_kind == "dirichlet-loss":
        names += [f"bc_{o}" for o in spec.outputs[:2]]
    return tuple(names)


# --------------------------------------------------------------------------
# causal weighting


@dataclass(frozen=True)
class CausalConfig:
    tolerance: float = 1.0
    chunks: int = 16

    def __post_init__(self):
        if self.chunks < 1:
            raise ConfigError("causal chunk count must be >= 1")
        if self.tolerance < 0:
            raise ConfigError("causal tolerance must be nonnegative")


def causal_weights(chunk_losses: Sequence[float], tolerance: float) -> np.ndarray:
    """``w_i = exp(-eps * sum_{k<i} L_k)``; ``w_1 = 1``."""
    losses = np.asarray(chunk_losses, dtype=np.float64)
    prior = np.concatenate([[0.0], np.cumsum(losses)[:-1]])
    return np.exp(-tolerance * prior)


def chunk_matrix(t: np.ndarray, bounds: tuple[float, float], chunks: int) -> np.ndarray:
    """Row i averages the points whose time falls in the i-th equal sub-interval.

    Empty chunks have an all-zero row, so their loss is 0.
    """
    t0, t1 = bounds
    idx = np.clip(np.floor((np.asarray(t) - t0) / (t1 - t0) * chunks).astype(int), 0, chunks - 1)
    onehot = (idx[None, :] == np.arange(chunks)[:, None]).astype(np.float64)
    counts = onehot.sum(axis=1, keepdims=True)
    return np.divide(onehot, counts, out=np.zeros_like(onehot), where=counts > 0)


def _causal_mean(sq, t, spec: ProblemSpec, causal: CausalConfig):
    avg = chunk_matrix(t, spec.bounds[spec.time_axis], causal.chunks)
    per_chunk = avg @ sq
    w = causal_weights(np.asarray(ops.value_of(per_chunk)), causal.tolerance)  # constants
    return ops.sum(per_chunk * w) * (1.0 / causal.chunks), w


# --------------------------------------------------------------------------
# loss assembly


def _mean_square(r):
    return ops.mean(r * r)


def _plain(field_fn: Callable, points: np.ndarray) -> tuple:
    """Output values (no input derivatives) at ``points``."""
    outs = field_fn(tuple(points[:, a] for a in range(points.shape[1])))
    if not isinstance(outs, (tuple, list)):
        outs = (outs,)
    return tuple(o.value if hasattr(o, "coeffs") else o for o in outs)


def interior_fields(spec: ProblemSpec, field_fn: Callable, points: np.ndarray) -> tuple[Fields, tuple]:
    fields = evaluate_fields(spec, field_fn, points)
    return fields, spec.residual_fn(fields, spec.constants)


def build_losses(
    spec: ProblemSpec,
    field_fn: Callable,
    batch: Batch,
    *,
    tau: Sequence[float] | None = None,
    prev_outputs: np.ndarray | None = None,
    weights: Mapping[str, float] | None = None,
    causal: CausalConfig | None = None,
) -> LossBreakdown:
    """Assemble every loss term for one batch.

    With ``tau`` and ``prev_outputs`` (values of the previous iterate at the
    interior points) the interior terms use the pseudo-time-relaxed residual
    ``(u - u_prev)/tau + R[u]``; residual i is paired with output i.
    """
    if causal is not None and spec.time_axis is None:
        raise ConfigError(f"causal weighting does not apply to {spec.name}")
    relaxed = tau is not None
    if relaxed:
        tau = tuple(float(t) for t in tau)
        if len(tau) != spec.num_residuals:
            raise ConfigError(f"{spec.name} needs {spec.num_residuals} tau components, got {len(tau)}")
        if any(not t > 0 for t in tau):
            raise ConfigError("tau components must be positive")
        if prev_outputs is None:
            raise ValueError("the relaxed loss needs the previous iterate's outputs")
        prev_outputs = np.asarray(ops.stop_gradient(prev_outputs), dtype=np.float64).reshape(len(batch.interior), -1)

    fields, res = interior_fields(spec, field_fn, batch.interior)
    terms, raw = {}, {}
    causal_w = None
    t = batch.interior[:, spec.time_axis] if causal is not None else None
    for i, (name, r) in enumerate(zip(interior_term_names(spec), res)):
        raw[name] = float(np.mean(np.square(ops.value_of(r))))
        if relaxed:
            r = (fields[i] - prev_outputs[:, i]) * (1.0 / tau[i]) + r
        sq = r * r
        if causal is not None:
            terms[name], causal_w = _causal_mean(sq, t, spec, causal)
        else:
            terms[name] = ops.mean(sq)

    if len(batch.initial):
        outs = _plain(field_fn, batch.initial)
        terms["ic"] = _mean_square(outs[0] - batch.initial_values[:, 0])
    if len(batch.boundary):
        outs = _plain(field_fn, batch.boundary)
        for j, o in enumerate(spec.outputs[:2]):
            terms[f"bc_{o}"] = _mean_square(outs[j] - batch.boundary_values[:, j])

    w = {name: 1.0 for name in terms}
    if weights:
        w.update({k: float(v) for k, v in weights.items() if k in terms})
    return LossBreakdown(
        terms=terms,
        weights=w,
        raw_interior=raw,
        residuals=tuple(np.asarray(ops.value_of(r)) for r in res),
        outputs=tuple(np.asarray(ops.value_of(v)) for v in fields.values),
        causal=causal_w,
    )


def empirical_losses(spec, field_fn, batch, weights=None, causal=None) -> LossBreakdown:
    """Mean-squared residual, initial and boundary terms."""
    return build_losses(spec, field_fn, batch, weights=weights, causal=causal)


def pts_loss(spec, field_fn, prev_outputs, tau, batch, weights=None, causal=None) -> LossBreakdown:
    """Pseudo-time-relaxed interior terms plus the usual initial/boundary terms."""
    return build_losses(spec, field_fn, batch, tau=tau, prev_outputs=prev_outputs, weights=weights, causal=causal)


# --------------------------------------------------------------------------
# grad-norm global weights


@dataclass(frozen=True)
class GlobalWeights:
    lambdas: Mapping[str, float]
    memory: float = 0.9
    period: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.memory < 1.0:
            raise ConfigError("grad-norm EMA memory must be in [0, 1)")
        if self.period < 1:
            raise ConfigError("grad-norm period must be >= 1")
        if any(not v > 0 for v in self.lambdas.values()):
            raise ConfigError("loss weights must be positive")

    @classmethod
    def uniform(cls, names: Sequence[str], **kw) -> "GlobalWeights":
        return cls({n: 1.0 for n in names}, **kw)

    def due(self, k: int) -> bool:
        return k % self.period == 0


def grad_norm_targets(norms: Mapping[str, float]) -> dict[str, float | None]:
    """``lambda_hat_i = sum_j ||g_j|| / ||g_i||``; ``None`` where ``||g_i|| = 0``."""
    total = float(sum(norms.values()))
    if not total > 0:
        raise ValueError("at least one gradient norm must be positive")
    return {k: (total / n if n > 0 else None) for k, n in norms.items()}


def grad_norm_weights(state: GlobalWeights, norms: Mapping[str, float]) -> GlobalWeights:
    """EMA blend of the grad-norm targets into the stored weights."""
    targets = grad_norm_targets(norms)
    m = state.memory
    new = dict(state.lambdas)
    for k, hat in targets.items():
        if hat is not None and np.isfinite(hat):
            new[k] = m * state.lambdas.get(k, 1.0) + (1.0 - m) * hat
    return GlobalWeights(new, state.memory, state.period)


def frozen_outputs(spec: ProblemSpec, field_fn: Callable, points: np.ndarray) -> np.ndarray:
    """Output values of a (previous) network at ``points``, shape (N, outputs).

    Uses the same jet-seeded evaluation as the interior pass, so an unchanged
    network reproduces the current outputs bit for bit.
    """
    fields = evaluate_fields(spec, field_fn, points)
    return np.stack([np.asarray(ops.value_of(v)) for v in fields.values], axis=1)
