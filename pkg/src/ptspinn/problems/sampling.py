"""Collocation sampling with counter-based streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .definitions import ProblemSpec, lid_profile


@dataclass(frozen=True)
class SampleCounts:
    interior: int = 1024
    initial: int = 256
    boundary: int = 256

    def __post_init__(self):
        if min(self.interior, self.initial, self.boundary) <= 0:
            raise ValueError("sample counts must be positive")


@dataclass(frozen=True)
class Batch:
    """Collocation sets for one iteration.

    ``initial``/``boundary`` hold points and ``*_values`` the target outputs,
    shape ``(n, num_outputs)``. Sets a problem does not use have zero rows.
    """

    interior: np.ndarray
    initial: np.ndarray
    initial_values: np.ndarray
    boundary: np.ndarray
    boundary_values: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, Batch):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("interior", "initial", "initial_values", "boundary", "boundary_values")
        )


def stream(seed: int, k: int) -> np.random.Generator:
    """Independent generator for iteration ``k``; reproducible from (seed, k) alone."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k)]))


def sample(spec: ProblemSpec, counts: SampleCounts, seed: int, k: int = 0, frozen: bool = False) -> Batch:
    rng = stream(seed, 0 if frozen else k)
    lo = np.array([b[0] for b in spec.bounds])
    hi = np.array([b[1] for b in spec.bounds])
    nout = len(spec.outputs)

    interior = lo + (hi - lo) * rng.random((counts.interior, spec.arity))

    if spec.time_axis is not None and spec.ic is not None:
        initial = lo + (hi - lo) * rng.random((counts.initial, spec.arity))
        initial[:, spec.time_axis] = lo[spec.time_axis]
        space = [a for a in range(spec.arity) if a != spec.time_axis]
        initial_values = spec.ic(*(initial[:, a] for a in space)).reshape(-1, 1)
    else:
        initial, initial_values = np.empty((0, spec.arity)), np.empty((0, nout))

    if spec.bc_kind == "dirichlet-loss":
        boundary, boundary_values = _walls(spec, counts.boundary, rng)
    else:
        boundary, boundary_values = np.empty((0, spec.arity)), np.empty((0, nout))
    return Batch(interior, initial, initial_values, boundary, boundary_values)


def _walls(spec: ProblemSpec, n: int, rng: np.random.Generator):
    """Uniform draws over the unit-square perimeter with cavity wall data."""
    (x0, x1), (y0, y1) = spec.bounds
    wall = rng.integers(0, 4, n)
    s = rng.random(n)
    x = np.where(wall == 0, x0 + (x1 - x0) * s, np.where(wall == 1, x1, np.where(wall == 2, x0 + (x1 - x0) * s, x0)))
    y = np.where(wall == 0, y1, np.where(wall == 1, y0 + (y1 - y0) * s, np.where(wall == 2, y0, y0 + (y1 - y0) * s)))
    pts = np.stack([x, y], axis=1)
    values = np.zeros((n, len(spec.outputs)))
    top = wall == 0
    values[top, 0] = lid_profile(x[top], spec.constants.get("C0", 50.0))
    return pts, values[:, :2]
