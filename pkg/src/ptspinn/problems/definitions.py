"""Benchmark PDE definitions and residual operators."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial
from typing import Callable, Mapping, Sequence

import numpy as np

from ..autodiff import Jet, ops
from ..autodiff import jet as jetlib
from ..models import ConfigError, PeriodicEmbedding, PirateNetConfig, forward


class Fields:
    """Network outputs and pure partial derivatives at a batch of points.

    ``d(component, axis, k)`` returns the k-th derivative along ``axis``;
    ``k = 0`` is the value. Entries may be arrays or tape variables.
    """

    def __init__(self, values: Sequence, derivs: Mapping[tuple[int, int, int], object]):
        self.values = tuple(values)
        self._derivs = dict(derivs)

    def __getitem__(self, component: int):
        return self.values[component]

    def d(self, component: int, axis: int, k: int = 1):
        if k == 0:
            return self.values[component]
        try:
            return self._derivs[(component, axis, k)]
        except KeyError:
            raise KeyError(f"derivative d^{k}/dx{axis}^{k} of output {component} was not seeded") from None


ResidualFn = Callable[[Fields, Mapping[str, float]], tuple]


@dataclass(frozen=True)
class ProblemSpec:
    """A benchmark PDE on a tensor-product domain.

    ``axes`` names the coordinates in order (time first for evolution
    problems); ``orders`` gives the highest pure derivative needed per axis.
    """

    name: str
    axes: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...]
    outputs: tuple[str, ...]
    residual_names: tuple[str, ...]
    orders: Mapping[int, int]
    residual_fn: ResidualFn
    constants: Mapping[str, float] = field(default_factory=dict)
    time_axis: int | None = 0
    periodic_axes: tuple[int, ...] = ()
    bc_kind: str = "periodic-exact"
    ic: Callable[[np.ndarray], np.ndarray] | None = None
    exact: Callable[[np.ndarray], np.ndarray] | None = None
    fourier_scale: float = 2.0
    benchmark: bool = True  # False for extras outside the standard suite

    @property
    def arity(self) -> int:
        return len(self.axes)

    @property
    def final_time(self) -> float | None:
        return None if self.time_axis is None else self.bounds[self.time_axis][1]

    @property
    def num_residuals(self) -> int:
        return len(self.residual_names)

    @property
    def periods(self) -> dict[int, float]:
        return {a: self.bounds[a][1] - self.bounds[a][0] for a in self.periodic_axes}

    @property
    def causal_applicable(self) -> bool:
        return self.time_axis is not None

    def with_constants(self, **overrides: float) -> "ProblemSpec":
        unknown = set(overrides) - set(self.constants)
        if unknown:
            raise ConfigError(f"unknown constants for {self.name}: {sorted(unknown)}")
        return replace(self, constants={**self.constants, **overrides})

    def network_config(self, width: int = 64, num_blocks: int = 2, activation: str = "tanh", **kw) -> PirateNetConfig:
        periodic = PeriodicEmbedding(self.periods) if self.periodic_axes else None
        tb = self.bounds[self.time_axis] if self.time_axis is not None else (0.0, 1.0)
        kw.setdefault("fourier_scale", self.fourier_scale)
        return PirateNetConfig(
            in_dim=self.arity,
            out_dim=len(self.outputs),
            width=width,
            num_blocks=num_blocks,
            activation=activation,
            periodic=periodic,
            time_axis=self.time_axis,
            time_bounds=tuple(tb),
            **kw,
        )


# --------------------------------------------------------------------------
# field evaluation


def network_field(config: PirateNetConfig, params) -> Callable:
    return lambda coords: forward(config, params, coords)


def evaluate_fields(spec: ProblemSpec, field_fn: Callable, points: np.ndarray, orders: Mapping[int, int] | None = None) -> Fields:
    """Seed jets at ``points`` and collect every derivative the residual needs."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != spec.arity:
        raise ValueError(f"points must have shape (N, {spec.arity})")
    orders = spec.orders if orders is None else orders
    coords, rows, order = jetlib.seed_axes(points, orders)
    outs = field_fn(coords)
    if isinstance(outs, Jet):
        outs = (outs,)
    values, derivs = [], {}
    for c, out in enumerate(outs):
        co = out.coeffs
        values.append(_row(co[0], 0))
        for axis, kmax in orders.items():
            for k in range(1, kmax + 1):
                d = _row(co[k], rows[axis])
                derivs[(c, axis, k)] = d * float(factorial(k)) if k > 1 else d
    return Fields(values, derivs)


def _row(c, r):
    shape = np.shape(ops.value_of(c))
    if len(shape) < 2:
        return c
    return c[r] if shape[0] > 1 else c[0]


def residual(spec: ProblemSpec, field_fn: Callable, points: np.ndarray) -> tuple:
    """Residual values ``(R_1, ..., R_R)`` at ``points``, each of shape (N,)."""
    return spec.residual_fn(evaluate_fields(spec, field_fn, points), spec.constants)


# --------------------------------------------------------------------------
# residual operators; axis 0 is t and axis 1 is x for the 1D problems


def _advection(f: Fields, k):
    return (f.d(0, 0) + k["c"] * f.d(0, 1),)


def _allen_cahn(f: Fields, k):
    u = f[0]
    return (f.d(0, 0) - k["eps"] * f.d(0, 1, 2) + k["a_reaction"] * (u * u * u - u),)


def _kdv(f: Fields, k):
    u = f[0]
    return (f.d(0, 0) + k["eta"] * u * f.d(0, 1) + k["mu"] ** 2 * f.d(0, 1, 3),)


def _burgers(f: Fields, k):
    u = f[0]
    r = f.d(0, 0) + u * f.d(0, 1)
    if k.get("nu", 0.0):
        r = r - k["nu"] * f.d(0, 1, 2)
    return (r,)


def _ks(f: Fields, k):
    u = f[0]
    return (
        f.d(0, 0) + k["alpha"] * u * f.d(0, 1) + k["beta"] * f.d(0, 1, 2) + k["gamma"] * f.d(0, 1, 4),
    )


def _cavity(f: Fields, k):
    # axes: 0 = x, 1 = y; outputs u, v, p
    u, v = f[0], f[1]
    inv_re = 1.0 / k["Re"]
    ru = u * f.d(0, 0) + v * f.d(0, 1) + f.d(2, 0) - inv_re * (f.d(0, 0, 2) + f.d(0, 1, 2))
    rv = u * f.d(1, 0) + v * f.d(1, 1) + f.d(2, 1) - inv_re * (f.d(1, 0, 2) + f.d(1, 1, 2))
    rc = f.d(0, 0) + f.d(1, 1)
    return ru, rv, rc


def lid_profile(x: np.ndarray, c0: float = 50.0) -> np.ndarray:
    """Smoothed lid velocity, equal to 0 at both corners."""
    x = np.asarray(x, dtype=np.float64)
    return 1.0 - np.cosh(c0 * (x - 0.5)) / np.cosh(0.5 * c0)


def _advection_exact(spec_c: float):
    return lambda pts: np.sin(pts[:, 1] - spec_c * pts[:, 0])


def _make(name: str, **constants) -> ProblemSpec:
    base = _BASE[name]
    spec = base.with_constants(**constants) if constants else base
    if name == "advection":
        spec = replace(spec, exact=_advection_exact(spec.constants["c"]))
    return spec


_BASE: dict[str, ProblemSpec] = {
    "advection": ProblemSpec(
        name="advection",
        axes=("t", "x"),
        bounds=((0.0, 2.0), (0.0, 2.0 * np.pi)),
        outputs=("u",),
        residual_names=("r",),
        orders={0: 1, 1: 1},
        residual_fn=_advection,
        constants={"c": 50.0},
        periodic_axes=(1,),
        ic=np.sin,
    ),
    "allen_cahn": ProblemSpec(
        name="allen_cahn",
        axes=("t", "x"),
        bounds=((0.0, 1.0), (-1.0, 1.0)),
        outputs=("u",),
        residual_names=("r",),
        orders={0: 1, 1: 2},
        residual_fn=_allen_cahn,
        constants={"eps": 1e-4, "a_reaction": 5.0},
        periodic_axes=(1,),
        ic=lambda x: x * x * np.cos(np.pi * x),
    ),
    "kdv": ProblemSpec(
        name="kdv",
        axes=("t", "x"),
        bounds=((0.0, 1.0), (-1.0, 1.0)),
        outputs=("u",),
        residual_names=("r",),
        orders={0: 1, 1: 3},
        residual_fn=_kdv,
        constants={"eta": 1.0, "mu": 0.022},
        periodic_axes=(1,),
        ic=lambda x: np.cos(np.pi * x),
    ),
    "burgers": ProblemSpec(
        name="burgers",
        axes=("t", "x"),
        bounds=((0.0, 1.5), (-1.0, 1.0)),
        outputs=("u",),
        residual_names=("r",),
        orders={0: 1, 1: 1},
        residual_fn=_burgers,
        constants={},
        periodic_axes=(1,),
        ic=lambda x: -np.sin(np.pi * x),
    ),
    "viscous_burgers": ProblemSpec(
        name="viscous_burgers",
        axes=("t", "x"),
        bounds=((0.0, 1.0), (-1.0, 1.0)),
        outputs=("u",),
        residual_names=("r",),
        orders={0: 1, 1: 2},
        residual_fn=_burgers,
        constants={"nu": 0.01 / np.pi},
        periodic_axes=(1,),
        ic=lambda x: -np.sin(np.pi * x),
        benchmark=False,
    ),
    "ks": ProblemSpec(
        name="ks",
        axes=("t", "x"),
        bounds=((0.0, 0.35), (0.0, 2.0 * np.pi)),
        outputs=("u",),
        residual_names=("r",),
        orders={0: 1, 1: 4},
        residual_fn=_ks,
        constants={"alpha": 100.0 / 16, "beta": 100.0 / 16**2, "gamma": 100.0 / 16**4},
        periodic_axes=(1,),
        ic=lambda x: np.cos(x) * (1.0 + np.sin(x)),
    ),
    "ldc": ProblemSpec(
        name="ldc",
        axes=("x", "y"),
        bounds=((0.0, 1.0), (0.0, 1.0)),
        outputs=("u", "v", "p"),
        residual_names=("ru", "rv", "rc"),
        orders={0: 2, 1: 2},
        residual_fn=_cavity,
        constants={"Re": 5000.0, "C0": 50.0},
        time_axis=None,
        bc_kind="dirichlet-loss",
        fourier_scale=10.0,
    ),
}

ALIASES = {"ac": "allen_cahn", "cavity": "ldc", "inviscid_burgers": "burgers", "vburgers": "viscous_burgers"}
PROBLEMS = tuple(_BASE)


def get_problem(name: str, **constants: float) -> ProblemSpec:
    """Look up a benchmark by name, optionally overriding physical constants."""
    key = ALIASES.get(name, name)
    if key not in _BASE:
        raise ConfigError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    return _make(key, **constants)
