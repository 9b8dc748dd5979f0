"""PirateNet and plain-MLP networks over jet-valued inputs.

Inputs are passed as a tuple of per-coordinate jets (or plain arrays). Each
coordinate array has shape ``(..., N)``; features carry a trailing width axis,
so one forward pass evaluates N points and all their Taylor coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Jet, Layout, ParamVector, fused, ops
from .autodiff import jet as jetlib


class ConfigError(ValueError):
    """Invalid network, problem or training configuration."""


@dataclass(frozen=True)
class PeriodicEmbedding:
    """``x -> (cos wx, sin wx)`` for each periodic axis, ``w = 2 pi / P``."""

    periods: dict[int, float]

    def __post_init__(self):
        for axis, p in self.periods.items():
            if not p > 0:
                raise ConfigError(f"period for axis {axis} must be positive, got {p}")

    @property
    def frequencies(self) -> dict[int, float]:
        return {a: 2.0 * np.pi / p for a, p in self.periods.items()}


@dataclass(frozen=True)
class FourierEmbedding:
    """Random Fourier features ``[cos(Bz), sin(Bz)]`` with a fixed matrix B."""

    matrix: np.ndarray
    scale: float

    @classmethod
    def draw(cls, num_features: int, in_dim: int, scale: float, seed: int) -> "FourierEmbedding":
        if scale <= 0:
            raise ConfigError("Fourier scale must be positive")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF0F1]))
        return cls(rng.normal(0.0, scale, size=(num_features, in_dim)), float(scale))

    @property
    def out_dim(self) -> int:
        return 2 * self.matrix.shape[0]

    def __call__(self, z):
        proj = z @ self.matrix.T
        if isinstance(proj, Jet):
            s, c = jetlib.sincos(proj)
            return jetlib.concatenate([c, s], axis=-1)
        return ops.concatenate([ops.cos(proj), ops.sin(proj)], axis=-1)


_ACTIVATIONS = {"tanh": ops.tanh, "swish": ops.swish}


@dataclass(frozen=True)
class PirateNetConfig:
    """Architecture description.

    ``in_dim`` is the number of raw coordinates; ``time_axis`` (if any) is
    rescaled from ``time_bounds`` to [0, 1]; axes listed in ``periodic`` are
    replaced by their cos/sin embedding. ``arch="mlp"`` drops the gates and
    fixes every skip coefficient at 1.
    """

    in_dim: int
    out_dim: int = 1
    width: int = 64
    num_blocks: int = 2
    activation: str = "tanh"
    fourier_scale: float = 2.0
    periodic: PeriodicEmbedding | None = None
    time_axis: int | None = None
    time_bounds: tuple[float, float] = (0.0, 1.0)
    arch: str = "pirate"
    fourier_seed: int = 0
    fourier: FourierEmbedding = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.width <= 0 or self.num_blocks <= 0:
            raise ConfigError("width and num_blocks must be positive")
        if self.width % 2:
            raise ConfigError("width must be even (Fourier features come in cos/sin pairs)")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ConfigError("in_dim and out_dim must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.arch not in ("pirate", "mlp"):
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.time_axis is not None and self.time_bounds[1] <= self.time_bounds[0]:
            raise ConfigError("time_bounds must be increasing")
        emb = FourierEmbedding.draw(self.width // 2, self.embedded_dim, self.fourier_scale, self.fourier_seed)
        object.__setattr__(self, "fourier", emb)

    @property
    def embedded_dim(self) -> int:
        extra = len(self.periodic.periods) if self.periodic else 0
        return self.in_dim + extra

    @property
    def gated(self) -> bool:
        return self.arch == "pirate"

    def layout(self) -> Layout:
        w = self.width
        shapes: list[tuple[str, tuple[int, ...]]] = []
        if self.gated:
            shapes += [("gate_u.W", (w, w)), ("gate_u.b", (w,)), ("gate_v.W", (w, w)), ("gate_v.b", (w,))]
        for l in range(self.num_blocks):
            for j in (1, 2, 3):
                shapes += [(f"block{l}.W{j}", (w, w)), (f"block{l}.b{j}", (w,))]
            if self.gated:
                shapes.append((f"block{l}.alpha", (1,)))
        shapes.append(("out.W", (w, self.out_dim)))
        return Layout.build(shapes)


def init_params(config: PirateNetConfig, seed: int) -> ParamVector:
    """Glorot-uniform weights, zero biases, zero skip coefficients."""
    layout = config.layout()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1417]))
    values = np.zeros(layout.size)
    for seg in layout:
        if len(seg.shape) == 2:
            fan_in, fan_out = seg.shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            values[seg.offset : seg.offset + seg.size] = rng.uniform(-lim, lim, seg.size)
    return ParamVector(values, layout)


def _as_jet(x) -> Jet:
    return x if isinstance(x, Jet) else Jet([np.asarray(x, dtype=np.float64)])


def embed(config: PirateNetConfig, coords: Sequence[Jet]) -> Jet:
    """Time rescaling and periodic embedding, stacked on a trailing axis."""
    if len(coords) != config.in_dim:
        raise ConfigError(f"expected {config.in_dim} coordinates, got {len(coords)}")
    freqs = config.periodic.frequencies if config.periodic else {}
    cols: list[Jet] = []
    for axis, c in enumerate(coords):
        c = Jet([np.asarray(k)[..., None] for k in c.coeffs])
        if axis == config.time_axis:
            lo, hi = config.time_bounds
            cols.append((c - lo) * (1.0 / (hi - lo)))
        elif axis in freqs:
            s, co = jetlib.sincos(c * freqs[axis])
            cols += [co, s]
        else:
            cols.append(c)
    return cols[0] if len(cols) == 1 else jetlib.concatenate(cols, axis=-1)


def _dense(x: Jet, params: ParamVector, prefix: str, act, j: str = "") -> Jet:
    return act(x @ params[f"{prefix}.W{j}"] + params[f"{prefix}.b{j}"])


def forward(config: PirateNetConfig, params: ParamVector, coords: Sequence) -> tuple[Jet, ...]:
    """Network outputs, one jet per solution component."""
    act = _ACTIVATIONS[config.activation]
    coords = tuple(_as_jet(c) for c in coords)
    order = coords[0].order
    if any(c.order != order for c in coords):
        raise ConfigError("all coordinate jets must share one order")
    x = config.fourier(embed(config, coords))
    if order <= 1 and config.activation == "tanh":
        packed = _pack(x)
        if packed is not None:
            return _forward_tangent(config, params, *packed)
    if config.gated:
        u = _dense(x, params, "gate_u", act)
        v = _dense(x, params, "gate_v", act)
        du = u - v
    for l in range(config.num_blocks):
        p = f"block{l}"
        f = _dense(x, params, p, act, "1")
        z = v + f * du if config.gated else f  # f*U + (1-f)*V
        g = _dense(z, params, p, act, "2")
        z = v + g * du if config.gated else g
        h = _dense(z, params, p, act, "3")
        if config.gated:
            a = params[p + ".alpha"]
            x = x + (h - x) * a
        else:
            x = h
    out = x @ params["out.W"]
    return tuple(out[..., j] for j in range(config.out_dim))


def _pack(x: Jet):
    """Stack a first-order embedding into one ``(1 + A, ..., W)`` array."""
    if x.order == 0:
        v = np.asarray(x.coeffs[0])
        return v[None], lambda o: Jet([o[0]])
    c0, c1 = (np.asarray(c) for c in x.coeffs)
    if c0.ndim < 3 or c0.shape[0] != 1:
        return None
    c1 = np.broadcast_to(c1, c1.shape[:1] + c0.shape[1:])
    return np.concatenate([c0, c1]), lambda o: Jet([o[:1], o[1:]])


def _forward_tangent(config: PirateNetConfig, params: ParamVector, x, unpack) -> tuple[Jet, ...]:
    # same network as the generic path, with fused first-order primitives
    def dense(z, prefix, j=""):
        return fused.tanh(fused.dense(z, params[f"{prefix}.W{j}"], params[f"{prefix}.b{j}"]))

    if config.gated:
        u = dense(x, "gate_u")
        v = dense(x, "gate_v")
    for l in range(config.num_blocks):
        p = f"block{l}"
        f = dense(x, p, "1")
        z = fused.gate(f, u, v) if config.gated else f
        g = dense(z, p, "2")
        z = fused.gate(g, u, v) if config.gated else g
        h = dense(z, p, "3")
        x = fused.skip(x, h, params[p + ".alpha"]) if config.gated else h
    out = x @ params["out.W"]
    return tuple(unpack(out[..., j]) for j in range(config.out_dim))


def apply(config: PirateNetConfig, params: ParamVector, points: np.ndarray) -> np.ndarray:
    """Plain evaluation at an ``(N, in_dim)`` array; returns ``(N, out_dim)``."""
    points = np.asarray(points, dtype=np.float64)
    outs = forward(config, params, tuple(points[:, a] for a in range(points.shape[1])))
    return np.stack([np.asarray(ops.value_of(o.value)) for o in outs], axis=-1)
