"""Built-in reference solutions for the 1D periodic benchmarks."""

from __future__ import annotations

import io
from dataclasses import dataclass
from math import ceil
from pathlib import Path

import numpy as np

from .definitions import Fields, ProblemSpec, get_problem


class UnsupportedReference(ValueError):
    """No built-in reference exists for this problem."""


class MetricError(ValueError):
    """The relative error is undefined (zero reference norm)."""


DEFAULT_RESOLUTION = {"ks": (250, 512)}


@dataclass(frozen=True)
class ReferenceSolution:
    axes: tuple[str, ...]
    grid: tuple[np.ndarray, ...]
    values: np.ndarray
    provenance: str

    def __post_init__(self):
        for g in self.grid:
            if np.any(np.diff(g) <= 0):
                raise ValueError("reference grid must be strictly increasing along every axis")
        if self.values.shape != tuple(len(g) for g in self.grid):
            raise ValueError("values shape does not match the grid")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def points(self) -> np.ndarray:
        """All grid nodes as an ``(N, d)`` array in row-major order."""
        mesh = np.meshgrid(*self.grid, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# provenance: {self.provenance}\n")
        buf.write(" ".join(self.axes + ("value",)) + "\n")
        data = np.column_stack([self.points(), self.values.reshape(-1)])
        np.savetxt(buf, data, fmt="%.17g")
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "ReferenceSolution":
        lines = text.splitlines()
        provenance = "unknown"
        if lines and lines[0].startswith("# provenance:"):
            provenance = lines[0].split(":", 1)[1].strip()
            lines = lines[1:]
        header = lines[0].split()
        if header[-1] != "value":
            raise ValueError("last column must be 'value'")
        data = np.loadtxt(io.StringIO("\n".join(lines[1:])), ndmin=2)
        axes = tuple(header[:-1])
        grid = tuple(np.unique(data[:, i]) for i in range(len(axes)))
        values = data[:, -1].reshape(tuple(len(g) for g in grid))
        return cls(axes, grid, values, provenance)

    @classmethod
    def load(cls, path: str | Path) -> "ReferenceSolution":
        return cls.from_text(Path(path).read_text())


def relative_l2(pred, ref: ReferenceSolution | np.ndarray) -> float:
    """``||pred - ref|| / ||ref||`` over all grid nodes."""
    r = ref.values if isinstance(ref, ReferenceSolution) else np.asarray(ref, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64).reshape(r.shape)
    denom = np.linalg.norm(r)
    if denom == 0.0:
        raise MetricError("reference has zero norm; relative error is undefined")
    return float(np.linalg.norm(p - r) / denom)


# --------------------------------------------------------------------------
# grids


def _time_grid(spec: ProblemSpec, nt: int) -> np.ndarray:
    t0, t1 = spec.bounds[0]
    return np.linspace(t0, t1, nt)


def _periodic_grid(spec: ProblemSpec, nx: int) -> np.ndarray:
    a, b = spec.bounds[1]
    return a + (b - a) * np.arange(nx) / nx


def _wavenumbers(spec: ProblemSpec, nx: int) -> np.ndarray:
    a, b = spec.bounds[1]
    return 2.0 * np.pi / (b - a) * np.fft.rfftfreq(nx, 1.0 / nx)


# --------------------------------------------------------------------------
# analytic


def advection_exact(spec: ProblemSpec, resolution: tuple[int, int]) -> ReferenceSolution:
    nt, nx = resolution
    t, x = _time_grid(spec, nt), _periodic_grid(spec, nx)
    values = spec.ic(x[None, :] - spec.constants["c"] * t[:, None])
    return ReferenceSolution(spec.axes, (t, x), values, "analytic")


# --------------------------------------------------------------------------
# 4th-order finite differences + RK4 (generic, driven by the residual operator)

_FD4 = {
    1: ({-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}, 1),
    2: ({-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}, 2),
    3: ({-3: 1 / 8, -2: -1.0, -1: 13 / 8, 1: -13 / 8, 2: 1.0, 3: -1 / 8}, 3),
    4: ({-3: -1 / 6, -2: 2.0, -1: -13 / 2, 0: 28 / 3, 1: -13 / 2, 2: 2.0, 3: -1 / 6}, 4),
}


def fd4_derivative(u: np.ndarray, dx: float, k: int) -> np.ndarray:
    """Periodic 4th-order central difference of order ``k`` (1..4)."""
    stencil, p = _FD4[k]
    out = np.zeros_like(u)
    for shift, w in stencil.items():
        out += w * np.roll(u, -shift)
    return out / dx**p


def _rk4(rhs, u, dt, steps):
    for _ in range(steps):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u


def method_of_lines_fd4(spec: ProblemSpec, resolution: tuple[int, int], dt: float | None = None) -> ReferenceSolution:
    """``u_t = -R[u]|_{u_t=0}`` with FD4 in space and classical RK4 in time."""
    nt, nx = resolution
    t, x = _time_grid(spec, nt), _periodic_grid(spec, nx)
    dx = x[1] - x[0]
    kmax = spec.orders[1]
    zeros = np.zeros(nx)

    def rhs(u):
        derivs = {(0, 1, k): fd4_derivative(u, dx, k) for k in range(1, kmax + 1)}
        derivs[(0, 0, 1)] = zeros
        return -spec.residual_fn(Fields([u], derivs), spec.constants)[0]

    if dt is None:
        dt = _explicit_dt(spec, dx)
    u = spec.ic(x)
    out = [u]
    for i in range(1, nt):
        span = t[i] - t[i - 1]
        steps = max(1, ceil(span / dt))
        u = _rk4(rhs, u, span / steps, steps)
        out.append(u)
    return ReferenceSolution(spec.axes, (t, x), np.array(out), "method-of-lines")


def _explicit_dt(spec: ProblemSpec, dx: float) -> float:
    k = spec.constants
    speed = abs(k.get("c", 0.0)) + 3.0 * np.max(np.abs(spec.ic(np.linspace(*spec.bounds[1], 257))))
    limits = [0.5 * dx / max(speed, 1e-12)]
    if "eps" in k:
        limits.append(0.2 * dx**2 / k["eps"])
    if "nu" in k:
        limits.append(0.2 * dx**2 / k["nu"])
    return min(limits)


# --------------------------------------------------------------------------
# pseudo-spectral integrating-factor RK4 for stiff periodic problems


def _split(spec: ProblemSpec, kx: np.ndarray):
    """Linear Fourier symbol L(k) and nonlinear term N(u, u_x-operator)."""
    c = spec.constants
    name = spec.name
    if name == "allen_cahn":
        a = c["a_reaction"]
        return -c["eps"] * kx**2, lambda u, dx_: a * (u - u**3)
    if name == "kdv":
        return 1j * c["mu"] ** 2 * kx**3, lambda u, dx_: -0.5 * c["eta"] * dx_(u * u)
    if name == "ks":
        return c["beta"] * kx**2 - c["gamma"] * kx**4, lambda u, dx_: -0.5 * c["alpha"] * dx_(u * u)
    if name == "viscous_burgers":
        return -c["nu"] * kx**2, lambda u, dx_: -0.5 * dx_(u * u)
    raise UnsupportedReference(f"no spectral split for {name}")


def spectral_if_rk4(spec: ProblemSpec, resolution: tuple[int, int], refine: int = 2) -> ReferenceSolution:
    """Integrating-factor RK4 on a ``refine``-times finer periodic grid, 2/3 dealiased."""
    nt, nx = resolution
    n = nx * refine
    t, x_fine = _time_grid(spec, nt), _periodic_grid(spec, n)
    kx = _wavenumbers(spec, n)
    lin, nonlin = _split(spec, kx)
    mask = np.abs(np.fft.rfftfreq(n, 1.0 / n)) < n / 3.0

    def ddx(w):
        return np.fft.irfft(1j * kx * np.fft.rfft(w), n)

    def nhat(vh):
        u = np.fft.irfft(vh, n)
        return mask * np.fft.rfft(nonlin(u, ddx))

    u0 = spec.ic(x_fine)
    dx = x_fine[1] - x_fine[0]
    c = spec.constants
    speed = max(abs(c.get("eta", 0.0)), abs(c.get("alpha", 0.0)), 1.0) * 3.0 * max(np.max(np.abs(u0)), 1.0)
    dt_max = 0.4 * dx / speed
    if "a_reaction" in c:
        dt_max = min(dt_max, 0.02 / c["a_reaction"])

    vh = np.fft.rfft(u0)
    out = [u0[::refine]]
    for i in range(1, nt):
        span = t[i] - t[i - 1]
        steps = max(1, ceil(span / dt_max))
        h = span / steps
        e, e2 = np.exp(lin * h), np.exp(lin * h / 2)
        for _ in range(steps):
            k1 = nhat(vh)
            k2 = nhat(e2 * (vh + 0.5 * h * k1))
            k3 = nhat(e2 * vh + 0.5 * h * k2)
            k4 = nhat(e * vh + h * e2 * k3)
            vh = e * vh + h / 6.0 * (e * k1 + 2.0 * e2 * (k2 + k3) + k4)
        out.append(np.fft.irfft(vh, n)[::refine])
    return ReferenceSolution(spec.axes, (t, x_fine[::refine]), np.array(out), "method-of-lines")


# --------------------------------------------------------------------------
# inviscid Burgers: MUSCL finite volumes with the exact Godunov flux


def _godunov_flux(ul, ur):
    # convex flux u^2/2 with its minimum at 0
    return np.maximum(0.5 * np.maximum(ul, 0.0) ** 2, 0.5 * np.minimum(ur, 0.0) ** 2)


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def godunov_burgers(spec: ProblemSpec, resolution: tuple[int, int], refine: int = 4, cfl: float = 0.4) -> ReferenceSolution:
    """Cell averages on ``refine * nx`` cells, averaged back to ``nx`` output cells."""
    nt, nx = resolution
    n = nx * refine
    a, b = spec.bounds[1]
    dx = (b - a) / n
    t = _time_grid(spec, nt)
    edges = a + dx * np.arange(n + 1)
    # exact cell averages of the initial condition via 5-point Gauss on each cell
    gx, gw = np.polynomial.legendre.leggauss(5)
    mid, half = 0.5 * (edges[:-1] + edges[1:]), 0.5 * dx
    u = (spec.ic(mid[:, None] + half * gx[None, :]) * gw).sum(axis=1) / 2.0

    def rhs(w):
        slope = _minmod(w - np.roll(w, 1), np.roll(w, -1) - w)
        ul = w + 0.5 * slope  # left state at interface i+1/2
        ur = np.roll(w - 0.5 * slope, -1)
        f = _godunov_flux(ul, ur)
        return -(f - np.roll(f, 1)) / dx

    def coarse(w):
        return w.reshape(nx, refine).mean(axis=1)

    out = [coarse(u)]
    for i in range(1, nt):
        span = t[i] - t[i - 1]
        while span > 1e-14:
            h = min(cfl * dx / max(np.max(np.abs(u)), 1e-12), span)
            u1 = u + h * rhs(u)
            u2 = 0.75 * u + 0.25 * (u1 + h * rhs(u1))
            u = u / 3.0 + 2.0 / 3.0 * (u2 + h * rhs(u2))
            span -= h
        out.append(coarse(u))
    xc = a + (np.arange(nx) + 0.5) * (b - a) / nx
    return ReferenceSolution(spec.axes, (t, xc), np.array(out), "finite-volume")


# --------------------------------------------------------------------------


def reference_solve(spec: ProblemSpec | str, resolution: tuple[int, int] | None = None) -> ReferenceSolution:
    """Reference field on a ``(nt, nx)`` tensor grid for an in-scope 1D problem."""
    if isinstance(spec, str):
        spec = get_problem(spec)
    if spec.time_axis is None or spec.arity != 2:
        raise UnsupportedReference(f"no built-in reference for {spec.name}")
    resolution = tuple(resolution or DEFAULT_RESOLUTION.get(spec.name, (200, 512)))
    key = (spec.name, tuple(sorted(spec.constants.items())), resolution)
    return _cached(key, spec)


_CACHE: dict = {}


def _cached(key, spec: ProblemSpec) -> ReferenceSolution:
    if key not in _CACHE:
        resolution = key[2]
        if spec.name == "advection":
            ref = advection_exact(spec, resolution)
        elif spec.name == "burgers":
            ref = godunov_burgers(spec, resolution)
        else:
            ref = spectral_if_rk4(spec, resolution)
        _CACHE[key] = ref
    return _CACHE[key]
