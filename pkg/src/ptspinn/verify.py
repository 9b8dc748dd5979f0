"""Numerical checks of the spurious-solution theory and of the autodiff stack.

Closed-form fields only: a smooth cutoff ``alpha_h`` times a known solution,
its one-step pseudo-time update, Gauss-Legendre estimates of the expected
residual loss, and power-law fits in the layer width ``h``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .problems import get_problem
from .problems.definitions import Fields


class QuadratureNotConverged(RuntimeError):
    def __init__(self, last: float, previous: float):
        super().__init__(f"quadrature refinement stalled: last={last!r}, previous={previous!r}")
        self.last, self.previous = last, previous


# --------------------------------------------------------------------------
# smooth cutoff


def _phi(s):
    """``exp(-1/s)`` for s > 0, else 0; with its first two derivatives."""
    s = np.asarray(s, dtype=np.float64)
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f = np.where(pos, np.exp(-1.0 / safe), 0.0)
        # f underflows to 0 before the inverse powers overflow
        d1 = np.where(f > 0, f / safe**2, 0.0)
        d2 = np.where(f > 0, f * (1.0 / safe**4 - 2.0 / safe**3), 0.0)
    return f, np.where(pos, d1, 0.0), np.where(pos, d2, 0.0)


def eta(s, order: int = 0):
    """Smooth step from 1 (s <= 0) to 0 (s >= 1) and its derivatives up to 2."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    s = np.asarray(s, dtype=np.float64)
    a, a1, a2 = _phi(1.0 - s)
    a1, a2 = -a1, a2  # chain rule for phi(1 - s)
    b, b1, b2 = _phi(s)
    d, d1, d2 = a + b, a1 + b1, a2 + b2  # d > 0 everywhere
    if order == 0:
        return a / d
    num1 = a1 * d - a * d1
    if order == 1:
        return num1 / d**2
    return (a2 * d - a * d2) / d**2 - 2.0 * d1 * num1 / d**3


@dataclass(frozen=True)
class CutoffSpec:
    t0: float = 1.0
    h: float = 0.4

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("layer width h must be positive")

    @property
    def layer(self) -> tuple[float, float]:
        return (self.t0, self.t0 + self.h)

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t)
        return (t >= self.t0) & (t <= self.t0 + self.h)


def cutoff_eval(spec: CutoffSpec, t, order: int = 0):
    """``alpha_h^{(order)}(t) = h^{-order} eta^{(order)}((t - t0)/h)``."""
    return eta((np.asarray(t, dtype=np.float64) - spec.t0) / spec.h, order) / spec.h**order


# --------------------------------------------------------------------------
# spurious fields and their residuals


def _ode_parts(spec: CutoffSpec, t):
    a0, a1, a2 = (cutoff_eval(spec, t, k) for k in range(3))
    s, c = np.sin(t), np.cos(t)
    # R[u_dag] for u_t = cos t with u_dag = alpha sin t
    r = a1 * s + (a0 - 1.0) * c
    r_t = a2 * s + 2.0 * a1 * c - (a0 - 1.0) * s
    return r, r_t


def spurious_residual(problem: str, spec: CutoffSpec, tau: float, t, x=None, which: str = "dagger", c: float = 1.0):
    """Residual of ``u_dag = alpha_h u*`` or of ``u_dag+ = u_dag - tau R[u_dag]``.

    ``problem`` is ``"ode_cos"`` (u_t = cos t, u* = sin t) or ``"advection"``
    (u_t + c u_x = 0, u* = sin(x - c t)). Both residuals are affine in the
    field, so ``R[u_dag+] = R[u_dag] - tau d/dt R[u_dag]``.
    """
    if which not in ("dagger", "plus"):
        raise ValueError("which must be 'dagger' or 'plus'")
    t = np.asarray(t, dtype=np.float64)
    if problem == "ode_cos":
        r, r_t = _ode_parts(spec, t)
    elif problem == "advection":
        if x is None:
            raise ValueError("advection needs x")
        ustar = np.sin(np.asarray(x, dtype=np.float64) - c * t)
        r = cutoff_eval(spec, t, 1) * ustar
        # u* is annihilated by d/dt + c d/dx, and R[u_dag] has no x-dependence beyond u*
        r_t = cutoff_eval(spec, t, 2) * ustar
    else:
        raise ValueError(f"unknown problem {problem!r}")
    return r if which == "dagger" else r - tau * r_t


def advection_fields(spec: CutoffSpec, points: np.ndarray, c: float, tau: float = 0.0, which: str = "dagger") -> Fields:
    """Closed-form value and first derivatives of the spurious advection fields."""
    t, x = points[:, 0], points[:, 1]
    a = [cutoff_eval(spec, t, k) for k in range(3)]
    ph = x - c * t
    s, co = np.sin(ph), np.cos(ph)
    if which == "dagger":
        u = a[0] * s
        ut = a[1] * s - c * a[0] * co
        ux = a[0] * co
    else:
        # u_dag+ = (alpha - tau alpha') u*
        b0, b1 = a[0] - tau * a[1], a[1] - tau * a[2]
        u = b0 * s
        ut = b1 * s - c * b0 * co
        ux = b0 * co
    return Fields([u], {(0, 0, 1): ut, (0, 1, 1): ux})


# --------------------------------------------------------------------------
# quadrature


def _gl_panels(edges: np.ndarray, nodes: int):
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    lo, hi = edges[:-1, None], edges[1:, None]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return (mid + half * xg).reshape(-1), (half * wg).reshape(-1)


def _time_edges(t_range, cutoff: CutoffSpec | None, panels: int) -> np.ndarray:
    t0, t1 = t_range
    if cutoff is None:
        return np.linspace(t0, t1, panels + 1)
    a, b = cutoff.layer
    # panels concentrated inside the layer; the outer pieces are smooth
    parts = []
    if a > t0:
        parts.append(np.linspace(t0, min(a, t1), max(panels // 4, 1) + 1))
    parts.append(np.linspace(max(a, t0), min(b, t1), panels + 1))
    if b < t1:
        parts.append(np.linspace(b, t1, max(panels // 4, 1) + 1))
    return np.unique(np.concatenate(parts))


def expected_residual_loss(
    residual_fn: Callable,
    t_range: tuple[float, float],
    x_range: tuple[float, float] | None = None,
    cutoff: CutoffSpec | None = None,
    nodes: int = 8,
    panels: int = 8,
    rtol: float = 1e-6,
    max_refinements: int = 12,
) -> float:
    """Normalized integral of ``residual_fn(t[, x])**2`` over the domain.

    Composite Gauss-Legendre with time panels split at the layer edges;
    panel counts double until two estimates agree to ``rtol``.
    """
    measure = (t_range[1] - t_range[0]) * (1.0 if x_range is None else x_range[1] - x_range[0])

    def estimate(p):
        t, wt = _gl_panels(_time_edges(t_range, cutoff, p), nodes)
        if x_range is None:
            return float(np.sum(wt * np.square(residual_fn(t)))) / measure
        x, wx = _gl_panels(np.linspace(x_range[0], x_range[1], max(p // 2, 1) + 1), nodes)
        r = residual_fn(t[:, None], x[None, :])
        return float(wt @ np.square(r) @ wx) / measure

    prev = estimate(panels)
    for _ in range(max_refinements):
        panels *= 2
        cur = estimate(panels)
        if abs(cur - prev) <= rtol * max(abs(cur), np.finfo(float).tiny) or cur == prev:
            return cur
        last_prev, prev = prev, cur
    raise QuadratureNotConverged(cur, last_prev)


def layer_integral(fn: Callable, cutoff: CutoffSpec, nodes: int = 16, panels: int = 64) -> float:
    """Gauss-Legendre integral of ``fn(t)`` over the transition layer."""
    t, w = _gl_panels(np.linspace(*cutoff.layer, panels + 1), nodes)
    return float(np.sum(w * fn(t)))


# --------------------------------------------------------------------------
# scaling fits


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residual: float
    span_decades: float


def scaling_fit(h: Sequence[float], loss: Sequence[float]) -> ScalingFit:
    """Least-squares line through ``(log10 h, log10 loss)``."""
    h = np.asarray(h, dtype=np.float64)
    loss = np.asarray(loss, dtype=np.float64)
    if h.shape != loss.shape or h.ndim != 1:
        raise ValueError("h and loss must be 1-D and of equal length")
    if len(h) < 4:
        raise ValueError("need at least 4 points for a scaling fit")
    if np.any(h <= 0) or np.any(loss <= 0):
        raise ValueError("scaling fit needs positive h and loss values")
    x, y = np.log10(h), np.log10(loss)
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / len(h))) if len(res) else 0.0
    return ScalingFit(float(slope), float(intercept), resid, float(x.max() - x.min()))


# --------------------------------------------------------------------------
# experiments


DEFAULT_HS = (0.4, 0.2, 0.1, 0.05, 0.025)


@dataclass
class Theorem2Report:
    hs: tuple[float, ...]
    tau: float
    loss_dagger: list
    loss_plus: list
    fit_dagger: ScalingFit
    fit_plus: ScalingFit
    cross_term: float
    split_error: float

    windows = {"dagger": (-1.15, -0.85), "plus": (-3.2, -2.8)}

    @property
    def passed(self) -> dict[str, bool]:
        lo1, hi1 = self.windows["dagger"]
        lo2, hi2 = self.windows["plus"]
        return {
            "slope_dagger": lo1 <= self.fit_dagger.slope <= hi1,
            "slope_plus": lo2 <= self.fit_plus.slope <= hi2,
            "cross_term": abs(self.cross_term) < 1e-8,
            "split": self.split_error < 1e-4,
        }

    def rows(self) -> list[dict]:
        return [
            {"h": h, "tau": self.tau, "EL_dagger": a, "EL_plus": b}
            for h, a, b in zip(self.hs, self.loss_dagger, self.loss_plus)
        ]

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"{'h':>8} {'tau':>6} {'E L(u_dag)':>16} {'E L(u_dag+)':>16}\n")
        for r in self.rows():
            out.write(f"{r['h']:>8.4g} {r['tau']:>6.3g} {r['EL_dagger']:>16.8e} {r['EL_plus']:>16.8e}\n")
        p = self.passed
        out.write(f"slope u_dag   {self.fit_dagger.slope:+.4f}  window {self.windows['dagger']}  {_flag(p['slope_dagger'])}\n")
        out.write(f"slope u_dag+  {self.fit_plus.slope:+.4f}  window {self.windows['plus']}  {_flag(p['slope_plus'])}\n")
        out.write(f"max |int a'a''| {self.cross_term:.3e}  {_flag(p['cross_term'])}\n")
        out.write(f"split rel. err  {self.split_error:.3e}  {_flag(p['split'])}\n")
        return out.getvalue()

    def to_csv(self) -> str:
        lines = ["h,tau,EL_dagger,EL_plus"]
        lines += [f"{r['h']!r},{r['tau']!r},{r['EL_dagger']!r},{r['EL_plus']!r}" for r in self.rows()]
        lines.append(f"# slope_dagger,{self.fit_dagger.slope!r}")
        lines.append(f"# slope_plus,{self.fit_plus.slope!r}")
        return "\n".join(lines) + "\n"


def _flag(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def theorem2(hs: Sequence[float] = DEFAULT_HS, tau: float = 1.0, c: float = 1.0, t0: float = 1.0, t_end: float = 2.0) -> Theorem2Report:
    """Expected residual losses of the spurious advection fields across layer widths."""
    x_range = (0.0, 2.0 * np.pi)
    la, lp, cross, split = [], [], [], []
    for h in hs:
        cut = CutoffSpec(t0, h)
        if t0 + h > t_end:
            raise ValueError(f"layer [{t0}, {t0 + h}] leaves the time domain")
        rd = lambda t, x, cut=cut: spurious_residual("advection", cut, tau, t, x, "dagger", c)  # noqa: E731
        rp = lambda t, x, cut=cut: spurious_residual("advection", cut, tau, t, x, "plus", c)  # noqa: E731
        a = expected_residual_loss(rd, (0.0, t_end), x_range, cut)
        b = expected_residual_loss(rp, (0.0, t_end), x_range, cut)
        la.append(a)
        lp.append(b)
        cross.append(layer_integral(lambda t, cut=cut: cutoff_eval(cut, t, 1) * cutoff_eval(cut, t, 2), cut))
        # mean of sin^2 over a period is 1/2
        second = layer_integral(lambda t, cut=cut: cutoff_eval(cut, t, 2) ** 2, cut) / (2.0 * t_end)
        split.append(abs(b - (a + tau**2 * second)) / b)
    return Theorem2Report(
        tuple(hs), tau, la, lp, scaling_fit(hs, la), scaling_fit(hs, lp),
        float(max(cross, key=abs)), float(max(split)),
    )


@dataclass
class Fig5Report:
    t: np.ndarray
    r_dagger: np.ndarray
    r_plus: np.ndarray
    cutoff: CutoffSpec
    tau: float

    @property
    def ratio(self) -> float:
        inside = self.cutoff.contains(self.t)
        return float(np.max(np.abs(self.r_plus[inside])) / np.max(np.abs(self.r_dagger[inside])))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,R_dagger,R_plus\n")
        np.savetxt(buf, np.column_stack([self.t, self.r_dagger, self.r_plus]), fmt="%.17g", delimiter=",")
        return buf.getvalue()

    def to_text(self) -> str:
        inside = self.cutoff.contains(self.t)
        return (
            f"ODE u_t = cos t on [0, 2pi], tau={self.tau:g}, layer [{self.cutoff.t0:g}, {self.cutoff.t0 + self.cutoff.h:g}]\n"
            f"max |R[u_dag]|  in layer {np.max(np.abs(self.r_dagger[inside])):.6e}\n"
            f"max |R[u_dag+]| in layer {np.max(np.abs(self.r_plus[inside])):.6e}\n"
            f"amplification {self.ratio:.4g}  {_flag(self.ratio >= 10)}\n"
        )


def fig5(tau: float = 1.0, h: float = 0.4, t0: float = 1.0, samples: int = 20001) -> Fig5Report:
    """Dense residual profiles of the ODE spurious field and its pseudo-time update."""
    cut = CutoffSpec(t0, h)
    t = np.union1d(np.linspace(0.0, 2.0 * np.pi, samples), np.linspace(t0, t0 + h, samples))
    return Fig5Report(
        t,
        spurious_residual("ode_cos", cut, tau, t, which="dagger"),
        spurious_residual("ode_cos", cut, tau, t, which="plus"),
        cut,
        tau,
    )


@dataclass
class Theorem1Witness:
    empirical_loss: float
    relative_error: float
    mass_past_t0: float
    points: int

    @property
    def passed(self) -> bool:
        return self.empirical_loss == 0.0 and self.relative_error > 0.3 and self.relative_error >= self.mass_past_t0


def theorem1_witness(t0: float = 1.0, h: float = 0.1, points: int = 1024, seed: int = 0, grid: tuple[int, int] = (400, 256)) -> Theorem1Witness:
    """Frozen advection collocation set avoiding the layer: zero loss, wrong field.

    The residual goes through the problem's own residual operator, fed with
    closed-form derivatives of ``u_dag``.
    """
    spec = get_problem("advection")
    c = spec.constants["c"]
    cut = CutoffSpec(t0, h)
    (ta, tb), (xa, xb) = spec.bounds
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E01]))
    pts = np.empty((0, 2))
    while len(pts) < points:
        cand = np.column_stack([rng.uniform(ta, tb, points), rng.uniform(xa, xb, points)])
        pts = np.vstack([pts, cand[~cut.contains(cand[:, 0])]])
    pts = pts[:points]
    (r,) = spec.residual_fn(advection_fields(cut, pts, c), spec.constants)
    loss = float(np.mean(np.square(r)))

    t = np.linspace(ta, tb, grid[0])
    x = np.linspace(xa, xb, grid[1], endpoint=False)
    T, X = np.meshgrid(t, x, indexing="ij")
    ustar = np.sin(X - c * T)
    udag = cutoff_eval(cut, T) * ustar
    err = float(np.linalg.norm(udag - ustar) / np.linalg.norm(ustar))
    past = T >= t0 + h
    mass = float(np.linalg.norm(ustar[past]) / np.linalg.norm(ustar))
    return Theorem1Witness(loss, err, mass, points)


# --------------------------------------------------------------------------
# autodiff oracles


def gradient_check(problem: str = "allen_cahn", width: int = 8, num_blocks: int = 2, points: int = 16, tau: float = 0.1, seed: int = 0, step: float = 1e-6) -> dict:
    """Reverse-mode gradient of the pseudo-time loss against central differences.

    Relative deviation per entry is ``|g - fd| / max(|g|, |fd|, 1e-6 max|fd|)``;
    the floor keeps entries that are zero up to rounding from dominating.
    """
    from .autodiff import ParamVector, value_and_grad
    from .losses import frozen_outputs, pts_loss
    from .models import init_params
    from .problems import SampleCounts, network_field, sample

    spec = get_problem(problem)
    net = spec.network_config(width=width, num_blocks=num_blocks, fourier_seed=seed)
    theta = init_params(net, seed)
    prev = init_params(net, seed + 1)
    batch = sample(spec, SampleCounts(points, points, points), seed)
    prev_out = frozen_outputs(spec, network_field(net, prev), batch.interior)
    taus = (tau,) * spec.num_residuals

    def loss(p):
        return pts_loss(spec, network_field(net, p), prev_out, taus, batch).total

    def value(v):
        out = loss(ParamVector(v, theta.layout))
        return float(np.asarray(getattr(out, "value", out)))

    _, grad = value_and_grad(loss, theta)
    g = grad.numpy()
    base = theta.numpy()
    fd = np.empty_like(base)
    for i in range(len(base)):
        up, dn = base.copy(), base.copy()
        up[i] += step
        dn[i] -= step
        fd[i] = (value(up) - value(dn)) / (2 * step)
    floor = 1e-6 * np.max(np.abs(fd))
    dev = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)
    return {"problem": spec.name, "parameters": len(base), "max_rel_dev": float(dev.max()), "passed": bool(dev.max() < 1e-5)}


def _exp_sin_derivs(x):
    s, c = math.sin(x), math.cos(x)
    f = math.exp(s)
    polys = [1.0, c, c * c - s, c**3 - 3 * c * s - c, c**4 - 6 * c * c * s - 4 * c * c + 3 * s * s + s]
    return [p * f for p in polys]


def _tanh_derivs(x, a=1.0):
    t = math.tanh(a * x)
    s = 1.0 - t * t
    d = [t, s, -2 * t * s, s * (6 * t * t - 2), t * s * (16 - 24 * t * t)]
    return [v * a**k for k, v in enumerate(d)]


def _sin_derivs(x, a=1.0, b=0.0):
    y = a * x + b
    d = [math.sin(y), math.cos(y), -math.sin(y), -math.cos(y), math.sin(y)]
    return [v * a**k for k, v in enumerate(d)]


def _product_derivs(f, g):
    return [sum(math.comb(n, k) * f[k] * g[n - k] for k in range(n + 1)) for n in range(len(f))]


def jet_check(xs: Sequence[float] = (-1.3, -0.2, 0.0, 0.7, 2.1), order: int = 4) -> dict:
    """Jet derivatives against analytic formulas for sin, tanh and compositions."""
    from .autodiff import Jet
    from .autodiff import jet as jl

    cases = {
        "sin": (lambda z: jl.sin(z), lambda x: _sin_derivs(x)),
        "tanh": (lambda z: jl.tanh(z), lambda x: _tanh_derivs(x)),
        "tanh(3x)": (lambda z: jl.tanh(3.0 * z), lambda x: _tanh_derivs(x, 3.0)),
        "exp(sin x)": (lambda z: jl.exp(jl.sin(z)), _exp_sin_derivs),
        "sin(2x+1)*tanh(x)": (
            lambda z: jl.sin(2.0 * z + 1.0) * jl.tanh(z),
            lambda x: _product_derivs(_sin_derivs(x, 2.0, 1.0), _tanh_derivs(x)),
        ),
    }
    worst = {}
    for name, (fn, exact) in cases.items():
        err = 0.0
        for x in xs:
            out = fn(Jet.seed(float(x), order))
            got = [float(np.asarray(out.coeffs[k]).reshape(-1)[0]) * math.factorial(k) for k in range(order + 1)]
            ref = exact(x)
            err = max(err, max(abs(a - b) / max(1.0, abs(b)) for a, b in zip(got, ref)))
        worst[name] = err
    return {"max_error": max(worst.values()), "cases": worst, "passed": max(worst.values()) < 1e-10}
