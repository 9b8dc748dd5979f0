"""Training loop: sampling, step-size and weight updates, gradient steps, checkpoints."""

from __future__ import annotations

import json
import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import _alloc
from .autodiff import ParamVector, value_and_grad, value_and_term_grads
from .losses import (
    CausalConfig,
    GlobalWeights,
    build_losses,
    grad_norm_weights,
    interior_term_names,
    term_names,
)
from .models import ConfigError, PirateNetConfig, apply, init_params
from .optim import AdamState, LrSchedule, SoapState, adam_step, lr_at, soap_step
from .problems import (
    ProblemSpec,
    SampleCounts,
    UnsupportedReference,
    evaluate_fields,
    get_problem,
    network_field,
    reference_solve,
    relative_l2,
    sample,
)
from .pts import PtsState, Shrink, component_gammas, estimate_tau_hat, update_tau

log = logging.getLogger(__name__)

METHODS = ("baseline", "fixed-pts", "adaptive-pts")
SAMPLING = ("resample", "frozen")


class TrainingDiverged(FloatingPointError):
    """Nonfinite loss; ``snapshot`` holds the iteration, tau, weights and lr."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a run. Defaults are the desk-scale protocol."""

    problem: str = "advection"
    constants: dict = field(default_factory=dict)
    method: str = "adaptive-pts"
    tau: tuple[float, ...] | None = None
    sampling: str = "resample"
    iterations: int = 20000
    seed: int = 0
    # network
    width: int = 64
    num_blocks: int = 2
    activation: str = "tanh"
    arch: str = "pirate"
    fourier_scale: float | None = None
    # batches
    interior: int = 1024
    initial: int = 256
    boundary: int = 256
    # optimizer and schedule
    optimizer: str = "adam"
    lr: float = 1e-3
    warmup: int = 2000
    decay: float = 0.9
    decay_every: int = 2000
    soap_freq: int = 2
    # weighting
    causal: bool | None = None
    causal_tolerance: float = 1.0
    causal_chunks: int = 16
    grad_norm_every: int = 1000
    grad_norm_memory: float = 0.9
    # adaptive step sizes
    tau0: float = 1.0
    pts_beta: float = 0.5
    pts_every: int = 1000
    pts_eps: float = 1e-8
    shrink_start: float = 2.0
    shrink_end: float = 6.0
    gamma_min: float = 0.1
    smooth_window: int = 100
    # bookkeeping
    eval_every: int = 1000
    checkpoint_every: int = 5000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.sampling not in SAMPLING:
            raise ConfigError(f"sampling must be one of {SAMPLING}")
        if self.method == "fixed-pts" and self.tau is None:
            raise ConfigError("fixed-pts needs tau")
        if self.method != "fixed-pts" and self.tau is not None:
            raise ConfigError(f"tau is only valid with fixed-pts, not {self.method}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.optimizer not in ("adam", "soap"):
            raise ConfigError("optimizer must be adam or soap")
        if self.smooth_window < 1 or self.eval_every < 1 or self.checkpoint_every < 1:
            raise ConfigError("window and period settings must be >= 1")
        if self.grad_norm_every < 0:
            raise ConfigError("grad_norm_every must be >= 0 (0 disables)")
        spec = self.spec()
        if self.causal and not spec.causal_applicable:
            raise ConfigError(f"causal weighting does not apply to {spec.name}")
        if self.tau is not None and len(self.tau) not in (1, spec.num_residuals):
            raise ConfigError(f"{spec.name} takes 1 or {spec.num_residuals} tau values")

    def spec(self) -> ProblemSpec:
        return get_problem(self.problem, **self.constants)

    def network(self) -> PirateNetConfig:
        kw = {"arch": self.arch, "fourier_seed": self.seed}
        if self.fourier_scale is not None:
            kw["fourier_scale"] = self.fourier_scale
        return self.spec().network_config(self.width, self.num_blocks, self.activation, **kw)

    def counts(self) -> SampleCounts:
        return SampleCounts(self.interior, self.initial, self.boundary)

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.warmup, self.decay, self.decay_every)

    def causal_config(self) -> CausalConfig | None:
        use = self.spec().causal_applicable if self.causal is None else self.causal
        return CausalConfig(self.causal_tolerance, self.causal_chunks) if use else None

    def initial_pts(self) -> PtsState | None:
        n = self.spec().num_residuals
        if self.method == "baseline":
            return None
        if self.method == "fixed-pts":
            tau = self.tau * n if len(self.tau) == 1 else self.tau
            return PtsState.fixed(tau)
        return PtsState.adaptive(
            n,
            self.tau0,
            beta=self.pts_beta,
            freq=self.pts_every,
            eps=self.pts_eps,
            shrink=Shrink(self.shrink_start, self.shrink_end, self.gamma_min),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tau"] = list(self.tau) if self.tau is not None else None
        return d


@dataclass
class TrainHistory:
    """Per-iteration records plus sparse error evaluations.

    ``records[i]`` has keys ``iter``, ``loss``, ``terms``, ``weights``,
    ``tau``, ``lr`` and ``error`` (``None`` when not evaluated). Wall-clock
    timings live apart in ``timings`` so the records stay deterministic.
    """

    term_names: tuple[str, ...]
    tau_names: tuple[str, ...]
    records: list = field(default_factory=list)
    timings: list = field(default_factory=list)

    def errors(self) -> list[tuple[int, float]]:
        return [(r["iter"], r["error"]) for r in self.records if r["error"] is not None]

    @property
    def final_error(self) -> float | None:
        errs = self.errors()
        return errs[-1][1] if errs else None

    def final_loss(self, window: int = 100) -> float:
        """Mean weighted training loss over the last ``window`` iterations."""
        tail = self.records[-window:]
        return float(np.mean([r["loss"] for r in tail]))

    def tau_trace(self) -> np.ndarray:
        return np.array([r["tau"] for r in self.records]) if self.tau_names else np.empty((len(self.records), 0))


@dataclass
class TrainResult:
    config: TrainConfig
    params: ParamVector
    history: TrainHistory
    pts: PtsState | None
    weights: GlobalWeights | None


# --------------------------------------------------------------------------
# evaluation


def evaluate(params: ParamVector, spec: ProblemSpec, network: PirateNetConfig | Callable, resolution=None, chunk: int = 16384) -> float | None:
    """Relative L2 error on the reference grid; ``None`` if no reference exists.

    ``network`` is a network config, or any callable mapping an ``(N, d)``
    point array to predictions (used to inject closed-form fields).
    """
    try:
        ref = reference_solve(spec, resolution)
    except UnsupportedReference as exc:
        log.info("skipping error evaluation: %s", exc)
        return None
    pts = ref.points()
    if isinstance(network, PirateNetConfig):
        predict = lambda p: apply(network, params, p)[:, 0]  # noqa: E731
    else:
        predict = network
    pred = np.concatenate([np.asarray(predict(pts[i : i + chunk])).reshape(-1) for i in range(0, len(pts), chunk)])
    return relative_l2(pred, ref)


# --------------------------------------------------------------------------
# training


def _outputs(net: PirateNetConfig, params: ParamVector, points: np.ndarray) -> np.ndarray:
    return apply(net, params, points)


def _check_finite(loss: float, k: int, pts: PtsState | None, weights, lr: float) -> None:
    if not math.isfinite(loss):
        snap = {
            "iter": k,
            "tau": None if pts is None else list(pts.tau),
            "weights": None if weights is None else dict(weights.lambdas),
            "lr": lr,
        }
        raise TrainingDiverged(f"nonfinite loss at iteration {k}: {snap}", snap)


class _Optimizer:
    def __init__(self, config: TrainConfig, params: ParamVector):
        self.kind = config.optimizer
        if self.kind == "adam":
            self.state = AdamState.init(params)
        else:
            self.state = SoapState.init(params, freq=config.soap_freq)

    def step(self, params, grad, lr):
        fn = adam_step if self.kind == "adam" else soap_step
        self.state, params = fn(self.state, params, grad, lr)
        return params


def _tau_names(spec: ProblemSpec) -> tuple[str, ...]:
    return ("tau",) if spec.num_residuals == 1 else tuple(f"tau_{o}" for o in spec.outputs)


def train(config: TrainConfig, checkpoint_dir: str | Path | None = None, resume: str | Path | None = None, callback=None) -> TrainResult:
    """Run the configured number of iterations.

    Iteration ``k`` (1-based): draw batch k; on update iterations refresh tau
    (pts methods) and then the loss weights; build the loss at theta^k with
    theta^{k-1} frozen; take one optimizer step with ``lr_at(k)``. Before
    iteration 1 a bootstrap step on the plain empirical loss turns theta^0
    into theta^1, so the first tau estimate sees a nonzero increment.
    """
    _alloc.tune_allocator()
    spec = config.spec()
    net = config.network()
    counts = config.counts()
    schedule = config.schedule()
    causal = config.causal_config()
    frozen = config.sampling == "frozen"
    names = term_names(spec)
    inames = interior_term_names(spec)
    history = TrainHistory(names, _tau_names(spec) if config.method != "baseline" else ())
    pts = config.initial_pts()
    weights = GlobalWeights.uniform(names, memory=config.grad_norm_memory, period=max(config.grad_norm_every, 1)) if config.grad_norm_every else None
    window: deque = deque(maxlen=config.smooth_window)

    def losses(params, batch, tau=None, prev=None, lam=None):
        return build_losses(
            spec, network_field(net, params), batch, tau=tau, prev_outputs=prev,
            weights=None if lam is None else lam.lambdas, causal=causal,
        )

    def update_weights(params, batch, tau, prev):
        values, grads = value_and_term_grads(lambda p: losses(p, batch, tau, prev).terms, params)
        norms = {n: float(np.linalg.norm(g)) for n, g in grads.items()}
        if any(v > 0 for v in norms.values()):
            return grad_norm_weights(weights, norms)
        return weights

    if resume is not None:
        theta, prev_theta, opt, pts, weights, window, k0, history = _load_checkpoint(resume, config, net)
    else:
        theta = init_params(net, config.seed)
        opt = _Optimizer(config, theta)
        batch0 = sample(spec, counts, config.seed, 0, frozen)
        if weights is not None:
            weights = update_weights(theta, batch0, None, None)
        (loss0, br0), grad = value_and_grad(lambda p: _aux(losses(p, batch0, lam=weights)), theta, has_aux=True)
        _check_finite(loss0, 0, pts, weights, lr_at(schedule, 1))
        if pts is not None and pts.mode == "adaptive":
            pts = replace(pts, anchor=tuple(br0[n] for n in inames))
        window.append(tuple(br0[n] for n in inames))
        prev_theta = theta
        theta = opt.step(theta, grad, lr_at(schedule, 1))
        k0 = 0

    t_last = time.perf_counter()
    for k in range(k0 + 1, config.iterations + 1):
        batch = sample(spec, counts, config.seed, k, frozen)
        lr = lr_at(schedule, k)
        prev_out = _outputs(net, prev_theta, batch.interior) if pts is not None else None

        if pts is not None and pts.due(k):
            pts = _update_tau(spec, net, pts, theta, prev_theta, batch, window, k)
        tau = pts.tau if pts is not None else None
        if weights is not None and weights.due(k):
            weights = update_weights(theta, batch, tau, prev_out)

        (loss, raw), grad = value_and_grad(
            lambda p: _aux(losses(p, batch, tau, prev_out, weights)), theta, has_aux=True
        )
        _check_finite(loss, k, pts, weights, lr)
        window.append(tuple(raw[n] for n in inames))

        error = None
        if k % config.eval_every == 0 or k == config.iterations:
            error = evaluate(theta, spec, net)
        history.records.append(
            {
                "iter": k,
                "loss": loss,
                "terms": {n: raw["terms"][n] for n in names},
                "weights": {n: (weights.lambdas[n] if weights else 1.0) for n in names},
                "tau": list(tau) if tau is not None else [],
                "lr": lr,
                "error": error,
            }
        )
        if callback is not None:
            callback(k, history.records[-1])

        prev_theta = theta
        theta = opt.step(theta, grad, lr)

        if k % 100 == 0:
            now = time.perf_counter()
            history.timings.append((k, now - t_last))
            t_last = now
        if checkpoint_dir is not None and (k % config.checkpoint_every == 0 or k == config.iterations):
            save_checkpoint(Path(checkpoint_dir) / f"ckpt_{k:07d}.npz", config, theta, prev_theta, opt, pts, weights, window, k, history)

    return TrainResult(config, theta, history, pts, weights)


def _aux(breakdown):
    """Loss for the tape plus float by-products (term values, raw interior losses)."""
    aux = dict(breakdown.raw_interior)
    aux["terms"] = breakdown.values()
    return breakdown.total, aux


def _update_tau(spec, net, pts, theta, prev_theta, batch, window, k):
    cur = evaluate_fields(spec, network_field(net, theta), batch.interior)
    old = evaluate_fields(spec, network_field(net, prev_theta), batch.interior)
    r_cur = spec.residual_fn(cur, spec.constants)
    r_old = spec.residual_fn(old, spec.constants)
    lk = [float(np.mean(np.square(r))) for r in r_cur]
    recent = list(window)[1 - window.maxlen :] if window.maxlen > 1 else []
    smoothed = np.mean(np.array(recent + [lk]), axis=0)
    gammas = component_gammas(pts, smoothed)
    # residual i is paired with output i
    hats = [
        estimate_tau_hat(np.asarray(cur.values[i]) - np.asarray(old.values[i]), np.asarray(r_cur[i]) - np.asarray(r_old[i]), gammas[i], pts.eps)
        for i in range(spec.num_residuals)
    ]
    new = update_tau(pts, k, hats)
    log.info("iter %d: tau %s -> %s (gamma %s)", k, pts.tau, new.tau, gammas)
    return new


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, config, theta, prev_theta, opt, pts, weights, window, k, history) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "config": config.to_dict(),
        "iter": k,
        "layout": [[s.name, list(s.shape)] for s in theta.layout],
        "optimizer": opt.kind,
        "pts": None if pts is None else {"tau": list(pts.tau), "anchor": None if pts.anchor is None else list(pts.anchor)},
        "weights": None if weights is None else dict(weights.lambdas),
        "window": [list(w) for w in window],
        "records": history.records,
    }
    arrays = {"theta": theta.numpy(), "prev_theta": prev_theta.numpy()}
    arrays.update(opt.state.arrays())
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, meta=np.array(json.dumps(meta)), **arrays)
    tmp.replace(path)
    return path


def _load_checkpoint(path, config: TrainConfig, net: PirateNetConfig):
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    meta = json.loads(str(arrays.pop("meta")))
    if meta["config"] != config.to_dict():
        raise ConfigError("checkpoint was written by a different configuration")
    layout = net.layout()
    theta = ParamVector(arrays["theta"], layout)
    prev_theta = ParamVector(arrays["prev_theta"], layout)
    opt = _Optimizer(config, theta)
    opt.state = opt.state.load(arrays)
    pts = config.initial_pts()
    if pts is not None:
        p = meta["pts"]
        pts = replace(pts, tau=tuple(p["tau"]), anchor=None if p["anchor"] is None else tuple(p["anchor"]))
    weights = None
    if meta["weights"] is not None:
        weights = GlobalWeights(meta["weights"], config.grad_norm_memory, max(config.grad_norm_every, 1))
    window = deque((tuple(w) for w in meta["window"]), maxlen=config.smooth_window)
    spec = config.spec()
    history = TrainHistory(term_names(spec), _tau_names(spec) if config.method != "baseline" else ())
    history.records = meta["records"]
    return theta, prev_theta, opt, pts, weights, window, int(meta["iter"]), history
