"""Command-line entry point: ``ptspinn train | verify | sweep``."""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, verify
from .models import ConfigError
from .trainer import METHODS, SAMPLING, TrainConfig, TrainingDiverged, TrainResult, train

log = logging.getLogger("ptspinn")

# INI layout: section -> keys, each key a TrainConfig field
SECTIONS = {
    "problem": ("problem", "constants"),
    "network": ("width", "num_blocks", "activation", "arch", "fourier_scale"),
    "method": ("method", "tau", "sampling"),
    "batch": ("interior", "initial", "boundary"),
    "optimizer": ("optimizer", "lr", "warmup", "decay", "decay_every", "soap_freq"),
    "weighting": ("causal", "causal_tolerance", "causal_chunks", "grad_norm_every", "grad_norm_memory"),
    "pts": ("tau0", "pts_beta", "pts_every", "pts_eps", "shrink_start", "shrink_end", "gamma_min", "smooth_window"),
    "run": ("iterations", "seed", "eval_every", "checkpoint_every"),
}
_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
DEFAULT_TAUS = (0.01, 0.1, 1.0, 10.0, 100.0)


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    default = _FIELDS[name].default
    if name == "tau":
        return None if raw.lower() in ("", "none") else _float_tuple(raw)
    if name == "constants":
        out = {}
        for item in filter(None, (s.strip() for s in raw.split(","))):
            k, _, v = item.partition("=")
            out[k.strip()] = float(v)
        return out
    if name == "causal":
        low = raw.lower()
        if low in ("auto", "none", ""):
            return None
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise UsageError(f"causal must be true/false/auto, got {raw!r}")
    if name == "fourier_scale":
        return None if raw.lower() in ("", "none") else float(raw)
    if isinstance(default, bool):
        return raw.lower() in ("true", "yes", "on", "1")
    if isinstance(default, int):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _float_tuple(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in raw.split(",") if s.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {raw!r}") from None


def read_config(path: str | Path) -> dict:
    """Parse an INI run file into TrainConfig keyword arguments.

    Unknown sections or keys are errors, so typos never fall back to defaults.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    kwargs = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise UsageError(f"unknown section [{section}] in {path}")
        for key, raw in cp.items(section):
            if key not in SECTIONS[section]:
                raise UsageError(f"unknown key {key!r} in section [{section}] of {path}")
            kwargs[key] = _parse_value(key, raw)
    return kwargs


def config_to_ini(config: TrainConfig) -> str:
    d = config.to_dict()
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for k in keys:
            v = d[k]
            if k == "constants":
                v = ", ".join(f"{a}={b!r}" for a, b in v.items())
            elif k == "tau":
                v = "none" if v is None else ", ".join(repr(t) for t in v)
            elif k == "causal" and v is None:
                v = "auto"
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)


def _git_blob_sha1(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _source_hash() -> str:
    root = Path(__file__).parent
    h = hashlib.sha1()
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(_git_blob_sha1(p.read_bytes()).encode())
    return h.hexdigest()


def manifest(config: TrainConfig) -> dict:
    canonical = json.dumps(config.to_dict(), sort_keys=True).encode()
    return {
        "package": "ptspinn",
        "version": __version__,
        "config": config.to_dict(),
        "config_sha1": _git_blob_sha1(canonical),
        "source_sha1": _source_hash(),
        "numpy": np.__version__,
    }


# --------------------------------------------------------------------------
# metrics


def metrics_header(result_or_names) -> list[str]:
    h = result_or_names
    cols = ["iter", "loss"]
    cols += [f"L_{n}" for n in h.term_names]
    cols += [f"lambda_{n}" for n in h.term_names]
    cols += list(h.tau_names)
    cols += ["lr", "rel_l2"]
    return cols


def write_metrics(path: Path, result: TrainResult) -> None:
    """Comma-separated metrics; no wall-clock columns so reruns match bit for bit."""
    h = result.history
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(metrics_header(h)) + "\n")
        for r in h.records:
            row = [str(r["iter"]), repr(r["loss"])]
            row += [repr(r["terms"][n]) for n in h.term_names]
            row += [repr(r["weights"][n]) for n in h.term_names]
            row += [repr(t) for t in r["tau"]]
            row += [repr(r["lr"]), "" if r["error"] is None else repr(r["error"])]
            fh.write(",".join(row) + "\n")


def write_timings(path: Path, result: TrainResult) -> None:
    with open(path, "w") as fh:
        fh.write("iter,seconds_per_100\n")
        for k, dt in result.history.timings:
            fh.write(f"{k},{dt:.4f}\n")


# --------------------------------------------------------------------------
# commands


def _train_config(args) -> TrainConfig:
    kwargs = read_config(args.config) if args.config else {}
    flags = {
        "problem": args.problem,
        "method": args.method,
        "sampling": args.sampling,
        "seed": args.seed,
        "iterations": args.iters,
        "optimizer": args.optimizer,
        "width": args.width,
        "num_blocks": args.blocks,
        "eval_every": args.eval_every,
    }
    kwargs.update({k: v for k, v in flags.items() if v is not None})
    if args.tau is not None:
        kwargs["tau"] = _float_tuple(args.tau)
    method = kwargs.get("method", _FIELDS["method"].default)
    if method == "fixed-pts" and kwargs.get("tau") is None:
        raise UsageError("--method fixed-pts requires --tau")
    if method != "fixed-pts" and kwargs.get("tau") is not None:
        raise UsageError(f"--tau cannot be combined with --method {method}")
    try:
        return TrainConfig(**kwargs)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args) -> int:
    config = _train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config_to_ini(config))
    (out / "manifest.json").write_text(json.dumps(manifest(config), indent=2, sort_keys=True) + "\n")

    def progress(k, rec):
        if k % args.log_every == 0 or rec["error"] is not None:
            err = "" if rec["error"] is None else f" rel_l2={rec['error']:.4e}"
            tau = "" if not rec["tau"] else " tau=" + ",".join(f"{t:.4g}" for t in rec["tau"])
            log.info("iter %d loss=%.6e%s%s", k, rec["loss"], tau, err)

    try:
        result = train(config, checkpoint_dir=out / "checkpoints", resume=args.resume, callback=progress)
    except TrainingDiverged as exc:
        log.error("%s", exc)
        (out / "diverged.json").write_text(json.dumps(exc.snapshot, indent=2) + "\n")
        return 3
    write_metrics(out / "metrics.csv", result)
    write_timings(out / "timings.csv", result)
    err = result.history.final_error
    print(f"final loss {result.history.final_loss():.6e}" + ("" if err is None else f"  rel_l2 {err:.6e}"))
    return 0


def cmd_verify(args) -> int:
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    if args.what == "theorem2":
        rep = verify.theorem2(tau=args.tau)
        print(rep.to_text(), end="")
        if out:
            (out / "theorem2.txt").write_text(rep.to_text())
            (out / "theorem2.csv").write_text(rep.to_csv())
        ok = all(rep.passed.values())
    elif args.what == "fig5":
        rep = verify.fig5(tau=args.tau, h=args.h)
        print(rep.to_text(), end="")
        if out:
            (out / "fig5.txt").write_text(rep.to_text())
            (out / "fig5.csv").write_text(rep.to_csv())
        ok = rep.ratio >= 10
    elif args.what == "theorem1":
        w = verify.theorem1_witness(h=args.h)
        print(f"empirical L_int(u_dag) {w.empirical_loss:.3e}\nrelative L2 vs u*      {w.relative_error:.4f}\n"
              f"mass past layer        {w.mass_past_t0:.4f}\n{verify._flag(w.passed)}")
        ok = w.passed
    elif args.what == "gradients":
        r = verify.gradient_check(problem=args.problem, width=args.width)
        print(f"{r['problem']}: {r['parameters']} parameters, max relative deviation {r['max_rel_dev']:.3e}  {verify._flag(r['passed'])}")
        ok = r["passed"]
    else:
        r = verify.jet_check()
        for name, e in r["cases"].items():
            print(f"{name:<20} {e:.3e}")
        print(f"max error {r['max_error']:.3e}  {verify._flag(r['passed'])}")
        ok = r["passed"]
    return 0 if ok else 1


def _parse_seeds(raw: str) -> list[int]:
    seeds = []
    for part in raw.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            seeds += list(range(int(a), int(b) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise UsageError("no seeds given")
    return seeds


def _sweep_cell(kwargs: dict) -> tuple[float, float | None]:
    result = train(TrainConfig(**kwargs))
    return result.history.final_loss(), result.history.final_error


def sweep_table(rows: list[dict]) -> str:
    lines = [f"{'method':<14} {'tau':>8} {'loss mean':>12} {'loss std':>10} {'rel_l2 mean':>12} {'rel_l2 std':>10}"]
    for r in rows:
        tau = "-" if r["tau"] is None else f"{r['tau']:g}"
        e_mean = "n/a" if r["err_mean"] is None else f"{r['err_mean']:.4e}"
        e_std = "n/a" if r["err_std"] is None else f"{r['err_std']:.2e}"
        lines.append(f"{r['method']:<14} {tau:>8} {r['loss_mean']:>12.4e} {r['loss_std']:>10.2e} {e_mean:>12} {e_std:>10}")
    fixed = [r for r in rows if r["method"] == "fixed-pts"]
    if fixed and all(r["err_mean"] is not None for r in fixed):
        by_loss = min(fixed, key=lambda r: r["loss_mean"])["tau"]
        by_err = min(fixed, key=lambda r: r["err_mean"])["tau"]
        if by_loss != by_err:
            lines.append(f"loss is not a reliable criterion: argmin loss tau={by_loss:g}, argmin error tau={by_err:g}")
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    seeds = _parse_seeds(args.seeds)
    taus = _float_tuple(args.taus) if args.taus else DEFAULT_TAUS
    base = read_config(args.config) if args.config else {}
    base.update(problem=args.problem)
    if args.iters is not None:
        base["iterations"] = args.iters
    base.pop("tau", None)
    variants = [("fixed-pts", t) for t in taus] + [("adaptive-pts", None)]
    if args.baseline:
        variants.append(("baseline", None))
    cells = []
    for method, tau in variants:
        for s in seeds:
            kw = dict(base, method=method, seed=s, tau=None if tau is None else (tau,))
            TrainConfig(**kw)  # validate before launching anything
            cells.append(kw)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    rows = []
    for i, (method, tau) in enumerate(variants):
        chunk = results[i * len(seeds) : (i + 1) * len(seeds)]
        losses = np.array([c[0] for c in chunk])
        errs = [c[1] for c in chunk]
        have = all(e is not None for e in errs)
        rows.append({
            "method": method, "tau": tau,
            "loss_mean": float(losses.mean()), "loss_std": float(losses.std()),
            "err_mean": float(np.mean(errs)) if have else None, "err_std": float(np.std(errs)) if have else None,
        })
    table = sweep_table(rows)
    print(table, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.txt").write_text(table)
        with open(out / "sweep.csv", "w") as fh:
            fh.write("method,tau,loss_mean,loss_std,rel_l2_mean,rel_l2_std\n")
            for r in rows:
                fh.write(",".join("" if r[k] is None else str(r[k]) for k in ("method", "tau", "loss_mean", "loss_std", "err_mean", "err_std")) + "\n")
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptspinn", description="Physics-informed networks with pseudo-time stepping.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--config", help="INI run file")
    t.add_argument("--problem")
    t.add_argument("--method", choices=METHODS)
    t.add_argument("--tau", help="fixed step size(s), comma-separated")
    t.add_argument("--sampling", choices=SAMPLING)
    t.add_argument("--seed", type=int)
    t.add_argument("--iters", type=int)
    t.add_argument("--optimizer", choices=("adam", "soap"))
    t.add_argument("--width", type=int)
    t.add_argument("--blocks", type=int)
    t.add_argument("--eval-every", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--log-every", type=int, default=500)
    t.add_argument("--out", default="runs/latest")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="theory and autodiff checks")
    v.add_argument("what", choices=("theorem2", "fig5", "theorem1", "gradients", "jets"))
    v.add_argument("--tau", type=float, default=1.0)
    v.add_argument("--h", type=float, default=None)
    v.add_argument("--width", type=int, default=8)
    v.add_argument("--problem", default="allen_cahn")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="fixed-tau grid plus the adaptive variant")
    s.add_argument("--problem", required=True)
    s.add_argument("--taus", help=f"comma-separated (default {','.join(map(str, DEFAULT_TAUS))})")
    s.add_argument("--seeds", default="0", help="e.g. 0..4 or 0,2,5")
    s.add_argument("--iters", type=int)
    s.add_argument("--config")
    s.add_argument("--baseline", action="store_true", help="also run the plain empirical loss")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    if getattr(args, "h", "unset") is None:
        args.h = 0.4 if args.what == "fig5" else 0.1
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except ConfigError as exc:
        parser.error(str(exc))
    return 2


if __name__ == "__main__":
    sys.exit(main())
