"""SOAP: Adam run in the eigenbasis of Shampoo's Kronecker-factor covariances."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Layout, ParamVector
from .adam import adam_direction, check_finite
from .jacobi import jacobi_eigh

log = logging.getLogger(__name__)


@dataclass
class _Matrix:
    cov_l: np.ndarray
    cov_r: np.ndarray
    q_l: np.ndarray
    q_r: np.ndarray
    m: np.ndarray  # rotated coordinates
    v: np.ndarray


@dataclass
class SoapState:
    """Per-segment optimizer state.

    2-D segments up to ``max_dim`` on each side get the rotated update; every
    other segment (biases, gates' scalars) keeps plain Adam moments in ``vec``.
    """

    layout: Layout
    mats: dict[str, _Matrix]
    vec: dict[str, tuple[np.ndarray, np.ndarray]]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    cov_decay: float = 0.95
    freq: int = 2
    max_dim: int = 1024
    sweeps: int = 20
    tol: float = 1e-10
    failed_refreshes: int = field(default=0)

    @classmethod
    def init(cls, params: ParamVector, **kw) -> "SoapState":
        max_dim = kw.get("max_dim", 1024)
        mats, vec = {}, {}
        for seg in params.layout:
            if len(seg.shape) == 2 and max(seg.shape) <= max_dim:
                a, b = seg.shape
                mats[seg.name] = _Matrix(
                    np.zeros((a, a)), np.zeros((b, b)), np.eye(a), np.eye(b), np.zeros((a, b)), np.zeros((a, b))
                )
            else:
                vec[seg.name] = (np.zeros(seg.shape), np.zeros(seg.shape))
        return cls(params.layout, mats, vec, **kw)

    def arrays(self, prefix: str = "soap") -> dict[str, np.ndarray]:
        out = {f"{prefix}.step": np.array(self.step), f"{prefix}.failed": np.array(self.failed_refreshes)}
        for name, st in self.mats.items():
            for f in ("cov_l", "cov_r", "q_l", "q_r", "m", "v"):
                out[f"{prefix}.{name}.{f}"] = getattr(st, f)
        for name, (m, v) in self.vec.items():
            out[f"{prefix}.{name}.m"] = m
            out[f"{prefix}.{name}.v"] = v
        return out

    def load(self, arrays: dict, prefix: str = "soap") -> "SoapState":
        mats = {
            name: _Matrix(*(np.array(arrays[f"{prefix}.{name}.{f}"]) for f in ("cov_l", "cov_r", "q_l", "q_r", "m", "v")))
            for name in self.mats
        }
        vec = {name: (np.array(arrays[f"{prefix}.{name}.m"]), np.array(arrays[f"{prefix}.{name}.v"])) for name in self.vec}
        return SoapState(
            self.layout, mats, vec, int(arrays[f"{prefix}.step"]), self.beta1, self.beta2, self.eps,
            self.cov_decay, self.freq, self.max_dim, self.sweeps, self.tol, int(arrays[f"{prefix}.failed"]),
        )


def soap_step(state: SoapState, params: ParamVector, grad, lr: float, refresh: bool = True):
    """One SOAP update; returns ``(new_state, new_params)``.

    With ``refresh=False`` the bases never change, which with the initial
    identity bases reduces the update to Adam.
    """
    g_flat = grad.numpy() if isinstance(grad, ParamVector) else np.asarray(grad, dtype=np.float64)
    check_finite(g_flat)
    step = state.step + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    theta = params.numpy().copy()
    mats, vec = {}, {}
    for seg in state.layout:
        sl = slice(seg.offset, seg.offset + seg.size)
        g = g_flat[sl].reshape(seg.shape)
        if seg.name in state.mats:
            st = state.mats[seg.name]
            gr = st.q_l.T @ g @ st.q_r
            m, v, d = adam_direction(st.m, st.v, gr, step, b1, b2, eps)
            upd = st.q_l @ d @ st.q_r.T
            c = state.cov_decay
            mats[seg.name] = _Matrix(c * st.cov_l + (1 - c) * (g @ g.T), c * st.cov_r + (1 - c) * (g.T @ g), st.q_l, st.q_r, m, v)
        else:
            m0, v0 = state.vec[seg.name]
            m, v, upd = adam_direction(m0, v0, g, step, b1, b2, eps)
            vec[seg.name] = (m, v)
        theta[sl] -= lr * upd.reshape(-1)

    new = SoapState(
        state.layout, mats, vec, step, b1, b2, eps, state.cov_decay, state.freq,
        state.max_dim, state.sweeps, state.tol, state.failed_refreshes,
    )
    if refresh and step % state.freq == 0:
        _refresh(new)
    return new, params.with_values(theta)


def _refresh(state: SoapState) -> None:
    """Recompute eigenbases (warm-started, batched by size) and carry the first moment over."""
    groups = defaultdict(list)
    for name, st in state.mats.items():
        groups[st.cov_l.shape[0]].append((name, "l"))
        groups[st.cov_r.shape[0]].append((name, "r"))
    new_q: dict[tuple[str, str], np.ndarray] = {}
    for n, members in groups.items():
        covs = np.stack([getattr(state.mats[nm], f"cov_{side}") for nm, side in members])
        q0 = np.stack([getattr(state.mats[nm], f"q_{side}") for nm, side in members])
        _, q, ok = jacobi_eigh(covs, q0, max_sweeps=state.sweeps, tol=state.tol)
        for i, key in enumerate(members):
            if ok[i]:
                new_q[key] = q[i]
            else:
                state.failed_refreshes += 1
                log.warning("eigensolver did not converge for %s (%s side); keeping previous basis", *key)
    for name, st in state.mats.items():
        ql, qr = new_q.get((name, "l"), st.q_l), new_q.get((name, "r"), st.q_r)
        # rotate m from the old basis to the new one; v is kept as is
        st.m = (ql.T @ st.q_l) @ st.m @ (st.q_r.T @ qr)
        st.q_l, st.q_r = ql, qr
