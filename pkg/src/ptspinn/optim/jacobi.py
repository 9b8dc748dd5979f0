"""Batched parallel-ordering Jacobi eigensolver for small symmetric matrices."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class JacobiNotConverged(RuntimeError):
    pass


@lru_cache(maxsize=None)
def _rounds(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Round-robin schedule: n-1 rounds of disjoint pairs covering every (p, q) once."""
    m = n + (n % 2)
    players = list(range(m))
    out = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = (np.array(x) for x in zip(*pairs))
            out.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(out)


def _offdiag(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    off = a * (1.0 - np.eye(n))
    return np.sqrt(np.sum(off * off, axis=(-2, -1))), np.sqrt(np.sum(a * a, axis=(-2, -1)))


def jacobi_eigh(a: np.ndarray, q0: np.ndarray | None = None, max_sweeps: int = 20, tol: float = 1e-10):
    """Eigen-decompose symmetric ``a`` (shape (..., n, n)) as ``Q diag(w) Q^T``.

    ``q0`` warm-starts from a previous basis. Returns ``(w, Q, converged)``;
    ``converged`` is a boolean per matrix: off-diagonal Frobenius norm at most
    ``tol`` times the full norm. Eigenvalues are not sorted.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[-1]
    batch = a.shape[:-2]
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    if q0 is None:
        q = np.broadcast_to(np.eye(n), a.shape).copy()
    else:
        q = np.array(np.broadcast_to(q0, a.shape), dtype=np.float64)
        a = np.swapaxes(q, -1, -2) @ a @ q
    if n == 1:
        return a[..., 0, :], q, np.ones(batch, dtype=bool)
    a = a.reshape((-1, n, n))
    q = q.reshape((-1, n, n))
    rounds = _rounds(n)
    for _ in range(max_sweeps):
        off, full = _offdiag(a)
        if np.all(off <= tol * np.maximum(full, np.finfo(float).tiny)):
            break
        for p, r in rounds:
            app, arr, apr = a[:, p, p], a[:, r, r], a[:, p, r]
            small = np.abs(apr) <= 1e-300
            theta = (arr - app) / np.where(small, 1.0, 2.0 * apr)
            # t = sgn(theta) / (|theta| + sqrt(theta^2 + 1)), overflow-safe for huge theta
            at = np.abs(theta)
            big = at > 1e150
            root = np.where(big, at, np.sqrt(np.where(big, 0.0, theta * theta) + 1.0))
            t = np.where(theta < 0, -1.0, 1.0) / (at + root)
            t = np.where(small, 0.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            cc, ss = c[:, None, :], s[:, None, :]
            # columns, then rows, of A; columns of Q
            ap, ar = a[:, :, p], a[:, :, r]
            a[:, :, p], a[:, :, r] = cc * ap - ss * ar, ss * ap + cc * ar
            cr, sr = c[:, :, None], s[:, :, None]
            ap, ar = a[:, p, :], a[:, r, :]
            a[:, p, :], a[:, r, :] = cr * ap - sr * ar, sr * ap + cr * ar
            qp, qr = q[:, :, p], q[:, :, r]
            q[:, :, p], q[:, :, r] = cc * qp - ss * qr, ss * qp + cc * qr
    off, full = _offdiag(a)
    converged = (off <= tol * np.maximum(full, np.finfo(float).tiny)).reshape(batch)
    w = np.einsum("...ii->...i", a).reshape(batch + (n,))
    return w, q.reshape(batch + (n, n)), converged
