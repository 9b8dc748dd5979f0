"""Truncated Taylor arithmetic ("jets") for higher-order input derivatives.

A jet of order K carries the Taylor coefficients ``c[0..K]`` of a function
along one seeded input direction, ``c[k] = f^(k)/k!``. Coefficients may be
numpy arrays or tape variables, so the same arithmetic serves plain
evaluation and parameter gradients of derivative-dependent losses.

Coefficient arrays broadcast against each other. The model code relies on
this: a jet whose value part has a leading axis of length 1 and whose higher
coefficients have a leading axis of length A represents A univariate jets
(one per seeded coordinate axis) that share one value computation.
"""

from __future__ import annotations

from math import factorial
from typing import Callable, Sequence

import numpy as np

from . import ops
from .tape import Var

MAX_ORDER = 4


class JetDomainError(ValueError):
    """Raised when a jet primitive is evaluated outside its domain."""


class Jet:
    __slots__ = ("coeffs",)
    __array_ufunc__ = None

    def __init__(self, coeffs: Sequence) -> None:
        if len(coeffs) == 0:
            raise ValueError("a jet needs at least one coefficient")
        self.coeffs = tuple(coeffs)

    @classmethod
    def seed(cls, value, order: int, direction=1.0) -> "Jet":
        """Jet of the identity map at ``value`` along ``direction``."""
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"jet order must be in [0, {MAX_ORDER}]")
        value = np.asarray(value, dtype=np.float64) if not isinstance(value, Var) else value
        zero = np.zeros_like(ops.value_of(value) * np.asarray(direction, dtype=np.float64))
        coeffs = [value] + ([direction + zero] if order >= 1 else []) + [zero] * max(order - 1, 0)
        return cls(coeffs)

    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        zero = np.zeros_like(ops.value_of(value), dtype=np.float64)
        return cls([value] + [zero] * order)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def value(self):
        return self.coeffs[0]

    def derivatives(self) -> list:
        """True derivatives ``k! c[k]`` for k = 0..order."""
        return [c * factorial(k) if k > 1 else c for k, c in enumerate(self.coeffs)]

    def __repr__(self) -> str:
        return f"Jet({[ops.value_of(c) for c in self.coeffs]!r})"

    def __len__(self) -> int:
        return len(self.coeffs)

    def _check(self, other: "Jet") -> None:
        if other.order != self.order:
            raise ValueError(f"jet orders differ: {self.order} vs {other.order}")

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet([a + b for a, b in zip(self.coeffs, other.coeffs)])
        return Jet((self.coeffs[0] + other,) + self.coeffs[1:])

    __radd__ = __add__

    def __neg__(self):
        return Jet([-c for c in self.coeffs])

    def __sub__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet([a - b for a, b in zip(self.coeffs, other.coeffs)])
        return Jet((self.coeffs[0] - other,) + self.coeffs[1:])

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet([c * other for c in self.coeffs])
        self._check(other)
        a, b = self.coeffs, other.coeffs
        out = []
        for k in range(len(a)):
            acc = a[0] * b[k]
            for j in range(1, k + 1):
                acc = acc + a[j] * b[k - j]
            out.append(acc)
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet([c / other for c in self.coeffs])
        self._check(other)
        b = other.coeffs
        if np.any(ops.value_of(b[0]) == 0):
            raise JetDomainError("division by a jet with zero value part")
        a = self.coeffs
        q = []
        for k in range(len(a)):
            acc = a[k]
            for j in range(1, k + 1):
                acc = acc - b[j] * q[k - j]
            q.append(acc / b[0])
        return Jet(q)

    def __rtruediv__(self, other):
        return Jet.constant(other, self.order) / self

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            result = Jet.constant(np.ones_like(ops.value_of(self.coeffs[0])), self.order)
            base, n = self, int(p)
            while n:
                if n & 1:
                    result = result * base
                n >>= 1
                if n:
                    base = base * base
            return result
        if isinstance(p, (int, np.integer)):
            return 1.0 / (self ** (-int(p)))
        return power(self, float(p))

    def __matmul__(self, w):
        return Jet([c @ w for c in self.coeffs])

    def __getitem__(self, idx):
        return Jet([c[idx] for c in self.coeffs])


def exp(x: Jet) -> Jet:
    c = x.coeffs
    e = [ops.exp(c[0])]
    for k in range(1, len(c)):
        acc = c[1] * e[k - 1]
        for j in range(2, k + 1):
            acc = acc + (j * c[j]) * e[k - j]
        e.append(acc * (1.0 / k))
    return Jet(e)


def _sincos(x: Jet) -> tuple[Jet, Jet]:
    c = x.coeffs
    s, co = [ops.sin(c[0])], [ops.cos(c[0])]
    for k in range(1, len(c)):
        sa = c[1] * co[k - 1]
        ca = c[1] * s[k - 1]
        for j in range(2, k + 1):
            sa = sa + (j * c[j]) * co[k - j]
            ca = ca + (j * c[j]) * s[k - j]
        s.append(sa * (1.0 / k))
        co.append(ca * (-1.0 / k))
    return Jet(s), Jet(co)


def sin(x: Jet) -> Jet:
    return _sincos(x)[0]


def cos(x: Jet) -> Jet:
    return _sincos(x)[1]


def sincos(x):
    if isinstance(x, Jet):
        return _sincos(x)
    return ops.sin(x), ops.cos(x)


def tanh(x: Jet) -> Jet:
    c = x.coeffs
    y0 = ops.tanh(c[0])
    y, w = [y0], [1.0 - y0 * y0]
    for k in range(1, len(c)):
        acc = c[1] * w[k - 1]
        for j in range(2, k + 1):
            acc = acc + (j * c[j]) * w[k - j]
        y.append(acc * (1.0 / k) if k > 1 else acc)
        if k < len(c) - 1:
            w.append(-_square_coeff(y, k))
    return Jet(y)


def _square_coeff(y, k):
    """k-th coefficient of y*y."""
    acc = None
    for j in range(0, k // 2 + 1):
        term = y[j] * y[k - j]
        if 2 * j != k:
            term = term * 2.0
        acc = term if acc is None else acc + term
    return acc


def log(x: Jet) -> Jet:
    c = x.coeffs
    if np.any(ops.value_of(c[0]) <= 0):
        raise JetDomainError("log of a jet with nonpositive value part")
    out = [ops.log(c[0])]
    for k in range(1, len(c)):
        acc = c[k]
        for j in range(1, k):
            acc = acc - (j / k) * out[j] * c[k - j]
        out.append(acc / c[0])
    return Jet(out)


def power(x: Jet, r: float) -> Jet:
    c = x.coeffs
    if np.any(ops.value_of(c[0]) <= 0):
        raise JetDomainError("real power of a jet with nonpositive value part")
    p = [c[0] ** r if not isinstance(c[0], Var) else ops.exp(r * ops.log(c[0]))]
    for k in range(1, len(c)):
        acc = ((r + 1.0) * 1 - k) * c[1] * p[k - 1]
        for j in range(2, k + 1):
            acc = acc + ((r + 1.0) * j - k) * c[j] * p[k - j]
        p.append(acc / (k * c[0]))
    return Jet(p)


def sqrt(x: Jet) -> Jet:
    return power(x, 0.5)


def concatenate(jets: Sequence[Jet], axis: int = -1) -> Jet:
    """Coefficient-wise concatenation; leading broadcast axes are expanded."""
    order = jets[0].order
    if any(j.order != order for j in jets):
        raise ValueError("cannot concatenate jets of different order")
    out = []
    for k in range(order + 1):
        cs = [j.coeffs[k] for j in jets]
        shapes = [np.shape(ops.value_of(c)) for c in cs]
        nd = max(len(s) for s in shapes)
        ax = axis % nd
        padded = [(1,) * (nd - len(s)) + s for s in shapes]
        common = list(np.broadcast_shapes(*[s[:ax] + (1,) + s[ax + 1 :] for s in padded]))
        parts = []
        for c, s in zip(cs, padded):
            target = common.copy()
            target[ax] = s[ax]
            parts.append(ops.broadcast_to(c.reshape(s) if np.shape(ops.value_of(c)) != s else c, tuple(target)))
        out.append(ops.concatenate(parts, axis=ax))
    return Jet(out)


def seed_axes(points: np.ndarray, orders: dict[int, int]) -> tuple[tuple[Jet, ...], dict[int, int], int]:
    """Seed one jet per coordinate for all derivative axes at once.

    ``orders`` maps a coordinate index to the highest pure derivative needed
    along it. Returns the coordinate jets, the row of the stacked leading axis
    that carries each seeded coordinate, and the common jet order.
    """
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    axes = sorted(a for a, k in orders.items() if k > 0)
    order = max([orders[a] for a in axes], default=0)
    rows = {a: i for i, a in enumerate(axes)}
    nrows = max(len(axes), 1)
    coords = []
    for a in range(d):
        value = points[:, a][None, :]
        higher = []
        if order >= 1:
            direction = np.zeros((nrows, n))
            if a in rows:
                direction[rows[a]] = 1.0
            higher.append(direction)
            higher.extend(np.zeros((nrows, n)) for _ in range(order - 1))
        coords.append(Jet([value] + higher))
    return tuple(coords), rows, order


def directional_derivative(
    net_forward: Callable,
    params,
    point: Sequence[float],
    axis: int,
    order: int,
) -> list[float]:
    """Derivatives of orders 0..order of ``net_forward`` along one axis."""
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [0, {MAX_ORDER}]")
    if not 0 <= axis < len(point):
        raise ValueError(f"axis {axis} out of range for a {len(point)}-d point")
    coords = tuple(
        Jet.seed(float(p), order) if i == axis else Jet.constant(float(p), order)
        for i, p in enumerate(point)
    )
    out = net_forward(params, coords)
    if isinstance(out, (tuple, list)):
        out = out[0]
    return [float(np.squeeze(ops.value_of(d))) for d in out.derivatives()]
