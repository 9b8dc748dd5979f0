"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tape` records every operation applied to :class:`Var` objects while it
is active. Each record keeps the operand indices and a closure computing the
vector-Jacobian product, so a single reverse sweep yields the gradient of one
scalar output with respect to every recorded leaf.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_ACTIVE: list["Tape"] = []


@dataclass
class Node:
    op: str
    parents: tuple[int, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None


class Tape:
    """Append-only record of primitive operations.

    Use as a context manager; operations on :class:`Var` objects belonging to
    the tape are appended in execution order, so the node list is always
    topologically sorted.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.outputs: list[int] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value) -> "Var":
        self.nodes.append(Node("leaf", (), None))
        return Var(np.asarray(value, dtype=np.float64), self, len(self.nodes) - 1)

    def record(self, op: str, value, parents: Sequence["Var"], vjp) -> "Var":
        idx = tuple(p.index for p in parents)
        self.nodes.append(Node(op, idx, vjp))
        return Var(value, self, len(self.nodes) - 1)

    def gradient(self, output: "Var", wrt: Sequence["Var"]) -> list[np.ndarray]:
        """Gradient of the scalar ``output`` with respect to each of ``wrt``."""
        if output.tape is not self:
            raise ValueError("output was not recorded on this tape")
        if np.size(output.value) != 1:
            raise ValueError("gradient requires a scalar output")
        self.outputs.append(output.index)
        keep = {w.index for w in wrt if w.tape is self}
        grads: dict[int, np.ndarray] = {output.index: np.ones_like(output.value)}
        for i in range(output.index, -1, -1):
            node = self.nodes[i]
            if node.vjp is None:
                continue
            g = grads.get(i) if i in keep else grads.pop(i, None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                if parent in grads:
                    grads[parent] = grads[parent] + pg
                else:
                    grads[parent] = pg
        return [
            grads.get(w.index, np.zeros_like(w.value)) if w.tape is self else np.zeros_like(w.value)
            for w in wrt
        ]


def current_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _val(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


class Var:
    """An array-valued node on a tape."""

    __slots__ = ("value", "tape", "index")
    __array_ufunc__ = None  # numpy defers to the reflected operators

    def __init__(self, value, tape: Tape, index: int) -> None:
        self.value = value
        self.tape = tape
        self.index = index

    def __repr__(self) -> str:
        return f"Var(index={self.index}, value={self.value!r})"

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    def __len__(self):
        return len(self.value)

    # jets wrap variables, never the reverse, so defer to their operators
    def __add__(self, other):
        return NotImplemented if hasattr(other, "coeffs") else add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return NotImplemented if hasattr(other, "coeffs") else sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return NotImplemented if hasattr(other, "coeffs") else mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return NotImplemented if hasattr(other, "coeffs") else div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return vmean(self, axis=axis, keepdims=keepdims)

    @property
    def T(self):
        return transpose(self)


def _binary(op, a, b, fwd, ga, gb):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = fwd(av, bv)
    parents, fns = [], []
    if isinstance(a, Var):
        parents.append(a)
        fns.append(lambda g: _unbroadcast(ga(g, av, bv, out), np.shape(av)))
    if isinstance(b, Var):
        parents.append(b)
        fns.append(lambda g: _unbroadcast(gb(g, av, bv, out), np.shape(bv)))
    return tape.record(op, out, parents, lambda g: [f(g) for f in fns])


def add(a, b):
    return _binary("add", a, b, np.add, lambda g, *_: g, lambda g, *_: g)


def sub(a, b):
    return _binary("sub", a, b, np.subtract, lambda g, *_: g, lambda g, *_: -g)


def mul(a, b):
    return _binary(
        "mul", a, b, np.multiply, lambda g, av, bv, o: g * bv, lambda g, av, bv, o: g * av
    )


def div(a, b):
    return _binary(
        "div",
        a,
        b,
        np.divide,
        lambda g, av, bv, o: g / bv,
        lambda g, av, bv, o: -g * o / bv,
    )


def _unary(op, x, out, dfn):
    return x.tape.record(op, out, [x], lambda g: [dfn(g)])


def neg(x: Var) -> Var:
    return _unary("neg", x, -x.value, lambda g: -g)


def power(x: Var, p) -> Var:
    if isinstance(p, Var):
        raise TypeError("variable exponents are not supported")
    v = x.value
    out = v**p
    return _unary("pow", x, out, lambda g: g * p * v ** (p - 1))


def matmul(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av @ bv
    parents, fns = [], []
    if isinstance(a, Var):
        parents.append(a)
        if np.ndim(bv) == 1:
            fns.append(lambda g: np.multiply.outer(g, bv))
        else:
            fns.append(lambda g: _unbroadcast(g @ np.swapaxes(bv, -1, -2), np.shape(av)))
    if isinstance(b, Var):
        parents.append(b)

        def gb(g):
            if np.ndim(av) == 1:
                return np.multiply.outer(av, g)
            if np.ndim(bv) == 2:
                a2 = av.reshape(-1, av.shape[-1])
                return a2.T @ g.reshape(-1, g.shape[-1])
            return _unbroadcast(np.swapaxes(av, -1, -2) @ g, np.shape(bv))

        fns.append(gb)
    return tape.record("matmul", out, parents, lambda g: [f(g) for f in fns])


def tanh(x: Var) -> Var:
    y = np.tanh(x.value)
    return _unary("tanh", x, y, lambda g: g * (1.0 - y * y))


def exp(x: Var) -> Var:
    y = np.exp(x.value)
    return _unary("exp", x, y, lambda g: g * y)


def log(x: Var) -> Var:
    v = x.value
    return _unary("log", x, np.log(v), lambda g: g / v)


def sqrt(x: Var) -> Var:
    y = np.sqrt(x.value)
    return _unary("sqrt", x, y, lambda g: 0.5 * g / y)


def sin(x: Var) -> Var:
    v = x.value
    return _unary("sin", x, np.sin(v), lambda g: g * np.cos(v))


def cos(x: Var) -> Var:
    v = x.value
    return _unary("cos", x, np.cos(v), lambda g: -g * np.sin(v))


def vsum(x: Var, axis=None, keepdims=False) -> Var:
    shape = x.shape
    out = np.sum(x.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return [np.broadcast_to(g, shape)]

    return x.tape.record("sum", out, [x], vjp)


def vmean(x: Var, axis=None, keepdims=False) -> Var:
    n = np.size(x.value) if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return vsum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(x: Var, shape) -> Var:
    old = x.shape
    return _unary("reshape", x, np.reshape(x.value, shape), lambda g: np.reshape(g, old))


def transpose(x: Var) -> Var:
    return _unary("transpose", x, x.value.T, lambda g: g.T)


def getitem(x: Var, idx) -> Var:
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        if _has_advanced(idx):
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return full

    return _unary("getitem", x, x.value[idx], vjp)


def _has_advanced(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concatenate(xs: Sequence, axis: int = 0) -> Var:
    tape = _tape_of(*xs)
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    sizes = np.cumsum([np.shape(v)[axis] for v in vals])[:-1]
    parents = [x for x in xs if isinstance(x, Var)]
    mask = [isinstance(x, Var) for x in xs]

    def vjp(g):
        parts = np.split(g, sizes, axis=axis)
        return [p for p, m in zip(parts, mask) if m]

    return tape.record("concatenate", out, parents, vjp)


def broadcast_to(x: Var, shape) -> Var:
    old = x.shape
    return _unary(
        "broadcast", x, np.broadcast_to(x.value, shape), lambda g: _unbroadcast(g, old)
    )
