"""Elementwise and structural functions that accept plain arrays, tape
variables, or jets interchangeably."""

from __future__ import annotations

import numpy as np

from . import tape as _t
from .tape import Var


def _jet():
    from . import jet

    return jet


def _dispatch(name, npfn):
    def fn(x):
        if isinstance(x, Var):
            return getattr(_t, name)(x)
        if isinstance(x, _jet().Jet):
            return getattr(_jet(), name)(x)
        return npfn(x)

    fn.__name__ = name
    return fn


tanh = _dispatch("tanh", np.tanh)
exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log)
sqrt = _dispatch("sqrt", np.sqrt)
sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)


def sigmoid(x):
    return 0.5 * (1.0 + tanh(0.5 * x))


def swish(x):
    return x * sigmoid(x)


def square(x):
    return x * x


def sum(x, axis=None, keepdims=False):  # noqa: A001
    if isinstance(x, Var):
        return _t.vsum(x, axis=axis, keepdims=keepdims)
    return np.sum(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    if isinstance(x, Var):
        return _t.vmean(x, axis=axis, keepdims=keepdims)
    return np.mean(x, axis=axis, keepdims=keepdims)


def concatenate(xs, axis=0):
    if any(isinstance(x, Var) for x in xs):
        return _t.concatenate(xs, axis=axis)
    return np.concatenate(xs, axis=axis)


def broadcast_to(x, shape):
    if isinstance(x, Var):
        return x if x.shape == tuple(shape) else _t.broadcast_to(x, shape)
    return np.broadcast_to(x, shape)


def stop_gradient(x):
    """Detach from the tape: the result is recorded as a constant."""
    if isinstance(x, Var):
        return x.value
    if isinstance(x, _jet().Jet):
        return _jet().Jet([stop_gradient(c) for c in x.coeffs])
    return x


def value_of(x):
    """Plain numeric value of an array, variable or jet coefficient."""
    return x.value if isinstance(x, Var) else np.asarray(x)
