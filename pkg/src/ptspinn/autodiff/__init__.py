"""Nested automatic differentiation: forward jets inside a reverse-mode tape."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import fused, ops
from .jet import Jet, JetDomainError, directional_derivative, seed_axes
from .params import Layout, ParamVector, Segment
from .tape import Tape, Var

__all__ = [
    "Jet",
    "JetDomainError",
    "Layout",
    "ParamVector",
    "Segment",
    "Tape",
    "Var",
    "directional_derivative",
    "ops",
    "param_gradient",
    "seed_axes",
    "value_and_grad",
    "value_and_term_grads",
]


def value_and_grad(loss: Callable, params: ParamVector, has_aux: bool = False):
    """Evaluate ``loss(params)`` on a fresh tape and return its value and gradient.

    With ``has_aux`` the loss returns ``(scalar, aux)``; ``aux`` is passed back
    with tape variables replaced by their values.
    """
    flat = params.numpy()
    with Tape() as tape:
        leaves = {s.name: tape.leaf(flat[s.offset : s.offset + s.size].reshape(s.shape)) for s in params.layout}
        out = loss(ParamVector(flat, params.layout, leaves))
        aux = None
        if has_aux:
            out, aux = out
            aux = _detach(aux)
        if isinstance(out, Var):
            grads = tape.gradient(out, list(leaves.values()))
            g = np.concatenate([gi.reshape(-1) for gi in grads])
            value = float(np.squeeze(out.value))
        else:
            g = np.zeros(params.layout.size)
            value = float(np.squeeze(out))
    grad = params.with_values(g)
    return ((value, aux), grad) if has_aux else (value, grad)


def value_and_term_grads(terms: Callable, params: ParamVector):
    """One forward pass, one reverse sweep per term.

    ``terms(params)`` returns a mapping of name to scalar; the result is
    ``(values, grads)``, both keyed by name, with grads as flat arrays.
    """
    flat = params.numpy()
    with Tape() as tape:
        leaves = {s.name: tape.leaf(flat[s.offset : s.offset + s.size].reshape(s.shape)) for s in params.layout}
        outs = terms(ParamVector(flat, params.layout, leaves))
        values, grads = {}, {}
        wrt = list(leaves.values())
        for name, out in outs.items():
            if isinstance(out, Var):
                values[name] = float(np.squeeze(out.value))
                grads[name] = np.concatenate([g.reshape(-1) for g in tape.gradient(out, wrt)])
            else:
                values[name] = float(np.squeeze(out))
                grads[name] = np.zeros(params.layout.size)
    return values, grads


def param_gradient(loss: Callable, params: ParamVector) -> ParamVector:
    """Exact reverse-mode gradient of a scalar loss of the parameters.

    Quantities passed through :func:`ops.stop_gradient` inside ``loss`` are
    recorded as constants; a loss with no path to the parameters yields zeros.
    """
    return value_and_grad(loss, params)[1]


def _detach(obj):
    if isinstance(obj, Var):
        return obj.value
    if isinstance(obj, dict):
        return {k: _detach(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_detach(v) for v in obj)
    return obj
