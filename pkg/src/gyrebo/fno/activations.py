"""Elementwise activations with analytic derivatives.

All functions preserve the input dtype. ``prelu`` carries a learnable
scalar slope per layer, so its forward/backward take the slope explicitly
and backward also returns the slope gradient. ``threshold`` is fixed at
(threshold=0, value=0) and coincides with relu; ``leaky_relu`` uses the
usual 0.01 slope.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf

_SELU_ALPHA = 1.6732632423543772
_SELU_LAMBDA = 1.0507009873554805
_SOFTSHRINK_LAMBDA = 0.5
_LEAKY_SLOPE = 0.01
_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def _sigmoid(x):
    # exp of -|x| never overflows, and the two stable branches share it.
    e = np.exp(-np.abs(x))
    d = 1.0 + e
    return np.where(x >= 0, 1.0 / d, e / d)


def _softplus(x):
    return np.logaddexp(0.0, x)


# name -> (forward, derivative); derivative takes the pre-activation input.
_TABLE = {
    "relu": (lambda x: np.maximum(x, 0.0),
             lambda x: (x > 0).astype(x.dtype)),
    "leaky_relu": (lambda x: np.where(x > 0, x, _LEAKY_SLOPE * x),
                   lambda x: np.where(x > 0, 1.0, _LEAKY_SLOPE)),
    "relu6": (lambda x: np.clip(x, 0.0, 6.0),
              lambda x: ((x > 0) & (x < 6)).astype(x.dtype)),
    "elu": (lambda x: np.where(x > 0, x, np.expm1(np.minimum(x, 0.0))),
            lambda x: np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))),
    "selu": (lambda x: _SELU_LAMBDA * np.where(
                 x > 0, x, _SELU_ALPHA * np.expm1(np.minimum(x, 0.0))),
             lambda x: _SELU_LAMBDA * np.where(
                 x > 0, 1.0, _SELU_ALPHA * np.exp(np.minimum(x, 0.0)))),
    "silu": (lambda x: x * _sigmoid(x),
             lambda x: (lambda s: s * (1.0 + x * (1.0 - s)))(_sigmoid(x))),
    "gelu": (lambda x: 0.5 * x * (1.0 + erf(x / _SQRT2)),
             lambda x: 0.5 * (1.0 + erf(x / _SQRT2))
                 + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)),
    "sigmoid": (_sigmoid,
                lambda x: (lambda s: s * (1.0 - s))(_sigmoid(x))),
    "logsigmoid": (lambda x: -_softplus(-x),
                   lambda x: _sigmoid(-x)),
    "softplus": (_softplus, _sigmoid),
    "softshrink": (lambda x: np.where(
                       x > _SOFTSHRINK_LAMBDA, x - _SOFTSHRINK_LAMBDA,
                       np.where(x < -_SOFTSHRINK_LAMBDA, x + _SOFTSHRINK_LAMBDA, 0.0)),
                   lambda x: (np.abs(x) > _SOFTSHRINK_LAMBDA).astype(x.dtype)),
    "softsign": (lambda x: x / (1.0 + np.abs(x)),
                 lambda x: 1.0 / (1.0 + np.abs(x)) ** 2),
    "tanh": (np.tanh,
             lambda x: 1.0 - np.tanh(x) ** 2),
    "tanhshrink": (lambda x: x - np.tanh(x),
                   lambda x: np.tanh(x) ** 2),
    "threshold": (lambda x: np.where(x > 0, x, 0.0),
                  lambda x: (x > 0).astype(x.dtype)),
    "hardtanh": (lambda x: np.clip(x, -1.0, 1.0),
                 lambda x: ((x > -1) & (x < 1)).astype(x.dtype)),
    "identity": (lambda x: x,
                 lambda x: np.ones_like(x)),
    "squareplus": (lambda x: 0.5 * (x + np.sqrt(x * x + 4.0)),
                   lambda x: 0.5 * (1.0 + x / np.sqrt(x * x + 4.0))),
}

ACTIVATION_NAMES = tuple(_TABLE) + ("prelu",)


class ActivationError(ValueError):
    pass


def needs_slope(name: str) -> bool:
    return name == "prelu"


def activation(name: str, x: np.ndarray, slope: float | None = None) -> np.ndarray:
    if name == "prelu":
        if slope is None:
            raise ActivationError("prelu requires a slope")
        return np.where(x > 0, x, slope * x)
    try:
        fwd, _ = _TABLE[name]
    except KeyError:
        raise ActivationError(f"unknown activation {name!r}") from None
    return fwd(x)


def activation_grad(name: str, x: np.ndarray, upstream: np.ndarray,
                    slope: float | None = None):
    """Gradient wrt the input; for prelu also returns the slope gradient."""
    if name == "prelu":
        if slope is None:
            raise ActivationError("prelu requires a slope")
        dx = upstream * np.where(x > 0, 1.0, slope)
        dslope = float(np.sum(upstream * np.where(x > 0, 0.0, x)))
        return dx, dslope
    try:
        _, deriv = _TABLE[name]
    except KeyError:
        raise ActivationError(f"unknown activation {name!r}") from None
    return upstream * deriv(x), None
