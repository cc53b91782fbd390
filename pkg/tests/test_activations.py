import numpy as np
import pytest

from gyrebo.fno.activations import (
    ACTIVATION_NAMES, ActivationError, activation, activation_grad, needs_slope,
)

# Points where each activation is non-smooth; FD samples stay clear of these.
KINKS = {
    "relu": [0.0], "leaky_relu": [0.0], "relu6": [0.0, 6.0], "prelu": [0.0],
    "softshrink": [-0.5, 0.5], "threshold": [0.0], "hardtanh": [-1.0, 1.0],
}


def test_activation_count():
    assert len(ACTIVATION_NAMES) == 19


def test_relu_values():
    assert activation("relu", np.array([-1.0]))[0] == 0.0
    assert activation("relu", np.array([2.0]))[0] == 2.0


def test_identity_derivative():
    x = np.linspace(-3, 3, 7)
    g, _ = activation_grad("identity", x, np.ones_like(x))
    assert np.all(g == 1.0)


def test_threshold_equals_relu():
    x = np.linspace(-2, 2, 41)
    assert np.array_equal(activation("threshold", x), activation("relu", x))


def test_squareplus_formula():
    x = np.array([0.0, 1.0, -2.0])
    expected = (x + np.sqrt(x * x + 4)) / 2
    assert np.allclose(activation("squareplus", x), expected)


def test_unknown_name():
    with pytest.raises(ActivationError):
        activation("swishmax", np.zeros(1))
    with pytest.raises(ActivationError):
        activation_grad("swishmax", np.zeros(1), np.zeros(1))


def test_prelu_requires_slope():
    with pytest.raises(ActivationError):
        activation("prelu", np.zeros(1))


@pytest.mark.parametrize("name", ACTIVATION_NAMES)
def test_derivative_matches_finite_difference(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    pts = rng.uniform(-4, 4, size=64)
    for kink in KINKS.get(name, []):
        pts = pts[np.abs(pts - kink) > 1e-3]
    pts = pts[:32]
    slope = 0.3 if needs_slope(name) else None
    h = 1e-6
    fp = activation(name, pts + h, slope)
    fm = activation(name, pts - h, slope)
    fd = (fp - fm) / (2 * h)
    grad, _ = activation_grad(name, pts, np.ones_like(pts), slope)
    denom = np.maximum(np.abs(fd), 1.0)
    assert np.max(np.abs(grad - fd) / denom) < 1e-6


def test_prelu_slope_gradient():
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    up = rng.normal(size=50)
    _, dslope = activation_grad("prelu", x, up, slope=0.25)
    h = 1e-7

    def f(s):
        return np.sum(up * activation("prelu", x, s))

    fd = (f(0.25 + h) - f(0.25 - h)) / (2 * h)
    assert dslope == pytest.approx(fd, rel=1e-6)
