"""Expression grammar and scalar-field derivative tests."""

import numpy as np
import pytest

from gaplab.errors import UsageError
from gaplab.fields import ScalarField, parse_expression, serialize_expression

import oracles


def test_parse_and_evaluate_basic_grammar():
    f = ScalarField.from_expression("x1^2 + 3*x2 - 1/2")
    pts = np.array([[1.0, 2.0], [-0.5, 0.0]])
    assert np.allclose(f.fn(pts), [1.0 + 6.0 - 0.5, 0.25 - 0.5])


def test_parse_functions_and_precedence():
    f = ScalarField.from_expression("exp(-(x1^2 + x2^2)) + log(2)")
    x = np.array([[0.3, -0.4]])
    assert np.allclose(f.fn(x), np.exp(-0.25) + np.log(2.0))
    # '^' binds tighter than unary minus on the exponent side: -x1^2 = -(x1^2)
    g = ScalarField.from_expression("-x1^2")
    assert np.allclose(g.fn(np.array([[2.0, 0.0]])), -4.0)


def test_parse_double_star_alias():
    f = ScalarField.from_expression("x1**3")
    assert np.allclose(f.fn(np.array([[2.0, 1.0]])), 8.0)


def test_parse_rejects_garbage():
    with pytest.raises(UsageError):
        parse_expression("x1 + $")
    with pytest.raises(UsageError):
        parse_expression("sin(x1)")      # outside the grammar on purpose
    with pytest.raises(UsageError):
        parse_expression("x1 + (x2")


def test_serialize_round_trip():
    for text in ["x1^2 + 3*x2", "exp(2*x1)*log(1 + x2^2)", "4/(1 - x1^2 - x2^2)^2"]:
        expr = parse_expression(text)
        back = parse_expression(serialize_expression(expr))
        assert (expr - back).simplify() == 0


def test_symbolic_derivatives():
    f = ScalarField.from_expression("x1^3*x2 + exp(x2)")
    pts = np.array([[0.5, -0.2], [1.0, 0.3]])
    g = f.grad(pts)
    h = f.hess(pts)
    for i, (x1, x2) in enumerate(pts):
        assert np.allclose(g[i], [3 * x1 ** 2 * x2, x1 ** 3 + np.exp(x2)], atol=1e-12)
        assert np.allclose(h[i], [6 * x1 * x2, 3 * x1 ** 2, np.exp(x2)], atol=1e-12)
    assert np.allclose(f.laplacian(pts), 6 * pts[:, 0] * pts[:, 1] + np.exp(pts[:, 1]))


def test_callable_fallback_uses_finite_differences():
    f = ScalarField.from_callable(lambda p: np.cos(p[..., 0]) * p[..., 1] ** 2)
    x = np.array([[0.4, 1.3]])
    g_ref = oracles.fd_grad(lambda p: np.cos(p[0]) * p[1] ** 2, x[0])
    assert np.allclose(f.grad(x)[0], g_ref, atol=1e-7)
    h = f.hess(x)[0]
    h_ref = oracles.fd_hess(lambda p: np.cos(p[0]) * p[1] ** 2, x[0])
    assert np.allclose(h, [h_ref[0, 0], h_ref[0, 1], h_ref[1, 1]], atol=1e-4)


def test_field_algebra_keeps_derivatives_exact():
    a = ScalarField.from_expression("x1^2")
    b = ScalarField.from_expression("exp(x2)")
    prod = a * b
    pts = np.array([[0.7, 0.2]])
    assert np.allclose(prod.grad(pts)[0],
                       [2 * 0.7 * np.exp(0.2), 0.49 * np.exp(0.2)], atol=1e-13)
    assert np.allclose(prod.hess(pts)[0],
                       [2 * np.exp(0.2), 2 * 0.7 * np.exp(0.2), 0.49 * np.exp(0.2)],
                       atol=1e-13)
    combo = a + 2.0 * b - 1.5
    assert np.allclose(combo.fn(pts), 0.49 + 2 * np.exp(0.2) - 1.5)


def test_constant_field():
    c = ScalarField.constant(3.25)
    pts = np.random.default_rng(0).normal(size=(5, 2))
    assert np.allclose(c.fn(pts), 3.25)
    assert np.allclose(c.grad(pts), 0.0)
    assert np.allclose(c.hess(pts), 0.0)


def test_scalar_value_accepts_single_point():
    f = ScalarField.from_expression("x1 + 10*x2")
    assert f.value([0.5, 0.25]) == pytest.approx(3.0)
