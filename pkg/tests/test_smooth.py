import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from ellipmoment.smooth import (
    SmoothFunction,
    constant,
    fd_gradient,
    fd_hessian,
    from_spec,
    gaussian_bump,
    linear_combination,
    monomial,
    permuted,
    power_times,
    sin_sum,
)

points = hnp.arrays(np.float64, (5, 3), elements=st.floats(-2, 2))


def test_constant():
    c = constant(2.0)
    x = np.ones((4, 3))
    assert c.is_constant and c.constant_value == 2.0
    np.testing.assert_array_equal(c.value(x), 2.0)
    np.testing.assert_array_equal(c.gradient(x), 0.0)
    assert c.hessian(x).shape == (4, 3, 3)


def test_monomial_values():
    f = monomial((2, 1, 0))
    x = np.array([[3.0, 2.0, 7.0]])
    assert f.value(x)[0] == 18.0
    np.testing.assert_array_equal(f.gradient(x)[0], [12.0, 9.0, 0.0])
    np.testing.assert_array_equal(f.hessian(x)[0], [[4.0, 6.0, 0.0], [6.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def test_monomial_zero_is_constant():
    assert monomial((0, 0)).is_constant


def test_monomial_negative():
    with pytest.raises(ValueError):
        monomial((1, -1))


@settings(max_examples=30, deadline=None)
@given(points, st.tuples(*[st.integers(0, 3)] * 3))
def test_monomial_derivatives(x, e):
    f = monomial(e)
    scale = max(1.0, float(np.max(np.abs(f.value(x)))))
    np.testing.assert_allclose(f.gradient(x), fd_gradient(f.eval, x), atol=1e-5 * scale * 10)
    np.testing.assert_allclose(f.hessian(x), fd_hessian(f.eval, x), atol=1e-3 * scale * 10)


@settings(max_examples=30, deadline=None)
@given(points, st.integers(0, 2), st.integers(0, 4))
def test_power_times_matches_monomial(x, k, m):
    base = monomial((1, 2, 0))
    e = [1, 2, 0]
    e[k] += m
    ref = monomial(e)
    g = power_times(base, k, m)
    np.testing.assert_allclose(g.value(x), ref.value(x), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(g.gradient(x), ref.gradient(x), rtol=1e-12, atol=1e-10)
    np.testing.assert_allclose(g.hessian(x), ref.hessian(x), rtol=1e-12, atol=1e-10)


def test_power_times_with_zero_coordinate():
    g = power_times(gaussian_bump(), 0, 1)
    x = np.zeros((1, 2))
    assert np.all(np.isfinite(g.hessian(x)))


def test_permuted():
    f = monomial((3, 1, 0))
    g = permuted(f, [1, 0, 2])
    y = np.array([[2.0, 5.0, 1.0]])
    assert g.value(y)[0] == 5.0**3 * 2.0
    np.testing.assert_allclose(g.gradient(y), monomial((1, 3, 0)).gradient(y))
    np.testing.assert_allclose(g.hessian(y), monomial((1, 3, 0)).hessian(y))
    with pytest.raises(ValueError):
        permuted(f, [1, 2, 0])


def test_linear_combination():
    f = linear_combination([(2.0, monomial((1, 0))), (-1.0, constant(3.0))])
    x = np.array([[4.0, 1.0]])
    assert f.value(x)[0] == 5.0
    np.testing.assert_array_equal(f.gradient(x)[0], [2.0, 0.0])
    assert not f.is_constant
    assert linear_combination([(2.0, constant(1.0)), (1.0, constant(3.0))]).constant_value == 5.0


def test_fd_fallback():
    f = SmoothFunction(lambda x: np.sin(x[:, 0]) * x[:, 1])
    x = np.array([[0.4, 2.0]])
    np.testing.assert_allclose(f.gradient(x)[0], [np.cos(0.4) * 2.0, np.sin(0.4)], rtol=1e-8)
    np.testing.assert_allclose(f.hessian(x)[0], [[-np.sin(0.4) * 2.0, np.cos(0.4)], [np.cos(0.4), 0.0]], atol=1e-6)


def test_validate_rejects_wrong_derivative():
    f = SmoothFunction(lambda x: x[:, 0] ** 2, lambda x: 3 * x)
    with pytest.raises(ValueError, match="disagree"):
        f.validate(2)


def test_validate_once_per_dimension():
    calls = []

    def grad(x):
        calls.append(1)
        return np.zeros_like(x)

    f = SmoothFunction(lambda x: np.zeros(len(x)), grad)
    f.validate(2)
    f.validate(2)
    assert len(calls) == 1


@pytest.mark.parametrize("f", [gaussian_bump(3.0), sin_sum((0, 2))], ids=["bump", "sin"])
def test_named_functions_validate(f):
    f.validate(3)


@pytest.mark.parametrize("spec,value", [({"constant": 2}, 2.0), ({"monomial": [1, 2]}, 4.0),
                                        ({"gaussian_bump": 4}, np.exp(-5 / 4)), ({"sin_sum": [0, 1]}, np.sin(3.0))])
def test_from_spec(spec, value):
    assert from_spec(spec).value(np.array([[1.0, 2.0]]))[0] == pytest.approx(value)


@pytest.mark.parametrize("spec", [{"bogus": 1}, {}, {"constant": 1, "monomial": [1]}, [1]])
def test_from_spec_rejects(spec):
    with pytest.raises(ValueError):
        from_spec(spec)
