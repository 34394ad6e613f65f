import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulercut.basis import lagrange
from oracles import monomial_values

ORDERS = [1, 2, 3, 4]


@pytest.mark.parametrize("k", ORDERS)
def test_nodal_kronecker(k):
    b = lagrange(k)
    assert b.nloc == (k + 1) * (k + 2) // 2
    assert np.allclose(b.values(b.nodes), np.eye(b.nloc), atol=1e-13)


@pytest.mark.parametrize("k", ORDERS)
def test_unsupported_order_rejected(k):
    with pytest.raises(ValueError):
        lagrange(5 + k)


@pytest.mark.parametrize("k", ORDERS)
@given(pts=st.lists(st.tuples(st.floats(-1.5, 2.5), st.floats(-1.5, 2.5)), min_size=1, max_size=8))
@settings(max_examples=30, deadline=None)
def test_reproduces_polynomials_inside_and_outside(k, pts):
    """Interpolating a monomial basis and evaluating anywhere (also outside the simplex)
    reproduces the monomial: the extension is the polynomial itself."""
    b = lagrange(k)
    xi = np.array(pts)
    nodal = monomial_values(b.nodes, k)
    exact = monomial_values(xi, k)
    assert np.allclose(b.values(xi) @ nodal, exact, atol=1e-9 * (1 + np.abs(exact).max()))
    assert np.allclose(b.values(xi).sum(axis=1), 1.0, atol=1e-10)
    assert np.allclose(b.gradients(xi).sum(axis=1), 0.0, atol=1e-9)


@pytest.mark.parametrize("k", ORDERS)
def test_gradients_match_finite_differences(k):
    b = lagrange(k)
    xi = np.random.default_rng(k).uniform(-0.5, 1.2, (20, 2))
    e = 1e-6
    fd = np.stack([(b.values(xi + [e, 0]) - b.values(xi - [e, 0])) / (2 * e),
                   (b.values(xi + [0, e]) - b.values(xi - [0, e])) / (2 * e)], axis=2)
    assert np.allclose(b.gradients(xi), fd, atol=1e-7)
