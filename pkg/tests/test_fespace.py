import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulercut.fespace import FEField, OrphanDofError, ScalarSpace, eval_point, evaluate, interpolate, oswald
from eulercut.mesh import build_structured


@pytest.fixture(scope="module")
def mesh8():
    return build_structured(-1, -1, 1, 1, 2, 2)


@pytest.mark.parametrize("k, n", [(1, 9), (2, 25), (3, 9 + 16 * 2 + 8), (4, 9 + 16 * 3 + 8 * 3)])
def test_dof_counts(mesh8, k, n):
    sp = ScalarSpace(mesh8, k)
    assert sp.n_dofs == n
    assert sp.nloc == (k + 1) * (k + 2) // 2
    assert len(np.unique(sp.dof_map)) == n


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_shared_dofs_have_equal_coordinates(k):
    mesh = build_structured(-1, -1, 1, 1, 3, 3)
    sp = ScalarSpace(mesh, k)
    X = sp.dof_coordinates()
    v0, A = mesh.affine()
    local = v0[:, None, :] + np.einsum("eij,nj->eni", A, sp.basis.nodes)
    assert np.allclose(X[sp.dof_map], local, atol=1e-14)


def test_interpolate_constant(mesh8):
    u = interpolate(ScalarSpace(mesh8, 3), lambda x, y: 1.0)
    assert np.all(u.coeffs == 1.0)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_polynomial_reproduced(k):
    mesh = build_structured(-1, -1, 1, 1, 3, 3)
    sp = ScalarSpace(mesh, k)
    f = lambda x, y: (1 + x - 2 * y) ** k + (k > 1) * x * y
    u = interpolate(sp, f)
    rng = np.random.default_rng(k)
    elems = rng.integers(0, mesh.n_elements, 1000)
    xi = rng.dirichlet([1, 1, 1], 1000)[:, 1:]
    v0, A = mesh.affine()
    x = v0[elems] + np.einsum("nab,nb->na", A[elems], xi)
    assert np.allclose(evaluate(u, elems, xi, gradient=False), f(x[:, 0], x[:, 1]), atol=1e-11)


def test_constant_field_outside_points(mesh8):
    u = FEField(ScalarSpace(mesh8, 2), np.full(25, 3.0))
    v, g = evaluate(u, [0, 1], [[-0.4, 1.7], [2.0, 2.0]])
    assert np.allclose(v, 3.0) and np.allclose(g, 0.0, atol=1e-12)


def test_linear_gradient(mesh8):
    u = interpolate(ScalarSpace(mesh8, 2), lambda x, y: x)
    v, g = eval_point(u, 3, [0.2, 0.3])
    assert np.allclose(g, [1.0, 0.0], atol=1e-13)
    with pytest.raises(ValueError):
        eval_point(u, 3, [0.9, 0.9])


def test_oswald_continuous_input_unchanged(mesh8):
    sp = ScalarSpace(mesh8, 2)
    c = np.random.default_rng(0).standard_normal(sp.n_dofs)
    elems = np.arange(mesh8.n_elements)
    assert np.allclose(oswald(sp, elems, c[sp.dof_map[elems]]), c)


def test_oswald_average_of_two(mesh8):
    sp = ScalarSpace(mesh8, 1)
    e = int(np.flatnonzero(mesh8.edge_elements[:, 1] >= 0)[0])
    t1, t2 = mesh8.edge_elements[e]
    vals = np.stack([np.full(3, 1.0), np.full(3, 3.0)])
    out = oswald(sp, [t1, t2], vals)
    shared = mesh8.edges[e]
    assert np.allclose(out[shared], 2.0)


def test_orphan_dof(mesh8):
    sp = ScalarSpace(mesh8, 1)
    with pytest.raises(OrphanDofError, match="orphan dof"):
        oswald(sp, [0], np.ones((1, 3)), count_elements=[0, 5])


@given(st.lists(st.integers(0, 7), min_size=1, max_size=8, unique=True))
@settings(max_examples=30, deadline=None)
def test_oswald_is_projection(elems):
    mesh = build_structured(-1, -1, 1, 1, 2, 2)
    sp = ScalarSpace(mesh, 2)
    elems = np.array(elems)
    rng = np.random.default_rng(len(elems))
    once = oswald(sp, elems, rng.standard_normal((len(elems), sp.nloc)))
    twice = oswald(sp, elems, once[sp.dof_map[elems]])
    assert np.allclose(once, twice)
