import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulercut.cutquad import GeometryError
from eulercut.isoparam import (InversionError, LocalInverseError, build_deformation, deform, deformation_report,
                               element_classes, identity_deformation, invert_local)
from eulercut.levelset_geom import discretize_levelset
from eulercut.mesh import build_structured


@pytest.fixture(scope="module")
def mesh():
    return build_structured(-1, -1, 1, 1, 16, 16)


def circle(x, y, t=0.0):
    return np.hypot(x - 0.03, y + 0.02) - 0.5


@pytest.fixture(scope="module")
def theta(mesh):
    return build_deformation(discretize_levelset(circle, 0.0, 3, mesh), mesh)


def test_identity_matches_affine(mesh):
    th = identity_deformation(mesh, 2)
    rng = np.random.default_rng(0)
    e = rng.integers(0, mesh.n_elements, 50)
    xi = rng.uniform(0, 0.5, (50, 2))
    x, J = th.map_points(e, xi)
    v0, A = mesh.affine()
    assert np.allclose(x, v0[e] + np.einsum("nab,nb->na", A[e], xi), atol=1e-14)
    assert np.allclose(J, A[e], atol=1e-13)


def test_vertices_fixed(mesh, theta):
    assert np.all(theta.displacement[:mesh.n_vertices] == 0)
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    e = np.repeat(np.arange(mesh.n_elements), 3)
    x, _ = theta.map_points(e, np.tile(ref, (mesh.n_elements, 1)))
    assert np.array_equal(x, mesh.vertices[mesh.triangles].reshape(-1, 2))


def test_far_barycenter_unchanged(mesh, theta):
    far = np.flatnonzero(~theta.support)
    x, _ = theta.map_points(far, np.full((len(far), 2), 1 / 3))
    assert np.allclose(x, mesh.vertices[mesh.triangles[far]].mean(axis=1), atol=1e-15)


@pytest.mark.parametrize("phi", [lambda x, y, t: 0.4 * x + 0.3 * y - 0.05, lambda x, y, t: y - 0.123])
@pytest.mark.parametrize("q", [2, 3])
def test_planar_interface_is_identity(mesh, phi, q):
    th = build_deformation(discretize_levelset(phi, 0.0, q, mesh), mesh)
    assert np.abs(th.displacement).max() < 1e-14


def test_q1_is_identity(mesh):
    th = build_deformation(discretize_levelset(circle, 0.0, 1, mesh), mesh)
    assert np.all(th.displacement == 0)


def test_interface_nodes_land_on_higher_order_levelset(mesh, theta):
    """phi_h(Theta(x)) = phi_lin(x) at Lagrange nodes of cut elements."""
    sl = theta.slice_ref
    cut = np.flatnonzero(theta.cut)
    b = theta.space.basis
    E = np.repeat(cut, b.nloc)
    xi = np.tile(b.nodes, (len(cut), 1))
    x, _ = theta.map_points(E, xi)
    lin = np.einsum("ni,ni->n", np.column_stack([1 - xi.sum(1), xi]), sl.phi_lin[mesh.triangles[E]])
    # locate x in undeformed elements of the patch: evaluate phi_h through the affine inverse of E
    Ainv = mesh.affine_inverse()[E]
    v0, _ = mesh.affine()
    y = np.einsum("nab,nb->na", Ainv, x - v0[E])
    val = np.einsum("ni,ni->n", sl.phi_h.space.basis.values(y), sl.phi_h.coeffs[sl.phi_h.space.dof_map[E]])
    # exact only before averaging shared nodes; averaged nodes agree up to O(h^{q+1})
    assert np.abs(val - lin).max() < 0.5 * mesh.h_max ** 3


@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=60, deadline=None)
def test_round_trip(seed, a, b):
    mesh = build_structured(-1, -1, 1, 1, 16, 16)
    th = _cached_theta(mesh)
    elems = np.flatnonzero(th.support)
    e = int(elems[seed % len(elems)])
    xi0 = np.array([a, b]) * (1 - 1e-9) if a + b <= 1 else np.array([1 - a, 1 - b])
    x, _ = deform(th, e, xi0, allow_outside=True)
    assert np.allclose(invert_local(th, e, x), xi0, atol=1e-10)


_THETA = {}


def _cached_theta(mesh):
    if "t" not in _THETA:
        _THETA["t"] = build_deformation(discretize_levelset(circle, 0.0, 2, mesh), mesh)
    return _THETA["t"]


def test_identity_inverse_one_step(mesh):
    th = identity_deformation(mesh, 2)
    x = mesh.vertices[mesh.triangles[5]].mean(axis=0)
    xi = th.invert([5], x[None], maxit=1)
    assert np.allclose(xi, 1 / 3, atol=1e-14)


def test_local_inverse_failure(mesh, theta):
    e = int(np.flatnonzero(theta.cut)[0])
    with pytest.raises(LocalInverseError, match="local inverse failed"):
        theta.invert([e], np.array([[1e6, -1e6]]), maxit=2)


def test_inverted_element_detected(mesh):
    sl = discretize_levelset(circle, 0.0, 2, mesh)
    th = build_deformation(sl, mesh)
    th.displacement[mesh.n_vertices:] *= 200.0 / mesh.h_max
    th._nodes = None
    with pytest.raises(InversionError, match="element inversion"):
        th.check_jacobians(6)


def test_search_failure():
    mesh = build_structured(-1, -1, 1, 1, 4, 4)
    # a wiggly level set whose zero set the quadratic cannot reach within the bracket
    sl = discretize_levelset(lambda x, y, t: np.hypot(x, y) - 0.5, 0.0, 2, mesh)
    sl.phi_h.coeffs[mesh.n_vertices:] += 5.0
    with pytest.raises(GeometryError, match="deformation search failed"):
        build_deformation(sl, mesh, c_lambda=0.05)


def test_report_stationary(mesh, theta):
    rep = deformation_report(theta, theta)
    assert rep["max_diff"] == 0 and rep["n_changed"] == 0
    assert not rep["per_element"].any()
    assert np.array_equal(element_classes(theta) == 2, theta.cut)


def test_deformation_bounds_scale():
    """|Theta - id| = O(h^2) and |D Theta - I| = O(h) for q = 2."""
    disp = []
    for n in (8, 16, 32, 64):
        mesh = build_structured(-1, -1, 1, 1, n, n)
        th = build_deformation(discretize_levelset(circle, 0.0, 2, mesh), mesh)
        disp.append(np.abs(th.displacement).max() / mesh.h_max ** 2)
    assert max(disp) / min(disp) < 3
