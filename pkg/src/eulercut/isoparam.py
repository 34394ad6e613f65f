"""Isoparametric mesh deformation Theta for a discrete level set.

On every node of a cut element a displacement d * G is computed, with
G the normalized element-local gradient of phi_h and d the root of

    phi_h(x + d G) = phi_lin(x),

so that the zero level of the piecewise linear level set is mapped onto
the zero level of the higher-order one. Contributions of neighbouring cut
elements are averaged; nodes not belonging to a cut element keep zero
displacement, which blends to the identity within one element layer.
Vertices are never moved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fespace import ScalarSpace
from .levelset_geom import LevelSetSlice, classify_values
from .mesh import BackgroundMesh
from .cutquad import CUT, GeometryError, simplex_rule

NEWTON_MAXIT = 50


class InversionError(GeometryError):
    pass


class LocalInverseError(GeometryError):
    pass


@dataclass
class MeshDeformation:
    space: ScalarSpace              # vector P^q space (two components share the dof map)
    displacement: np.ndarray        # (n_dofs_q, 2)
    support: np.ndarray             # bool mask of elements where Theta may differ from id
    cut: np.ndarray                 # bool mask of cut elements
    t: float = 0.0
    slice_ref: LevelSetSlice | None = None
    info: dict = field(default_factory=dict)
    _nodes: np.ndarray | None = field(default=None, repr=False)

    @property
    def mesh(self) -> BackgroundMesh:
        return self.space.mesh

    @property
    def q(self) -> int:
        return self.space.k

    @property
    def node_positions(self) -> np.ndarray:
        if self._nodes is None:
            self._nodes = self.space.dof_coordinates() + self.displacement
        return self._nodes

    def element_nodes(self, elems) -> np.ndarray:
        return self.node_positions[self.space.dof_map[elems]]

    def map_points(self, elems, xi, jacobian: bool = True):
        """Physical points (and Jacobians D(Theta o affine)) at paired (elem, xi).

        Outside the reference simplex this is the canonical polynomial
        extension of the element map.
        """
        elems = np.atleast_1d(np.asarray(elems, dtype=np.int64))
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        Xe = self.element_nodes(elems)
        basis = self.space.basis
        x = np.einsum("ni,nia->na", basis.values(xi), Xe)
        if not jacobian:
            return x, None
        J = np.einsum("nia,nib->nab", Xe, basis.gradients(xi))
        return x, J

    def invert(self, elems, x, guess=None, tol=None, maxit: int = NEWTON_MAXIT, strict: bool = True):
        """Reference coordinates of physical points x under the element maps.

        Newton's method on the (extended) polynomial map; the result may lie
        slightly outside the reference simplex. With ``strict=False`` a
        boolean convergence mask is returned as well instead of raising.
        """
        elems = np.atleast_1d(np.asarray(elems, dtype=np.int64))
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mesh = self.mesh
        if tol is None:
            tol = 1e-12 * mesh.h_max
        if guess is None:
            v0, _ = mesh.affine()
            guess = np.einsum("nab,nb->na", mesh.affine_inverse()[elems], x - v0[elems])
        xi = np.array(guess, dtype=float, copy=True)
        todo = np.arange(len(elems))
        for _ in range(maxit):
            if len(todo) == 0:
                break
            xm, J = self.map_points(elems[todo], xi[todo])
            res = xm - x[todo]
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            sing = det == 0
            if sing.any():
                J[sing] = np.eye(2)
            step = np.linalg.solve(J, res[:, :, None])[:, :, 0]
            xi[todo] -= np.clip(step, -2.0, 2.0)
            done = np.linalg.norm(res, axis=1) <= tol
            todo = todo[~done]
        converged = np.ones(len(elems), dtype=bool)
        if len(todo):
            xm, _ = self.map_points(elems[todo], xi[todo], jacobian=False)
            res = np.linalg.norm(xm - x[todo], axis=1)
            ok = res <= tol
            converged[todo[~ok]] = False
            if not strict:
                return xi, converged
            if not ok.all():
                i = todo[~ok][0]
                raise LocalInverseError(
                    f"local inverse failed on element {int(elems[i])} at x={tuple(x[i])}: "
                    f"residual {res[~ok][0]:.3e} after {maxit} iterations")
        return xi if strict else (xi, converged)

    def jacobian_ratios(self, degree: int, elems=None):
        """Per-element minimum of det D(Theta o affine) / det(affine) at quadrature points."""
        elems = np.flatnonzero(self.support) if elems is None else np.asarray(elems, dtype=np.int64)
        if len(elems) == 0:
            return elems, np.ones(0)
        rule = simplex_rule(degree)
        nq = len(rule.weights)
        E = np.repeat(elems, nq)
        xi = np.tile(rule.points, (len(elems), 1))
        _, J = self.map_points(E, xi)
        _, A = self.mesh.affine()
        ratio = np.linalg.det(J) / np.linalg.det(A[E])
        return elems, ratio.reshape(len(elems), nq).min(axis=1)

    def check_jacobians(self, degree: int) -> float:
        """Minimum Jacobian ratio over the support; raises on inversion."""
        elems, ratio = self.jacobian_ratios(degree)
        if len(ratio) == 0:
            return 1.0
        if np.any(ratio <= 0):
            raise InversionError(f"element inversion on element {int(elems[np.argmin(ratio)])}")
        return float(ratio.min())


def identity_deformation(mesh: BackgroundMesh, q: int, t: float = 0.0,
                         space: ScalarSpace | None = None) -> MeshDeformation:
    space = space or ScalarSpace(mesh, q)
    nt = mesh.n_elements
    return MeshDeformation(space, np.zeros((space.n_dofs, 2)), np.zeros(nt, bool),
                           np.zeros(nt, bool), t)


def build_deformation(slice_: LevelSetSlice, mesh: BackgroundMesh, c_lambda: float = 0.5,
                      jacobian_degree: int | None = None, repair: bool = False,
                      min_ratio: float = 0.1) -> MeshDeformation:
    """Construct Theta from the level set slice (identity for q = 1).

    With ``repair`` the displacement of non-vertex nodes of elements whose
    Jacobian ratio drops below ``min_ratio`` is halved until all elements
    pass (under-resolved geometry on coarse meshes); the number of halvings
    is stored in ``info["repairs"]``. Without it an inverted element raises.
    """
    space = slice_.phi_h.space
    q = space.k
    vals = slice_.phi_lin[mesh.triangles]
    cut = classify_values(vals) == CUT
    if q == 1 or not cut.any():
        d = identity_deformation(mesh, q, slice_.t, space)
        d.cut = cut
        d.slice_ref = slice_
        return d

    h = mesh.h_max
    tol = 1e-12 * h
    bound = c_lambda * h
    basis = space.basis
    elems = np.flatnonzero(cut)
    m, nloc = len(elems), basis.nloc
    E = np.repeat(elems, nloc)
    xi0 = np.tile(basis.nodes, (m, 1))
    coeffs = slice_.phi_h.coeffs[space.dof_map[E]]              # (m*nloc, nloc)
    lam = np.column_stack([1 - xi0.sum(axis=1), xi0])
    target = np.einsum("ni,ni->n", lam, slice_.phi_lin[mesh.triangles[E]])

    Ainv = mesh.affine_inverse()[E]
    g_ref = np.einsum("nid,ni->nd", basis.gradients(xi0), coeffs)
    g_phys = np.einsum("nba,nb->na", Ainv, g_ref)               # A^{-T} g_ref
    norm = np.linalg.norm(g_phys, axis=1)
    if np.any(norm == 0):
        raise GeometryError(f"deformation search failed on element {int(E[norm == 0][0])}: "
                            "vanishing level set gradient")
    G = g_phys / norm[:, None]
    s = np.einsum("nab,nb->na", Ainv, G)                          # reference search direction

    def f(d, idx):
        pts = xi0[idx] + d[:, None] * s[idx]
        return np.einsum("ni,ni->n", basis.values(pts), coeffs[idx]) - target[idx]

    def fprime(d, idx):
        pts = xi0[idx] + d[:, None] * s[idx]
        gr = np.einsum("nid,ni->nd", basis.gradients(pts), coeffs[idx])
        return np.einsum("nd,nd->n", gr, s[idx])

    n = len(E)
    d = np.zeros(n)
    is_vertex = np.tile(np.arange(nloc) < 3, m)
    todo = np.flatnonzero(~is_vertex)
    converged = np.zeros(n, dtype=bool)
    converged[is_vertex] = True
    active = todo.copy()
    for _ in range(NEWTON_MAXIT):
        if len(active) == 0:
            break
        fp = fprime(d[active], active)
        step = np.where(fp != 0, f(d[active], active) / np.where(fp != 0, fp, 1.0), np.inf)
        d[active] -= step
        bad = ~np.isfinite(d[active]) | (np.abs(d[active]) > bound)
        ok = (np.abs(step) <= tol) & ~bad
        converged[active[ok]] = True
        active = active[~ok & ~bad]
    failed = np.flatnonzero(~converged)
    if len(failed):
        d[failed] = _bisect(f, failed, bound, tol, E)
    d[is_vertex] = 0.0

    disp = d[:, None] * G
    disp[is_vertex] = 0.0
    dofs = space.dof_map[elems].ravel()
    total = np.zeros((space.n_dofs, 2))
    np.add.at(total, dofs, disp)
    count = np.bincount(dofs, minlength=space.n_dofs)
    hit = count > 0
    total[hit] /= count[hit, None]
    total[:mesh.n_vertices] = 0.0

    deformation = MeshDeformation(space, total, mesh.expand(cut, 1), cut, slice_.t, slice_)
    degree = jacobian_degree or 2 * q + 2
    if repair:
        interior_dofs = np.zeros(space.n_dofs, dtype=bool)
        interior_dofs[mesh.n_vertices:] = True
        for _ in range(30):
            elems, ratio = deformation.jacobian_ratios(degree)
            bad = elems[ratio < min_ratio]
            if len(bad) == 0:
                break
            dofs = np.unique(space.dof_map[bad])
            dofs = dofs[interior_dofs[dofs]]
            deformation.displacement[dofs] *= 0.5
            deformation._nodes = None
            deformation.info["repairs"] = deformation.info.get("repairs", 0) + len(bad)
    deformation.check_jacobians(degree)
    return deformation


def _bisect(f, idx, bound, tol, E):
    lo = np.full(len(idx), -bound)
    hi = np.full(len(idx), bound)
    flo = f(lo, idx)
    fhi = f(hi, idx)
    nobracket = flo * fhi > 0
    if nobracket.any():
        raise GeometryError(f"deformation search failed on element {int(E[idx[nobracket][0]])}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid, idx)
        left = flo * fm <= 0
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
        flo = np.where(left, flo, fm)
        if np.max(hi - lo) <= tol:
            break
    return 0.5 * (lo + hi)


def deform(theta: MeshDeformation, elem: int, xi, allow_outside: bool = False):
    """Physical point and Jacobian of one reference point."""
    xi = np.asarray(xi, dtype=float)
    if not allow_outside and (xi.min() < -1e-12 or xi.sum() > 1 + 1e-12):
        raise ValueError("reference point outside the simplex (pass allow_outside=True)")
    x, J = theta.map_points([elem], xi[None])
    return x[0], J[0]


def invert_local(theta: MeshDeformation, elem: int, x, guess=None):
    g = None if guess is None else np.asarray(guess, dtype=float)[None]
    return theta.invert([elem], np.asarray(x, dtype=float)[None], g)[0]


def element_classes(theta: MeshDeformation) -> np.ndarray:
    """0 undeformed, 1 transition, 2 cut."""
    cls = np.zeros(theta.mesh.n_elements, dtype=np.int64)
    cls[theta.support] = 1
    cls[theta.cut] = 2
    return cls


def deformation_report(theta_m: MeshDeformation, theta_n: MeshDeformation) -> dict:
    """Nodal differences between two deformations and cut-configuration changes."""
    if theta_m.mesh is not theta_n.mesh and theta_m.mesh.n_elements != theta_n.mesh.n_elements:
        raise ValueError("deformations live on different meshes")
    mesh = theta_n.mesh
    diff = np.linalg.norm(theta_m.displacement - theta_n.displacement, axis=1)
    per_elem = diff[theta_n.space.dof_map].max(axis=1)
    changed = element_classes(theta_m) != element_classes(theta_n)
    # an element counts if it or one of its vertex neighbours changed type
    ccc = mesh.expand(changed, 1)
    return {
        "per_element": per_elem,
        "max_diff": float(per_elem.max()) if len(per_elem) else 0.0,
        "changed": changed,
        "ccc": ccc,
        "n_changed": int(ccc.sum()),
        "max_disp_n": float(np.linalg.norm(theta_n.displacement, axis=1).max()),
    }
