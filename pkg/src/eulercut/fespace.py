"""Scalar P^k Lagrange spaces on the background mesh and its deformations.

A field is a coefficient vector paired with the deformation it lives on;
the physical basis on element T is phi_i o Theta_T^{-1}. Coefficients of
dofs outside an active set are zero (trivial extension).
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .basis import lagrange
from .mesh import BackgroundMesh


class OrphanDofError(RuntimeError):
    pass


class ScalarSpace:
    """Conforming dof numbering: vertices, then edges, then element interiors."""

    def __init__(self, mesh: BackgroundMesh, k: int):
        self.mesh = mesh
        self.basis = lagrange(k)
        self.k = k
        nv, ne, nt = mesh.n_vertices, mesh.n_edges, mesh.n_elements
        ke = k - 1
        ni = self.basis.n_interior
        self.n_dofs = nv + ne * ke + nt * ni

        cols = [mesh.triangles]
        tri = mesh.triangles
        for j in range(3):
            e = mesh.element_edges[:, j]
            forward = tri[:, j] < tri[:, (j + 1) % 3]
            local = np.arange(ke)
            idx = np.where(forward[:, None], local[None, :], (ke - 1 - local)[None, :])
            cols.append(nv + e[:, None] * ke + idx)
        cols.append(nv + ne * ke + np.arange(nt)[:, None] * ni + np.arange(ni)[None, :])
        self.dof_map = np.concatenate(cols, axis=1).astype(np.int64)

    @property
    def nloc(self) -> int:
        return self.basis.nloc

    def dof_coordinates(self) -> np.ndarray:
        """Undeformed physical coordinates of every dof."""
        v0, A = self.mesh.affine()
        xy = v0[:, None, :] + np.einsum("eij,nj->eni", A, self.basis.nodes)
        out = np.empty((self.n_dofs, 2))
        out[self.dof_map.ravel()] = xy.reshape(-1, 2)
        return out

    def dofs_of(self, elements) -> np.ndarray:
        elements = np.asarray(elements)
        if elements.dtype == bool:
            elements = np.flatnonzero(elements)
        if len(elements) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.unique(self.dof_map[elements].ravel())

    def element_count(self, elements=None) -> np.ndarray:
        """Number of (selected) elements containing each dof."""
        rows = self.dof_map if elements is None else self.dof_map[elements]
        return np.bincount(rows.ravel(), minlength=self.n_dofs)


def build_space(mesh: BackgroundMesh, k: int) -> ScalarSpace:
    return ScalarSpace(mesh, k)


@dataclass
class FEField:
    space: ScalarSpace
    coeffs: np.ndarray
    deformation: object = None      # MeshDeformation or None (identity)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError("coefficient vector does not match the space")

    def copy(self) -> "FEField":
        return FEField(self.space, self.coeffs.copy(), self.deformation)

    def restrict(self, dofs) -> "FEField":
        """Zero every coefficient outside `dofs`."""
        c = np.zeros_like(self.coeffs)
        c[dofs] = self.coeffs[dofs]
        return FEField(self.space, c, self.deformation)


def physical_points(space: ScalarSpace, deformation=None) -> np.ndarray:
    """Deformed positions of all dofs of `space`."""
    if deformation is None:
        return space.dof_coordinates()
    elems = np.repeat(np.arange(space.mesh.n_elements), space.nloc)
    xi = np.tile(space.basis.nodes, (space.mesh.n_elements, 1))
    x, _ = deformation.map_points(elems, xi, jacobian=False)
    out = np.empty((space.n_dofs, 2))
    out[space.dof_map.ravel()] = x
    return out


def interpolate(space: ScalarSpace, f, deformation=None, t=None) -> FEField:
    """Lagrange interpolant: coefficient i is f(Theta(x_i)).

    ``f`` is called as f(x, y) or, when ``t`` is given, f(x, y, t).
    """
    X = physical_points(space, deformation)
    vals = f(X[:, 0], X[:, 1]) if t is None else f(X[:, 0], X[:, 1], t)
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (space.n_dofs,)).copy()
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValueError(f"non-finite interpolation value at node {tuple(X[bad])}")
    return FEField(space, vals, deformation)


def evaluate(field: FEField, elems, xi, gradient: bool = True):
    """Values (and physical gradients) of a field at reference points.

    ``elems`` (n,) and ``xi`` (n, 2) are paired. Points outside the
    reference triangle evaluate the canonical polynomial extension.
    """
    elems = np.atleast_1d(np.asarray(elems, dtype=np.int64))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    basis = field.space.basis
    c = field.coeffs[field.space.dof_map[elems]]
    val = np.einsum("ni,ni->n", basis.values(xi), c)
    if not gradient:
        return val
    gref = np.einsum("nid,ni->nd", basis.gradients(xi), c)
    J = jacobians(field, elems, xi)
    grad = np.linalg.solve(np.swapaxes(J, 1, 2), gref[:, :, None])[:, :, 0]
    return val, grad


def eval_point(field: FEField, elem: int, xi, allow_outside: bool = False):
    """Single-point evaluation returning (value, physical gradient)."""
    xi = np.asarray(xi, dtype=float)
    if not allow_outside:
        lam = np.array([1 - xi[0] - xi[1], xi[0], xi[1]])
        if np.any(lam < -1e-12):
            raise ValueError("reference point outside the simplex (pass allow_outside=True)")
    v, g = evaluate(field, [elem], xi[None])
    return float(v[0]), g[0]


def jacobians(field: FEField, elems, xi) -> np.ndarray:
    if field.deformation is None:
        _, A = field.space.mesh.affine()
        return A[elems]
    _, J = field.deformation.map_points(elems, xi)
    return J


def oswald(space: ScalarSpace, elements, local_values, count_elements=None) -> np.ndarray:
    """Average element-wise nodal values into a continuous coefficient vector.

    ``local_values`` has shape (len(elements), nloc). Each dof receives the
    arithmetic mean over the supplied elements containing it. Dofs touched
    by no supplied element are zero; a dof listed in ``count_elements`` but
    not reached raises OrphanDofError.
    """
    elements = np.asarray(elements, dtype=np.int64)
    dofs = space.dof_map[elements].ravel()
    total = np.bincount(dofs, weights=np.asarray(local_values, float).ravel(),
                        minlength=space.n_dofs)
    count = np.bincount(dofs, minlength=space.n_dofs)
    if count_elements is not None:
        need = space.dofs_of(count_elements)
        if np.any(count[need] == 0):
            raise OrphanDofError(f"orphan dof {int(need[count[need] == 0][0])}")
    out = np.zeros(space.n_dofs)
    hit = count > 0
    out[hit] = total[hit] / count[hit]
    return out
