"""Matrices and vectors of one time step on the active set.

All volume integrals run over the deformed discrete domain (NEG part of the
linear level set mapped through Theta). Local contributions are formed per
quadrature point, summed per element (or facet patch) and scattered into
a COO matrix, which is finally restricted to the active dofs.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fespace import FEField, ScalarSpace
from .levelset_geom import ActiveSlice, LevelSetSlice
from .cutquad import PointSet, interface_points, simplex_rule, volume_points

log = logging.getLogger(__name__)

ANALYSIS, EXPERIMENT = "ANALYSIS", "EXPERIMENT"

_BDF = {
    1: (1.0, (-1.0,)),
    2: (1.5, (-2.0, 0.5)),
    3: (11.0 / 6.0, (-3.0, 1.5, -1.0 / 3.0)),
}


def bdf_stencil(r: int, dt: float = 1.0):
    """(lead, history coefficients newest first), both already divided by dt."""
    if r not in _BDF:
        raise ValueError(f"unsupported BDF order {r}; supported: 1, 2, 3")
    lead, hist = _BDF[r]
    return lead / dt, np.array(hist) / dt


@dataclass
class SchemeParams:
    nu: float = 1.0
    velocity: Callable | None = None        # (x, y, t) -> (n, 2)
    div_velocity: Callable | None = None    # (x, y, t) -> (n,)
    source: Callable | None = None          # (x, y, t) -> (n,)
    r: int = 2
    delta: float = 0.0
    c_gamma: float = 0.1
    form: str = EXPERIMENT
    degree: int | None = None               # volume / interface quadrature exactness
    gp_degree: int | None = None            # ghost-penalty quadrature exactness
    k_override: int | None = None           # fixed path length instead of the measured one
    penalty_h: float | None = None          # h in the h^-2 penalty scaling

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.r not in _BDF:
            raise ValueError(f"unsupported BDF order {self.r}; supported: 1, 2, 3")
        if self.form not in (ANALYSIS, EXPERIMENT):
            raise ValueError(f"unknown form variant {self.form!r}")

    def volume_degree(self, k: int) -> int:
        return self.degree if self.degree is not None else 2 * k + 2

    def ghost_degree(self, k: int) -> int:
        return self.gp_degree if self.gp_degree is not None else 2 * k + 2

    def check_delta(self, dt: float, w_sup: float):
        if self.delta < dt * w_sup * (1 - 1e-12):
            raise ValueError(f"delta={self.delta:g} violates delta >= dt*|w|_inf = {dt * w_sup:g}")

    def check_timestep(self, dt: float, w_sup: float, divw_sup: float, trace_const: float = 1.0) -> float:
        """Warn when dt exceeds the coercivity bound 1/xi; returns xi."""
        xi = 0.5 * (divw_sup + self.nu + trace_const ** 2 * w_sup / (4 * self.nu))
        if dt >= 1.0 / xi:
            warnings.warn(f"time step {dt:g} exceeds 1/xi = {1 / xi:g}", RuntimeWarning, stacklevel=2)
        return xi


def gamma_weight(params: SchemeParams, K: int) -> float:
    return params.c_gamma * (params.k_override if params.k_override is not None else K)


def default_penalty_h(mesh) -> float:
    """Cell width of a structured mesh (sqrt of twice the mean element area)."""
    if "penalty_h" not in mesh._cache:
        mesh._cache["penalty_h"] = float(np.sqrt(2.0 * mesh.signed_areas().mean()))
    return mesh._cache["penalty_h"]


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_perm: np.ndarray        # local index -> global dof
    parts: dict = field(default_factory=dict)

    def to_global(self, x: np.ndarray, n_dofs: int) -> np.ndarray:
        out = np.zeros(n_dofs)
        out[self.dof_perm] = x
        return out


# ---------------------------------------------------------------- kernels

def _shape(space: ScalarSpace, pts: PointSet, gradient: bool = True):
    basis = space.basis
    phi = basis.values(pts.xi)
    if not gradient:
        return phi, None
    Jinv = np.linalg.inv(pts.J)
    grad = np.einsum("nba,nib->nia", Jinv, basis.gradients(pts.xi))
    return phi, grad


def _scatter(space: ScalarSpace, elem_of_point: np.ndarray, local: np.ndarray) -> sp.csr_matrix:
    """Sum per-point local matrices (n, nloc, nloc) by element and build the global matrix."""
    n = space.n_dofs
    if len(elem_of_point) == 0:
        return sp.csr_matrix((n, n))
    starts = np.r_[0, np.flatnonzero(np.diff(elem_of_point)) + 1]
    blocks = np.add.reduceat(local, starts, axis=0)
    dofs = space.dof_map[elem_of_point[starts]]
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _scatter_vector(space: ScalarSpace, elem_of_point, local: np.ndarray) -> np.ndarray:
    dofs = space.dof_map[elem_of_point].ravel()
    return np.bincount(dofs, weights=local.ravel(), minlength=space.n_dofs)


def domain_points(space: ScalarSpace, theta, slice_: LevelSetSlice, elems, degree: int) -> PointSet:
    return volume_points(theta, space.mesh, slice_.phi_lin, elems, degree, "NEG")


def assemble_mass(space: ScalarSpace, pts: PointSet) -> sp.csr_matrix:
    phi, _ = _shape(space, pts, gradient=False)
    return _scatter(space, pts.elem, np.einsum("n,ni,nj->nij", pts.w, phi, phi))


def assemble_stiffness(space: ScalarSpace, pts: PointSet) -> sp.csr_matrix:
    _, grad = _shape(space, pts)
    return _scatter(space, pts.elem, np.einsum("n,nia,nja->nij", pts.w, grad, grad))


def assemble_convection(space: ScalarSpace, pts: PointSet, params: SchemeParams, t: float,
                        iface: PointSet | None = None) -> sp.csr_matrix:
    """Convection part (without diffusion) of the chosen form variant; rows are test functions."""
    n = space.n_dofs
    if params.velocity is None:
        return sp.csr_matrix((n, n))
    phi, grad = _shape(space, pts)
    w = params.velocity(pts.x[:, 0], pts.x[:, 1], t)
    divw = params.div_velocity(pts.x[:, 0], pts.x[:, 1], t) if params.div_velocity else 0.0
    wgrad = np.einsum("na,nja->nj", w, grad)
    adv = np.einsum("n,ni,nj->nij", pts.w, phi, wgrad)             # (w.grad u) v
    react = np.einsum("n,ni,nj->nij", pts.w * divw, phi, phi)
    if params.form == EXPERIMENT:
        return _scatter(space, pts.elem, adv + react)
    local = 0.5 * (adv - np.swapaxes(adv, 1, 2)) + 0.5 * react
    C = _scatter(space, pts.elem, local)
    if iface is not None and len(iface):
        wi = params.velocity(iface.x[:, 0], iface.x[:, 1], t)
        wn = np.einsum("na,na->n", wi, iface.normal)
        phi_i, _ = _shape(space, iface, gradient=False)
        C = C + _scatter(space, iface.elem, np.einsum("n,ni,nj->nij", 0.5 * iface.w * wn, phi_i, phi_i))
    return C


def assemble_bilinear(space, theta, slice_, aslice: ActiveSlice, params: SchemeParams, t: float):
    """Diffusion plus convection on the deformed discrete domain."""
    deg = params.volume_degree(space.k)
    pts = domain_points(space, theta, slice_, aslice.active_elems, deg)
    iface = None
    if params.form == ANALYSIS:
        iface = interface_points(theta, space.mesh, slice_.phi_lin, aslice.active_elems, deg)
    return params.nu * assemble_stiffness(space, pts) + assemble_convection(space, pts, params, t, iface)


def assemble_ghost_penalty(space: ScalarSpace, theta, facets, degree: int | None = None,
                           h: float | None = None, stats: dict | None = None) -> sp.csr_matrix:
    """Direct-version ghost penalty h^-2 int_{T1 u T2} (u1 - u2)(v1 - v2), without the weight gamma.

    u1 and u2 are the canonically extended element polynomials of the two
    neighbours, composed with the inverse of the respective extended element map.
    """
    mesh = space.mesh
    n = space.n_dofs
    facets = np.asarray(facets, dtype=np.int64)
    if len(facets) == 0:
        return sp.csr_matrix((n, n))
    h = h if h is not None else default_penalty_h(mesh)
    rule = simplex_rule(degree if degree is not None else 2 * space.k + 2)
    nq, nloc = len(rule.weights), space.nloc
    ee = mesh.edge_elements[facets]
    if np.any(ee[:, 1] < 0):
        raise ValueError("ghost-penalty facet on the boundary")
    # side s integrates over element own = ee[:, s] and extends the neighbour ee[:, 1 - s]
    own = np.concatenate([ee[:, 0], ee[:, 1]])
    other = np.concatenate([ee[:, 1], ee[:, 0]])
    E_own = np.repeat(own, nq)
    E_oth = np.repeat(other, nq)
    xi = np.tile(rule.points, (len(own), 1))
    v0, A = mesh.affine()
    Ainv = mesh.affine_inverse()
    X = v0[E_own] + np.einsum("nab,nb->na", A[E_own], xi)
    y_affine = np.einsum("nab,nb->na", Ainv[E_oth], X - v0[E_oth])
    if theta is None:
        J = A[E_own]
        y = y_affine
    else:
        x, J = theta.map_points(E_own, xi)
        y, ok = theta.invert(E_oth, x, guess=y_affine, strict=False)
        if not ok.all():
            # the extended neighbour map folds over (coarse meshes only):
            # fall back to the undeformed correspondence at those points
            y[~ok] = y_affine[~ok]
            if stats is not None:
                stats["gp_fallback"] = stats.get("gp_fallback", 0) + int((~ok).sum())
    w = np.tile(rule.weights, len(own)) * np.abs(np.linalg.det(J)) / h ** 2
    basis = space.basis
    jump = np.concatenate([basis.values(xi), -basis.values(y)], axis=1)      # (n, 2 nloc)
    local = np.einsum("n,ni,nj->nij", w, jump, jump).reshape(len(own), nq, 2 * nloc, 2 * nloc).sum(axis=1)
    dofs = np.concatenate([space.dof_map[own], space.dof_map[other]], axis=1)
    m = 2 * nloc
    rows = np.repeat(dofs, m, axis=1).ravel()
    cols = np.tile(dofs, (1, m)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_rhs(space, theta, slice_, aslice: ActiveSlice, params: SchemeParams, t: float,
                 pts: PointSet | None = None) -> np.ndarray:
    if pts is None:
        pts = domain_points(space, theta, slice_, aslice.active_elems, params.volume_degree(space.k))
    if params.source is None or len(pts) == 0:
        return np.zeros(space.n_dofs)
    phi, _ = _shape(space, pts, gradient=False)
    g = params.source(pts.x[:, 0], pts.x[:, 1], t)
    return _scatter_vector(space, pts.elem, (pts.w * g)[:, None] * phi)


@dataclass
class StepMatrices:
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    convection: sp.csr_matrix
    ghost: sp.csr_matrix
    rhs: np.ndarray
    gamma: float
    stats: dict = field(default_factory=dict)


def assemble_step_matrices(space, theta, slice_, aslice: ActiveSlice, params: SchemeParams,
                           t: float, K: int) -> StepMatrices:
    deg = params.volume_degree(space.k)
    pts = domain_points(space, theta, slice_, aslice.active_elems, deg)
    iface = None
    if params.form == ANALYSIS:
        iface = interface_points(theta, space.mesh, slice_.phi_lin, aslice.active_elems, deg)
    M = assemble_mass(space, pts)
    A = assemble_stiffness(space, pts)
    C = assemble_convection(space, pts, params, t, iface)
    stats: dict = {}
    S = assemble_ghost_penalty(space, theta, aslice.facets, params.ghost_degree(space.k),
                               params.penalty_h, stats)
    f = assemble_rhs(space, theta, slice_, aslice, params, t, pts)
    return StepMatrices(M, A, C, S, f, gamma_weight(params, K), stats)


def assemble_step_system(space, theta, slice_, aslice: ActiveSlice, history, params: SchemeParams,
                         dt: float, t: float, K: int, mats: StepMatrices | None = None) -> SparseSystem:
    """BDF-r system on the active dofs; ``history`` holds r fields on theta, newest first."""
    if len(history) != params.r:
        raise ValueError(f"history length {len(history)} does not match BDF order {params.r}")
    if mats is None:
        mats = assemble_step_matrices(space, theta, slice_, aslice, params, t, K)
    lead, coef = bdf_stencil(params.r, dt)
    dofs = aslice.active_dofs
    full = lead * mats.mass + params.nu * mats.stiffness + mats.convection + mats.gamma * mats.ghost
    hist = np.zeros(space.n_dofs)
    for c, u in zip(coef, history):
        coeffs = u.coeffs if isinstance(u, FEField) else np.asarray(u)
        if coeffs.shape != (space.n_dofs,):
            raise ValueError("history field does not match the space")
        hist += c * coeffs
    rhs = mats.rhs - mats.mass @ hist
    A = full[dofs][:, dofs].tocsr()
    A.eliminate_zeros()
    return SparseSystem(A, rhs[dofs], dofs, {"matrices": mats})


def dump_matrix(system: SparseSystem, path) -> None:
    scipy.io.mmwrite(str(path), system.matrix)


def error_norms(u_h: FEField, exact: Callable, exact_grad: Callable, theta, slice_: LevelSetSlice,
                aslice: ActiveSlice, t: float, degree: int | None = None):
    """(L2 error, H1-seminorm error) on the deformed discrete domain."""
    space = u_h.space
    deg = degree if degree is not None else 2 * space.k + 2
    pts = domain_points(space, theta, slice_, aslice.active_elems, deg)
    if len(pts) == 0:
        return 0.0, 0.0
    phi, grad = _shape(space, pts)
    c = u_h.coeffs[space.dof_map[pts.elem]]
    val = np.einsum("ni,ni->n", phi, c)
    gval = np.einsum("nia,ni->na", grad, c)
    e = val - exact(pts.x[:, 0], pts.x[:, 1], t)
    ge = gval - exact_grad(pts.x[:, 0], pts.x[:, 1], t)
    return math.sqrt(float(np.sum(pts.w * e ** 2))), math.sqrt(float(np.sum(pts.w * (ge ** 2).sum(axis=1))))


def tuple_norm_sq(M, a, b) -> float:
    """BDF2 pair norm |a|^2 + |2a - b|^2 in the M-inner product."""
    c = 2 * a - b
    return float(a @ (M @ a) + c @ (M @ c))
