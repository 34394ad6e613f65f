"""Quadrature on cut reference triangles.

The linear level set on an element splits the reference triangle into
uniformly signed sub-triangles; each receives a positive-weight conical
product (collapsed Gauss) rule. Interface segments get Gauss-Legendre
points. Mapping through the isoparametric deformation is done in
`mapped_measures` / `CutQuadrature`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 20

NEG, CUT, POS = -1, 0, 1
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class QuadratureError(ValueError):
    pass


class GeometryError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray      # (n, 2) reference coordinates
    weights: np.ndarray     # (n,)
    degree: int
    tangents: np.ndarray | None = None   # unit reference tangents (interface rules)


@dataclass(frozen=True)
class CutDecomposition:
    sub_triangles: list     # [(3x2 array, NEG|POS), ...]
    interface_segments: list  # [2x2 array, ...]


def _check_degree(degree):
    if not (isinstance(degree, (int, np.integer)) and 0 <= degree <= MAX_DEGREE):
        raise QuadratureError(
            f"unsupported quadrature degree {degree!r}; supported degrees: 0..{MAX_DEGREE}")


@lru_cache(maxsize=None)
def simplex_rule(degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi x Gauss-Legendre rule on the reference triangle."""
    _check_degree(degree)
    n = max(1, (degree + 2) // 2)
    xa, wa = roots_jacobi(n, 1.0, 0.0)   # weight (1 - x) on [-1, 1]
    xb, wb = roots_legendre(n)
    u = 0.5 * (xa + 1.0)
    wu = wa / 4.0
    v = 0.5 * (xb + 1.0)
    wv = wb / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    pts = np.column_stack([U.ravel(), ((1.0 - U) * V).ravel()])
    return QuadratureRule(pts, W.ravel(), degree)


@lru_cache(maxsize=None)
def line_rule(degree: int):
    """Gauss-Legendre on [0, 1]."""
    _check_degree(degree)
    n = max(1, (degree + 2) // 2)
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _area(tri):
    a = tri[1] - tri[0]
    b = tri[2] - tri[0]
    return 0.5 * abs(a[0] * b[1] - a[1] * b[0])


def decompose(vertex_values, vertices=REF_VERTICES) -> CutDecomposition:
    """Split a triangle by the zero line of the linear interpolant of vertex_values.

    The NEG region is {phi < 0}; vertex values exactly zero therefore belong
    to the closure of POS. Degenerate (zero-area) pieces are dropped.
    """
    v = np.asarray(vertex_values, dtype=float)
    P = np.asarray(vertices, dtype=float)
    neg = v < 0
    if neg.all():
        return CutDecomposition([(P.copy(), NEG)], [])
    if not neg.any():
        return CutDecomposition([(P.copy(), POS)], [])
    # the isolated vertex is the one whose sign differs from the other two
    iso = int(np.flatnonzero(neg)[0]) if neg.sum() == 1 else int(np.flatnonzero(~neg)[0])
    j, k = (iso + 1) % 3, (iso + 2) % 3

    def cross(a, b):
        t = v[a] / (v[a] - v[b])
        return P[a] + t * (P[b] - P[a])

    pij, pik = cross(iso, j), cross(iso, k)
    iso_sign = NEG if neg[iso] else POS
    other = POS if iso_sign == NEG else NEG
    pieces = [(np.array([P[iso], pij, pik]), iso_sign)]
    quad = np.array([pij, P[j], P[k], pik])
    if np.linalg.norm(quad[0] - quad[2]) <= np.linalg.norm(quad[1] - quad[3]):
        pieces += [(quad[[0, 1, 2]], other), (quad[[0, 2, 3]], other)]
    else:
        pieces += [(quad[[0, 1, 3]], other), (quad[[1, 2, 3]], other)]
    scale = _area(P)
    pieces = [(tri, s) for tri, s in pieces if _area(tri) > 1e-14 * scale]
    segs = []
    if np.linalg.norm(pij - pik) > 1e-14 * np.sqrt(scale):
        segs.append(np.array([pij, pik]))
    return CutDecomposition(pieces, segs)


def volume_rule(decomp: CutDecomposition, region, degree: int) -> QuadratureRule:
    """Composite rule over the NEG, POS or ALL part of a decomposition."""
    base = simplex_rule(degree)
    pts, wts = [], []
    for tri, sign in decomp.sub_triangles:
        if region != "ALL" and sign != _region_sign(region):
            continue
        A = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
        det = abs(np.linalg.det(A))
        pts.append(tri[0] + base.points @ A.T)
        wts.append(base.weights * det)
    if not pts:
        return QuadratureRule(np.zeros((0, 2)), np.zeros(0), degree)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)


def _region_sign(region):
    if region in ("NEG", NEG):
        return NEG
    if region in ("POS", POS):
        return POS
    raise QuadratureError(f"unknown region {region!r}")


def interface_rule(decomp: CutDecomposition, degree: int) -> QuadratureRule:
    """Gauss-Legendre points on the interface segments (reference coordinates)."""
    s, w = line_rule(degree)
    pts, wts, tans = [], [], []
    for a, b in decomp.interface_segments:
        d = b - a
        length = np.linalg.norm(d)
        pts.append(a + s[:, None] * d)
        wts.append(w * length)
        tans.append(np.repeat((d / length)[None], len(s), axis=0))
    if not pts:
        return QuadratureRule(np.zeros((0, 2)), np.zeros(0), degree, np.zeros((0, 2)))
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree, np.vstack(tans))


def ref_gradient_linear(vertex_values) -> np.ndarray:
    """Reference gradient of the linear interpolant of three vertex values."""
    v = np.asarray(vertex_values, dtype=float)
    return np.stack([v[..., 1] - v[..., 0], v[..., 2] - v[..., 0]], axis=-1)


def _map(theta, mesh, elems, xi):
    if theta is None:
        v0, A = mesh.affine()
        return v0[elems] + np.einsum("nab,nb->na", A[elems], xi), A[elems]
    return theta.map_points(elems, xi)


def mapped_measures(theta, elem: int, rule: QuadratureRule, kind: str = "VOLUME", mesh=None,
                    vertex_values=None):
    """Physical points, weights (and unit normals) of a reference rule on one element.

    ``theta`` may be None for the affine map, in which case ``mesh`` is required.
    For INTERFACE rules ``vertex_values`` orients the normal towards increasing
    values of the linear level set.
    """
    mesh = mesh if mesh is not None else theta.mesh
    E = np.full(len(rule.weights), elem, dtype=np.int64)
    x, J = _map(theta, mesh, E, rule.points)
    if kind == "VOLUME":
        det = np.linalg.det(J)
        if np.any(det <= 0):
            raise GeometryError(f"element inversion at quadrature point on element {elem}")
        return x, rule.weights * det, None
    if kind != "INTERFACE":
        raise QuadratureError(f"unknown measure kind {kind!r}")
    w, n = _interface_factors(J, rule.tangents, rule.weights,
                              None if vertex_values is None else
                              np.repeat(ref_gradient_linear(vertex_values)[None], len(E), 0))
    return x, w, n


def _interface_factors(J, tangents, weights, ref_grad=None):
    t = np.einsum("nab,nb->na", J, tangents)
    length = np.linalg.norm(t, axis=1)
    n = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    if ref_grad is not None:
        g = np.linalg.solve(np.swapaxes(J, 1, 2), ref_grad[:, :, None])[:, :, 0]
        flip = np.einsum("na,na->n", n, g) < 0
        n[flip] *= -1
    return weights * length, n


@dataclass
class PointSet:
    """Flat quadrature point cloud over many elements."""
    elem: np.ndarray        # (n,)
    xi: np.ndarray          # (n, 2) reference points
    x: np.ndarray           # (n, 2) physical points
    J: np.ndarray           # (n, 2, 2) Jacobians of the element maps
    w: np.ndarray           # (n,) physical weights
    normal: np.ndarray | None = None

    def __len__(self):
        return len(self.w)


def _empty_points(with_normal=False):
    return PointSet(np.zeros(0, np.int64), np.zeros((0, 2)), np.zeros((0, 2)),
                    np.zeros((0, 2, 2)), np.zeros(0), np.zeros((0, 2)) if with_normal else None)


def volume_points(theta, mesh, phi_lin, elems, degree: int, region="NEG") -> PointSet:
    """Mapped cut quadrature over the region of the given elements.

    ``phi_lin`` holds the vertex values of the linear level set; pass
    region="ALL" to integrate over full elements.
    """
    elems = np.asarray(elems, dtype=np.int64)
    base = simplex_rule(degree)
    if region == "ALL":
        full, cut = elems, elems[:0]
    else:
        sign = _region_sign(region)
        vals = phi_lin[mesh.triangles[elems]]
        if sign == NEG:
            full = elems[(vals < 0).all(axis=1)]
            cut = elems[~(vals < 0).all(axis=1) & (vals < 0).any(axis=1)]
        else:
            full = elems[(vals >= 0).all(axis=1)]
            cut = elems[~(vals >= 0).all(axis=1) & (vals >= 0).any(axis=1)]
    E = [np.repeat(full, len(base.weights))]
    XI = [np.tile(base.points, (len(full), 1))]
    W = [np.tile(base.weights, len(full))]
    for e in cut:
        rule = volume_rule(decompose(phi_lin[mesh.triangles[e]]), region, degree)
        E.append(np.full(len(rule.weights), e, dtype=np.int64))
        XI.append(rule.points)
        W.append(rule.weights)
    E = np.concatenate(E)
    if len(E) == 0:
        return _empty_points()
    XI = np.vstack(XI)
    W = np.concatenate(W)
    x, J = _map(theta, mesh, E, XI)
    det = np.linalg.det(J)
    if np.any(det <= 0):
        raise GeometryError(
            f"element inversion at quadrature point on element {int(E[np.argmin(det)])}")
    return PointSet(E, XI, x, J, W * det)


def interface_points(theta, mesh, phi_lin, elems, degree: int) -> PointSet:
    """Mapped interface quadrature with unit normals pointing to increasing level set."""
    elems = np.asarray(elems, dtype=np.int64)
    vals = phi_lin[mesh.triangles[elems]]
    cut = elems[(vals < 0).any(axis=1) & ~(vals < 0).all(axis=1)]
    E, XI, W, T, G = [], [], [], [], []
    for e in cut:
        v = phi_lin[mesh.triangles[e]]
        rule = interface_rule(decompose(v), degree)
        if len(rule.weights) == 0:
            continue
        E.append(np.full(len(rule.weights), e, dtype=np.int64))
        XI.append(rule.points)
        W.append(rule.weights)
        T.append(rule.tangents)
        G.append(np.repeat(ref_gradient_linear(v)[None], len(rule.weights), axis=0))
    if not E:
        return _empty_points(with_normal=True)
    E = np.concatenate(E)
    XI = np.vstack(XI)
    x, J = _map(theta, mesh, E, XI)
    w, n = _interface_factors(J, np.vstack(T), np.concatenate(W), np.vstack(G))
    return PointSet(E, XI, x, J, w, n)
