"""Discrete level sets, element classification and active element sets.

Positive-measure intersection tests against the piecewise linear level set
are realized as vertex tests; a vertex value exactly equal to the offset
counts as a sign change, so touching elements are treated as cut.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .fespace import FEField, ScalarSpace, interpolate
from .mesh import BackgroundMesh
from .cutquad import CUT, NEG, POS

log = logging.getLogger(__name__)


class ExtensionWarning(UserWarning):
    pass


class GhostPenaltyGraphError(RuntimeError):
    pass


@dataclass
class LevelSetSlice:
    t: float
    phi_h: FEField          # order-q interpolant on the undeformed mesh
    phi_lin: np.ndarray     # vertex values (P1 interpolant)

    @property
    def mesh(self) -> BackgroundMesh:
        return self.phi_h.space.mesh

    @property
    def q(self) -> int:
        return self.phi_h.space.k


@dataclass
class ActiveSlice:
    n: int
    delta: float
    r: int
    elem_class: np.ndarray      # NEG / CUT / POS per element (offset 0)
    strip: np.ndarray           # bool mask, T_r^{n,S}
    active: np.ndarray          # bool mask, T_r^n
    facets: np.ndarray          # edge indices, F_r^n
    active_dofs: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def strip_elems(self) -> np.ndarray:
        return np.flatnonzero(self.strip)

    @property
    def active_elems(self) -> np.ndarray:
        return np.flatnonzero(self.active)


def discretize_levelset(phi, t: float, q: int, mesh: BackgroundMesh,
                        space: ScalarSpace | None = None) -> LevelSetSlice:
    """Interpolate phi(., t) into the order-q space on the undeformed mesh."""
    if q < 1:
        raise ValueError("geometry order q must be >= 1")
    if space is None:
        space = ScalarSpace(mesh, q)
    phi_h = interpolate(space, phi, None, t)
    return LevelSetSlice(float(t), phi_h, phi_h.coeffs[:mesh.n_vertices].copy())


def classify_elements(slice_: LevelSetSlice, offset: float = 0.0) -> np.ndarray:
    vals = slice_.phi_lin[slice_.mesh.triangles] - offset
    return classify_values(vals)


def classify_values(vals: np.ndarray) -> np.ndarray:
    """NEG if all three vertex values < 0, POS if all > 0, CUT otherwise."""
    out = np.full(len(vals), CUT, dtype=np.int64)
    out[(vals < 0).all(axis=1)] = NEG
    out[(vals > 0).all(axis=1)] = POS
    return out


def active_sets(slice_: LevelSetSlice, delta: float, r: int, mesh: BackgroundMesh,
                space: ScalarSpace, n: int = 0, plus_layers: bool = True) -> ActiveSlice:
    """Strip, active elements, ghost-penalty facets and active dofs.

    The band width is r * delta; with ``plus_layers`` both sets are then
    grown by r rings of vertex neighbours.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if r not in (0, 1, 2, 3):
        raise ValueError("r must be in {0, 1, 2, 3}")
    width = r * delta
    vals = slice_.phi_lin[mesh.triangles]
    vmin, vmax = vals.min(axis=1), vals.max(axis=1)
    strip = (vmin <= width) & (vmax >= -width)
    active = vmin <= width
    if plus_layers and r > 0:
        strip = mesh.expand(strip, r)
        active = mesh.expand(active, r) | strip

    ee = mesh.edge_elements
    interior = ee[:, 1] >= 0
    a0 = np.where(interior, active[ee[:, 0]], False)
    a1 = np.where(interior, active[np.maximum(ee[:, 1], 0)], False)
    s0 = strip[ee[:, 0]]
    s1 = np.where(interior, strip[np.maximum(ee[:, 1], 0)], False)
    facets = np.flatnonzero(a0 & a1 & (s0 | s1))

    boundary_elems = np.unique(ee[~interior, 0])
    if active[boundary_elems].any() and not (vmin[boundary_elems] <= 0).any():
        warnings.warn("extension hits background boundary", ExtensionWarning, stacklevel=2)

    return ActiveSlice(n, float(delta), int(r), classify_values(vals), strip, active,
                       facets, space.dofs_of(active))


def verify_path_assumption(aslice: ActiveSlice, slice_: LevelSetSlice, mesh: BackgroundMesh):
    """Longest shortest facet path from exterior strip elements to the interior.

    Returns (K, M): the maximal number of facets crossed from an element of
    the strip with a positive vertex value to the nearest active element
    outside that set, and the maximal number of such paths ending at one
    interior element.
    """
    vals = slice_.phi_lin[mesh.triangles]
    splus = aslice.strip & (vals.max(axis=1) > 0)
    targets = np.flatnonzero(aslice.active & ~splus)
    sources = np.flatnonzero(splus)
    if len(sources) == 0:
        return 0, 0
    if len(targets) == 0:
        raise GhostPenaltyGraphError("ghost-penalty graph disconnected: no interior element")
    ee = mesh.edge_elements[aslice.facets]
    nt = mesh.n_elements
    g = csr_matrix((np.ones(2 * len(ee)), (np.r_[ee[:, 0], ee[:, 1]], np.r_[ee[:, 1], ee[:, 0]])),
                   shape=(nt, nt))
    dist, _, root = dijkstra(g, directed=False, indices=targets, unweighted=True,
                             min_only=True, return_predecessors=True)
    d = dist[sources]
    if not np.all(np.isfinite(d)):
        bad = int(sources[~np.isfinite(d)][0])
        raise GhostPenaltyGraphError(f"ghost-penalty graph disconnected at element {bad}")
    K = int(d.max())
    M = int(np.bincount(root[sources]).max())
    return K, M
