"""Time-independent background triangulation of a rectangle.

The mesh stores vertex coordinates, counter-clockwise triangles, the
edge (facet) list with adjacent elements, and vertex-to-element incidence
in CSR form. All entities are densely indexed; an edge is stored with
ascending vertex indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# local edge j joins local vertices (j, j+1 mod 3)
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class BackgroundMesh:
    vertices: np.ndarray            # (nv, 2)
    triangles: np.ndarray           # (nt, 3), counter-clockwise
    edges: np.ndarray               # (ne, 2), ascending vertex indices
    edge_elements: np.ndarray       # (ne, 2), second entry -1 on the boundary
    element_edges: np.ndarray       # (nt, 3), local edge j -> global edge
    v2e_ptr: np.ndarray             # CSR pointer of vertex -> elements
    v2e_idx: np.ndarray
    h_max: float
    bounds: tuple = (0.0, 0.0, 1.0, 1.0)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_elements[:, 1] < 0

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        return lengths.max(axis=1)

    def affine(self):
        """Return (v0, A) with x = v0 + A @ xi for every element."""
        if "affine" not in self._cache:
            p = self.vertices[self.triangles]
            A = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
            self._cache["affine"] = (p[:, 0].copy(), A, np.linalg.inv(A))
        v0, A, _ = self._cache["affine"]
        return v0, A

    def affine_inverse(self):
        self.affine()
        return self._cache["affine"][2]

    def elements_of_vertex(self, v: int) -> np.ndarray:
        return self.v2e_idx[self.v2e_ptr[v]:self.v2e_ptr[v + 1]]

    def vertex_cache(self):
        """Sparse boolean element adjacency: share at least one vertex."""
        if "vertex" not in self._cache:
            import scipy.sparse as sp

            nt = self.n_elements
            inc = sp.csr_matrix(
                (np.ones(3 * nt), (np.repeat(np.arange(nt), 3), self.triangles.ravel())),
                shape=(nt, self.n_vertices),
            )
            adj = (inc @ inc.T).tocsr()
            adj.data[:] = 1.0
            self._cache["vertex"] = adj
        return self._cache["vertex"]

    def expand(self, mask: np.ndarray, layers: int = 1) -> np.ndarray:
        """Add `layers` rings of vertex neighbours to a boolean element mask."""
        out = np.asarray(mask, dtype=bool).copy()
        if layers <= 0 or not out.any():
            return out
        tri = self.triangles
        for _ in range(layers):
            touched = np.zeros(self.n_vertices, dtype=bool)
            touched[tri[out].ravel()] = True
            out = touched[tri].any(axis=1)
        return out

    def locate(self, point, tol: float = 1e-12) -> np.ndarray:
        """All elements whose closure contains `point`."""
        x = np.asarray(point, dtype=float)
        xmin, ymin, xmax, ymax = self.bounds
        scale = max(xmax - xmin, ymax - ymin)
        if (x[0] < xmin - tol * scale or x[0] > xmax + tol * scale
                or x[1] < ymin - tol * scale or x[1] > ymax + tol * scale):
            raise MeshError(f"point {tuple(x)} outside background domain")
        v0, A = self.affine()
        xi = np.linalg.solve(A, (x - v0)[:, :, None])[:, :, 0]
        lam = np.column_stack([1.0 - xi.sum(axis=1), xi])
        return np.flatnonzero((lam >= -tol).all(axis=1))


def _assemble(vertices, triangles, bounds) -> BackgroundMesh:
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    nt = len(triangles)

    # enforce counter-clockwise orientation
    p = vertices[triangles]
    det = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
           - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = det < 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    local = triangles[:, LOCAL_EDGES]                     # (nt, 3, 2)
    keys = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    element_edges = inverse.reshape(nt, 3)

    owner = np.repeat(np.arange(nt), 3)
    edge_elements = -np.ones((len(edges), 2), dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    sorted_edges = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_edges[1:] != sorted_edges[:-1]
    edge_elements[sorted_edges[first], 0] = owner[order[first]]
    edge_elements[sorted_edges[~first], 1] = owner[order[~first]]
    counts = np.bincount(inverse, minlength=len(edges))
    if counts.max() > 2:
        raise MeshError("non-conforming triangulation: facet with more than 2 elements")

    flat = triangles.ravel()
    order = np.argsort(flat, kind="stable")
    v2e_idx = owner[order]
    v2e_ptr = np.zeros(len(vertices) + 1, dtype=np.int64)
    np.cumsum(np.bincount(flat, minlength=len(vertices)), out=v2e_ptr[1:])

    lengths = np.linalg.norm(vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1)
    h_max = float(lengths[element_edges].max())
    return BackgroundMesh(vertices, triangles, edges, edge_elements, element_edges,
                          v2e_ptr, v2e_idx, h_max, tuple(float(b) for b in bounds))


def build_structured(xmin, ymin, xmax, ymax, nx, ny, pattern: str = "alternating") -> BackgroundMesh:
    """Structured triangulation of [xmin, xmax] x [ymin, ymax].

    pattern
        ``"alternating"`` splits each cell by a diagonal whose direction
        alternates with the cell parity, ``"uniform"`` uses the same
        diagonal everywhere, ``"crisscross"`` splits each cell into four
        triangles through its centre.
    """
    if not (xmax > xmin and ymax > ymin):
        raise MeshError("empty domain")
    if nx < 1 or ny < 1:
        raise MeshError("empty domain")
    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    if pattern == "crisscross":
        centers = np.column_stack([(xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2])
        m = len(vertices) + np.arange(len(i))
        vertices = np.vstack([vertices, centers])
        tris = np.concatenate([np.column_stack([a, b, m]), np.column_stack([b, c, m]),
                               np.column_stack([c, d, m]), np.column_stack([d, a, m])])
    elif pattern in ("alternating", "uniform"):
        if pattern == "alternating":
            flip = (i + j) % 2 == 1
        else:
            flip = np.zeros(len(i), dtype=bool)
        t1 = np.where(flip[:, None], np.column_stack([a, b, d]), np.column_stack([a, b, c]))
        t2 = np.where(flip[:, None], np.column_stack([b, c, d]), np.column_stack([a, c, d]))
        tris = np.concatenate([t1, t2])
    else:
        raise MeshError(f"unknown mesh pattern {pattern!r}")
    return _assemble(vertices, tris, (xmin, ymin, xmax, ymax))


def refine(mesh: BackgroundMesh) -> BackgroundMesh:
    """Regular red refinement: every triangle into 4 congruent children."""
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    t = mesh.triangles
    m = nv + mesh.element_edges          # midpoint of edges (01), (12), (20)
    children = np.concatenate([
        np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
        np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    return _assemble(vertices, children, mesh.bounds)


def patch(mesh: BackgroundMesh, entity, kind: str | None = None) -> set:
    """Element patch of a point, a facet index or an element index.

    ``kind`` is one of ``"point"``, ``"facet"``, ``"element"``; when omitted a
    2-sequence is read as a point.
    """
    if kind is None:
        kind = "point" if np.ndim(entity) == 1 else None
        if kind is None:
            raise MeshError("patch of an integer needs kind='facet' or kind='element'")
    if kind == "point":
        return set(int(e) for e in mesh.locate(entity))
    if kind == "facet":
        if not 0 <= entity < mesh.n_edges:
            raise MeshError(f"invalid facet index {entity}")
        return set(int(e) for e in mesh.edge_elements[entity] if e >= 0)
    if kind == "element":
        if not 0 <= entity < mesh.n_elements:
            raise MeshError(f"invalid element index {entity}")
        adj = mesh.vertex_cache()
        return set(int(e) for e in adj.indices[adj.indptr[entity]:adj.indptr[entity + 1]])
    raise MeshError(f"unknown patch kind {kind!r}")
