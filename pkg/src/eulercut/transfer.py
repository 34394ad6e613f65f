"""Shifted-evaluation transfer of fields between consecutive deformed meshes.

For every element T of the target set and every Lagrange node x_i of T the
new node position Theta^n_T(x_i) is pulled back through the (polynomially
extended) old element map Theta^m_T; the old element polynomial is then
evaluated there. The resulting broken values are averaged per dof.
"""
from __future__ import annotations

import logging

import numpy as np

from .fespace import FEField, evaluate, oswald
from .isoparam import MeshDeformation, identity_deformation
from .levelset_geom import ActiveSlice

log = logging.getLogger(__name__)


def _as_deformation(theta, space) -> MeshDeformation:
    if theta is None:
        cache = space.mesh._cache
        if "identity_p1" not in cache:
            cache["identity_p1"] = identity_deformation(space.mesh, 1)
        return cache["identity_p1"]
    return theta


def pullback(space, theta_m, theta_n, elems):
    """Paired (elements, reference points) of the new nodes under the old element maps."""
    elems = np.asarray(elems, dtype=np.int64)
    E = np.repeat(elems, space.nloc)
    xi = np.tile(space.basis.nodes, (len(elems), 1))
    theta_m = _as_deformation(theta_m, space)
    theta_n = _as_deformation(theta_n, space)
    if theta_m is theta_n or np.array_equal(theta_m.displacement, theta_n.displacement):
        return E, xi
    x, _ = theta_n.map_points(E, xi, jacobian=False)
    return E, theta_m.invert(E, x, guess=xi)


def shifted_values(u_m: FEField, theta_n: MeshDeformation | None, elems, pulled=None) -> np.ndarray:
    """Broken nodal values (len(elems), nloc) of u_m seen from the new mesh."""
    E, y = pulled if pulled is not None else pullback(u_m.space, u_m.deformation, theta_n, elems)
    return evaluate(u_m, E, y, gradient=False).reshape(len(elems), u_m.space.nloc)


def _average_elements(target: ActiveSlice, mesh, inset_only: bool) -> np.ndarray:
    if inset_only:
        return target.active_elems
    return np.flatnonzero(mesh.expand(target.active, 1))


def project(u_m: FEField, theta_n: MeshDeformation | None, target: ActiveSlice,
            inset_only: bool = True, source_active: np.ndarray | None = None,
            pulled=None) -> FEField:
    """Transfer u_m (living on its own deformation) onto theta_n and the target active set.

    With ``inset_only`` each dof averages only over target elements; otherwise
    the average runs over all elements of its patch (values of the zero
    extension where the source field vanishes). Dofs outside the target are 0.
    """
    space = u_m.space
    if source_active is not None:
        missing = int((target.active & ~source_active).sum())
        if missing:
            log.debug("transfer: %d target elements outside the source support", missing)
    avg_elems = _average_elements(target, space.mesh, inset_only)
    local = shifted_values(u_m, theta_n, avg_elems, pulled)
    coeffs = oswald(space, avg_elems, local, count_elements=target.active_elems)
    out = np.zeros(space.n_dofs)
    out[target.active_dofs] = coeffs[target.active_dofs]
    return FEField(space, out, theta_n)


def project_chain(history, theta_n: MeshDeformation | None, target: ActiveSlice,
                  inset_only: bool = True) -> list:
    """Apply only the newest transfer to every stored field, keeping the order.

    Entries may be FEField or (FEField, deformation) pairs; stored fields
    already live on the previous deformation, so the pull-back of the new
    nodes is shared between fields on the same deformation.
    """
    out, cache = [], {}
    for item in history:
        u = item[0] if isinstance(item, tuple) else item
        key = id(u.deformation)
        if key not in cache:
            elems = _average_elements(target, u.space.mesh, inset_only)
            cache[key] = pullback(u.space, u.deformation, theta_n, elems)
        out.append(project(u, theta_n, target, inset_only, pulled=cache[key]))
    return out
