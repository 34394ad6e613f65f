"""Equispaced Lagrange basis of order k on the reference triangle.

Basis functions are written in barycentric product form

    phi_(a,b,c) = S_a(l0) S_b(l1) S_c(l2),   S_n(l) = prod_{m<n} (k l - m) / (m + 1)

with l0 = 1 - x - y, l1 = x, l2 = y. The same formula is used inside and
outside the reference simplex, so evaluating outside the triangle is the
canonical polynomial extension. At the vertices the values are exactly
0 or 1 in floating point.

Local node order: the three vertices, then the k-1 nodes of each edge
(0->1, 1->2, 2->0, ordered from the first to the second vertex), then the
interior nodes.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

MAX_ORDER = 4


def _multi_indices(k: int) -> np.ndarray:
    idx = [(k, 0, 0), (0, k, 0), (0, 0, k)]
    for i in range(1, k):
        idx.append((k - i, i, 0))
    for i in range(1, k):
        idx.append((0, k - i, i))
    for i in range(1, k):
        idx.append((i, 0, k - i))
    for c in range(1, k):
        for b in range(1, k - c):
            idx.append((k - b - c, b, c))
    return np.array(idx, dtype=np.int64).reshape(-1, 3)


class LagrangeBasis:
    """Scalar P^k Lagrange basis on the reference triangle (0,0), (1,0), (0,1)."""

    def __init__(self, k: int):
        if not 1 <= k <= MAX_ORDER:
            raise ValueError(f"unsupported polynomial order {k}; supported: 1..{MAX_ORDER}")
        self.k = k
        self.multi = _multi_indices(k)
        self.nloc = len(self.multi)
        self.nodes = self.multi[:, 1:].astype(float) / k
        self.n_edge = k - 1
        self.n_interior = self.nloc - 3 - 3 * (k - 1)

    def _factors(self, lam):
        """S_n(lam) and S_n'(lam) for n = 0..k; lam has shape (...,)."""
        k = self.k
        S = np.empty((k + 1,) + lam.shape)
        dS = np.empty_like(S)
        S[0] = 1.0
        dS[0] = 0.0
        for n in range(1, k + 1):
            f = (k * lam - (n - 1)) / n
            S[n] = S[n - 1] * f
            dS[n] = dS[n - 1] * f + S[n - 1] * (k / n)
        return S, dS

    def values(self, xi) -> np.ndarray:
        """Basis values at reference points xi (n, 2) -> (n, nloc)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        lams = (1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1])
        S = [self._factors(l)[0] for l in lams]
        a, b, c = self.multi.T
        return (S[0][a] * S[1][b] * S[2][c]).T

    def gradients(self, xi) -> np.ndarray:
        """Reference gradients at xi (n, 2) -> (n, nloc, 2)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        lams = (1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1])
        (S0, D0), (S1, D1), (S2, D2) = (self._factors(l) for l in lams)
        a, b, c = self.multi.T
        d0 = D0[a] * S1[b] * S2[c]
        d1 = S0[a] * D1[b] * S2[c]
        d2 = S0[a] * S1[b] * D2[c]
        return np.stack([(d1 - d0).T, (d2 - d0).T], axis=2)

    def values_and_gradients(self, xi):
        return self.values(xi), self.gradients(xi)


@lru_cache(maxsize=None)
def lagrange(k: int) -> LagrangeBasis:
    return LagrangeBasis(k)
