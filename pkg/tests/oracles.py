"""Independent reference computations used by the tests.

Everything here works in exact rational arithmetic or by brute force, and
shares no code with the package.
"""
from __future__ import annotations

from fractions import Fraction
from math import comb, factorial

import numpy as np


def _ref_moment(m: int, n: int) -> Fraction:
    """Integral of xi^m eta^n over the unit reference triangle."""
    return Fraction(factorial(m) * factorial(n), factorial(m + n + 2))


def triangle_monomial(tri, a: int, b: int) -> Fraction:
    """Exact integral of x^a y^b over a triangle with rational vertices."""
    (x0, y0), (x1, y1), (x2, y2) = [(Fraction(p[0]), Fraction(p[1])) for p in tri]
    px, qx = x1 - x0, x2 - x0
    py, qy = y1 - y0, y2 - y0
    det = abs(px * qy - qx * py)
    total = Fraction(0)
    # (x0 + px xi + qx eta)^a (y0 + py xi + qy eta)^b expanded term by term
    for i in range(a + 1):
        for j in range(a - i + 1):
            l = a - i - j
            cx = comb(a, i) * comb(a - i, j) * x0 ** i * px ** j * qx ** l
            if cx == 0:
                continue
            for i2 in range(b + 1):
                for j2 in range(b - i2 + 1):
                    l2 = b - i2 - j2
                    cy = comb(b, i2) * comb(b - i2, j2) * y0 ** i2 * py ** j2 * qy ** l2
                    if cy == 0:
                        continue
                    total += cx * cy * _ref_moment(j + j2, l + l2)
    return total * det


def clip_negative(tri, values):
    """Polygon {linear interpolant < 0} of a triangle, exact, counter-clockwise if tri is."""
    pts = [(Fraction(p[0]), Fraction(p[1])) for p in tri]
    vals = [Fraction(v) for v in values]
    out = []
    for i in range(3):
        j = (i + 1) % 3
        if vals[i] < 0:
            out.append(pts[i])
        if (vals[i] < 0) != (vals[j] < 0):
            s = vals[i] / (vals[i] - vals[j])
            out.append((pts[i][0] + s * (pts[j][0] - pts[i][0]), pts[i][1] + s * (pts[j][1] - pts[i][1])))
    return out


def polygon_monomial(poly, a: int, b: int) -> Fraction:
    """Exact monomial integral over a convex polygon by fan triangulation."""
    total = Fraction(0)
    for i in range(1, len(poly) - 1):
        total += triangle_monomial([poly[0], poly[i], poly[i + 1]], a, b)
    return total


def brute_force_patch(triangles, elem: int) -> set:
    verts = set(triangles[elem])
    return {i for i, t in enumerate(triangles) if verts & set(t)}


def monomial_values(xi, k: int) -> np.ndarray:
    """All monomials x^a y^b, a + b <= k, at points (n, 2)."""
    cols = [xi[:, 0] ** a * xi[:, 1] ** (d - a) for d in range(k + 1) for a in range(d + 1)]
    return np.column_stack(cols)
