from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulercut.cutquad import (NEG, POS, QuadratureError, decompose, interface_points, interface_rule,
                              line_rule, mapped_measures, simplex_rule, volume_points, volume_rule)
from eulercut.isoparam import identity_deformation
from eulercut.mesh import build_structured
from oracles import clip_negative, polygon_monomial, triangle_monomial

REF = [(0, 0), (1, 0), (0, 1)]


@pytest.mark.parametrize("degree", range(0, 13))
def test_simplex_rule_exact(degree):
    rule = simplex_rule(degree)
    assert np.all(rule.weights > 0)
    for d in range(degree + 1):
        for a in range(d + 1):
            b = d - a
            val = np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            assert val == pytest.approx(float(triangle_monomial(REF, a, b)), rel=1e-13, abs=1e-15)


def test_unsupported_degree():
    with pytest.raises(QuadratureError, match="supported degrees"):
        simplex_rule(99)


def test_line_rule_exact():
    s, w = line_rule(9)
    for p in range(10):
        assert np.sum(w * s ** p) == pytest.approx(1 / (p + 1), rel=1e-14)


def test_all_negative():
    d = decompose([-1, -1, -1])
    assert len(d.sub_triangles) == 1 and d.sub_triangles[0][1] == NEG
    assert d.interface_segments == []
    assert len(interface_rule(d, 4).weights) == 0


def test_half_edge_cut():
    d = decompose([-1, 1, 1])
    neg = sum(0.5 * abs(np.linalg.det(np.column_stack([t[1] - t[0], t[2] - t[0]])))
              for t, s in d.sub_triangles if s == NEG)
    pos = sum(0.5 * abs(np.linalg.det(np.column_stack([t[1] - t[0], t[2] - t[0]])))
              for t, s in d.sub_triangles if s == POS)
    assert neg == pytest.approx(1 / 8, rel=1e-15) and pos == pytest.approx(3 / 8, rel=1e-15)
    seg = d.interface_segments[0]
    assert {tuple(np.round(p, 15)) for p in seg} == {(0.5, 0.0), (0.0, 0.5)}
    assert interface_rule(d, 4).weights.sum() == pytest.approx(np.sqrt(0.5), rel=1e-15)
    assert volume_rule(d, "NEG", 3).weights.sum() == pytest.approx(1 / 8, rel=1e-15)
    assert volume_rule(d, "ALL", 3).weights.sum() == pytest.approx(1 / 2, rel=1e-15)


def test_monte_carlo_neg_integral():
    d = decompose([-1, 1, 1])
    rule = volume_rule(d, "NEG", 2)
    quad = np.sum(rule.weights * (rule.points[:, 0] + rule.points[:, 1]))
    rng = np.random.default_rng(1)
    p = rng.uniform(0, 1, (400_000, 2))
    keep = (p.sum(axis=1) < 0.5)
    mc = np.sum((p[:, 0] + p[:, 1]) * keep) / len(p)
    assert quad == pytest.approx(mc, abs=3e-3)
    assert quad == pytest.approx(1 / 24, rel=1e-14)


def _rational_values(rng):
    return [Fraction(int(rng.integers(-20, 21)), int(rng.integers(1, 9))) for _ in range(3)]


def test_neg_rules_exact_and_positive_random_patterns():
    rng = np.random.default_rng(2024)
    n_cut = 0
    for trial in range(1000):
        vals = _rational_values(rng)
        deg = int(rng.integers(0, 9))
        rule = volume_rule(decompose([float(v) for v in vals]), "NEG", deg)
        assert np.all(rule.weights > 0)
        poly = clip_negative(REF, vals)
        n_cut += 0 < len(poly) and any(v >= 0 for v in vals)
        if trial % 10:
            continue
        for d in range(deg + 1):
            for a in range(d + 1):
                exact = float(polygon_monomial(poly, a, d - a)) if len(poly) >= 3 else 0.0
                val = np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** (d - a))
                assert val == pytest.approx(exact, rel=1e-12, abs=1e-15)
    assert n_cut > 300


@given(vals=st.tuples(*[st.floats(-5, 5, allow_nan=False)] * 3))
@settings(max_examples=200, deadline=None)
def test_neg_and_pos_partition(vals):
    d = decompose(vals)
    neg = volume_rule(d, "NEG", 0).weights.sum()
    pos = volume_rule(d, "POS", 0).weights.sum()
    assert neg + pos == pytest.approx(0.5, rel=1e-12)


def test_zero_vertex_tie_break():
    # a zero vertex value counts as POS, so the element has no NEG part
    d = decompose([0.0, 1.0, 1.0])
    assert all(s == POS for _, s in d.sub_triangles)
    d = decompose([0.0, -1.0, -1.0])
    assert volume_rule(d, "NEG", 0).weights.sum() == pytest.approx(0.5)


def test_mapped_measures_affine():
    mesh = build_structured(0, 0, 2, 1, 2, 1)
    rule = volume_rule(decompose([-1, 1, 1]), "NEG", 2)
    area = abs(mesh.signed_areas()[0]) * 2
    _, w, _ = mapped_measures(None, 0, rule, "VOLUME", mesh)
    assert w.sum() == pytest.approx(area / 8)
    irule = interface_rule(decompose([-1, 1, 1]), 2)
    x, w, n = mapped_measures(None, 0, irule, "INTERFACE", mesh, [-1, 1, 1])
    v = mesh.vertices[mesh.triangles[0]]
    mid = [(v[0] + v[1]) / 2, (v[0] + v[2]) / 2]
    assert w.sum() == pytest.approx(np.linalg.norm(mid[1] - mid[0]))
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)


def test_circle_area_and_length_converge():
    r = 0.5
    errs = []
    for n in (8, 16, 32):
        mesh = build_structured(-1, -1, 1, 1, n, n)
        phi = np.hypot(*mesh.vertices.T) - r
        theta = identity_deformation(mesh, 1)
        e = np.arange(mesh.n_elements)
        area = volume_points(theta, mesh, phi, e, 2).w.sum()
        length = interface_points(theta, mesh, phi, e, 2).w.sum()
        errs.append((abs(area - np.pi * r ** 2), abs(length - 2 * np.pi * r)))
    errs = np.array(errs)
    assert np.all(np.log2(errs[:-1] / errs[1:]) > 1.5)


def test_interface_normals_point_outward():
    mesh = build_structured(-1, -1, 1, 1, 16, 16)
    phi = np.hypot(*mesh.vertices.T) - 0.5
    ip = interface_points(None, mesh, phi, np.arange(mesh.n_elements), 2)
    radial = ip.x / np.linalg.norm(ip.x, axis=1)[:, None]
    assert np.all(np.einsum("na,na->n", ip.normal, radial) > 0.9)
