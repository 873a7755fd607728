import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metriclab import geodesic as ge
from metriclab.fields import Constant, Custom, RadialSpike, sample_factor
from metriclab.geodesic import (NotStencilAdjacent, SolverConfig, edge_weight, metrication_bound, pair_distance,
                                pair_distances, primitive_offsets, single_source, stencil_graph)
from metriclab.manifold import FlatTorus, RoundSphere2, build_grid

T = FlatTorus(2, 1.0)
G64 = build_grid(T, 64)
ONE64 = sample_factor(Constant(T), G64)
CFG3 = SolverConfig(stencil_radius=3)


@pytest.fixture(scope="module")
def flat_rows():
    return {s: single_source(ONE64, s, CFG3).dist for s in (0, 1000, 2345)}


def test_metrication_bound_values():
    assert metrication_bound(3) == pytest.approx(0.0513167, abs=1e-7)
    assert metrication_bound(5) == pytest.approx(1 - math.cos(math.atan(0.2)))
    assert metrication_bound(1) > metrication_bound(2) > metrication_bound(3)


def test_primitive_offsets():
    assert len(primitive_offsets(1, 2)) == 4
    assert len(primitive_offsets(3, 2)) == 16
    for o in primitive_offsets(4, 2):
        assert math.gcd(*map(int, o)) == 1
    assert len(primitive_offsets(1, 3)) == 13


def test_flat_axis_distance_exact():
    g = build_grid(T, 128)
    one = sample_factor(Constant(T), g)
    d = pair_distance(one, (0, 0), (0.5, 0), CFG3).distance
    assert 0.5 <= d <= 0.5 * (1 + metrication_bound(3))
    assert d == pytest.approx(0.5, rel=0.005)


@given(st.integers(0, G64.size - 1))
def test_flat_envelope(target):
    dist = single_source(ONE64, 0, CFG3).dist[target]
    d0 = G64.distances_from(G64.nodes[0])[target]
    assert d0 - 1e-12 <= dist <= d0 * (1 + metrication_bound(3)) + 1e-12


@given(st.floats(0.2, 5.0))
def test_constant_scaling(flat_rows, c):
    f = sample_factor(Constant(T, c), G64)
    assert np.allclose(single_source(f, 1000, CFG3).dist, c * flat_rows[1000], rtol=1e-12)


def test_symmetry(flat_rows):
    spec = RadialSpike(T, (0.5, 0.5), 8, 0.5)
    f = sample_factor(spec, G64)
    a = np.array([0, 1000, 2345])
    b = np.array([2345, 0, 1000])
    assert np.allclose(pair_distances(f, a, b, CFG3), pair_distances(f, b, a, CFG3), rtol=1e-12)


def test_monotone_in_factor(flat_rows):
    bump = sample_factor(Custom(T, lambda x: 1 + np.sin(np.pi * x[..., 0]) ** 2), G64)
    assert np.all(single_source(bump, 2345, CFG3).dist >= flat_rows[2345] - 1e-12)


def test_triangle_inequality(flat_rows):
    d0, d1 = flat_rows[0], flat_rows[1000]
    assert np.all(d0 <= d0[1000] + d1 + 1e-12)


def test_edge_weight_and_adjacency():
    g = build_grid(T, 16)
    f = sample_factor(Constant(T, 2.0), g)
    u, v = g.node_index(0, 0), g.node_index(1, 3)
    assert edge_weight(f, u, v, CFG3) == pytest.approx(2 * math.hypot(1, 3) / 16)
    with pytest.raises(NotStencilAdjacent):
        edge_weight(f, u, g.node_index(4, 0), CFG3)


def test_quadrature_rules_agree_on_constants():
    g = build_grid(T, 32)
    f = sample_factor(Constant(T, 1.7), g)
    rows = [single_source(f, 5, SolverConfig(3, q)).dist for q in ge.QUADRATURES]
    for r in rows[1:]:
        assert np.allclose(r, rows[0], rtol=1e-12)


def test_graph_needs_room():
    with pytest.raises(ValueError):
        stencil_graph(build_grid(T, 6), 3)


def test_sphere_quarter_and_antipode():
    S = RoundSphere2()
    g = build_grid(S, 128)
    one = sample_factor(Constant(S), g)
    cfg = SolverConfig(stencil_radius=5)
    quarter = pair_distance(one, (math.pi / 2, 0), (math.pi / 2, math.pi / 2), cfg).distance
    poles = pair_distance(one, (0, 0), (math.pi, 0), cfg).distance
    assert math.pi / 2 <= quarter + 1e-9 <= math.pi / 2 * 1.02
    assert poles == pytest.approx(math.pi, rel=0.01)


def test_threads_do_not_change_results(flat_rows):
    src = np.arange(0, G64.size, 97)
    base = np.array([r for _, r in ge.distance_rows(ONE64, src, CFG3)])
    ge.set_threads(3)
    try:
        par = np.array([r for _, r in ge.distance_rows(ONE64, src, CFG3)])
    finally:
        ge.set_threads(1)
    assert np.array_equal(base, par)


def test_distance_csv(tmp_path, flat_rows):
    df = single_source(ONE64, 0, CFG3)
    df.write_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "node,distance" and len(lines) == G64.size + 1
