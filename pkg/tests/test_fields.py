import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from metriclab.families import spike_34
from metriclab.fields import (BubbleField, CinchedBand, Constant, Custom, RadialLogSingular, RadialSpike,
                              ScalarField, lp_norm, lq_distance_norm, sample_factor, sample_node_pairs,
                              smoothstep5, tensor_norm_factor, tensor_norm_field)
from metriclab.manifold import FlatTorus, build_grid


def test_smoothstep_endpoints():
    u = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    assert np.allclose(smoothstep5(u), [0, 0, 0.5, 1, 1])


@given(st.floats(0, 1), st.floats(0, 1))
def test_smoothstep_monotone(a, b):
    lo, hi = sorted((a, b))
    assert smoothstep5(lo) <= smoothstep5(hi) + 1e-15


def test_spike_profile_pieces():
    T = FlatTorus(2, 1.0)
    s = RadialSpike(T, (0.5, 0.5), 16, 0.5)
    assert s.radial_scalar(0.0) == pytest.approx(4.0)
    assert s.radial_scalar(0.03) == pytest.approx(4.0)
    assert s.radial_scalar(0.2) == 1.0
    vals = s.radial(np.linspace(0, 0.3, 200))
    assert np.all(np.diff(vals) <= 1e-12)


def test_log_singular_pieces():
    s = RadialLogSingular(FlatTorus(2, 4.0), (2.0, 2.0), 100, 2.0)
    assert s.radial_scalar(0.0) == pytest.approx(100**2 / (1 + math.log(100)))
    r = 0.005
    assert s.radial_scalar(r) == pytest.approx(1 / (r * (1 - math.log(r))))
    assert s.radial_scalar(0.5) == 1.0
    rs = np.linspace(0, 0.05, 2001)
    assert np.allclose(s.radial(rs), [s.radial_scalar(x) for x in rs], rtol=1e-12)


def test_bubble_smallest_ball_wins():
    T = FlatTorus(2, 1.0)
    b = BubbleField(T, [((0.5, 0.5), 0.25), ((0.5, 0.5), 0.0625)])
    vals = b(np.array([[0.5, 0.5], [0.5, 0.7], [0.0, 0.0]]))
    assert vals[0] == pytest.approx(16.0)
    assert vals[1] == pytest.approx(4.0)
    assert vals[2] == pytest.approx(1.0)


def test_constant_norm_scaling():
    g = build_grid(FlatTorus(2, 1.0), 16)
    f = sample_factor(Constant(g.manifold, 3.0), g)
    # |f^2 g0| = sqrt(m) f^2
    assert lp_norm(tensor_norm_field(f), 1) == pytest.approx(math.sqrt(2) * 9)
    assert lp_norm(tensor_norm_field(f, "difference"), 2) == pytest.approx(math.sqrt(2) * 8)
    assert lp_norm(f * 2.0, 2) == pytest.approx(6.0)


@given(st.floats(0.1, 5.0), st.floats(0.5, 4.0))
def test_lp_norm_homogeneous(c, p):
    g = build_grid(FlatTorus(2, 1.0), 8)
    f = sample_factor(Custom(g.manifold, lambda x: 1 + np.sin(2 * np.pi * x[..., 0]) ** 2), g)
    assert lp_norm(f * c, p) == pytest.approx(c * lp_norm(f, p), rel=1e-10)


def test_spike_difference_norm_matches_radial_quadrature():
    fam = spike_34(j_list=(16,))
    spec = fam.factor_spec(16)
    oracle = quad(lambda r: math.sqrt(2) * abs(spec.radial_scalar(r) ** 2 - 1) * 2 * math.pi * r, 0, 2 / 16,
                  points=[1 / 16], epsabs=1e-13)[0]
    g = build_grid(fam.manifold, 256)
    val = lp_norm(sample_factor(tensor_norm_factor(spec, "difference", 1.0), g, average=True), 1)
    assert val == pytest.approx(oracle, rel=0.02)


def test_refinement_smooth_profile():
    T = FlatTorus(2, 1.0)
    spec = Custom(T, lambda x: 1.5 + np.cos(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1]))
    a = lp_norm(sample_factor(spec, build_grid(T, 32)), 3)
    b = lp_norm(sample_factor(spec, build_grid(T, 64)), 3)
    assert a == pytest.approx(b, rel=1e-6)


def test_cinched_band_floor():
    T = FlatTorus(2, 1.0)
    band = CinchedBand(T, 16, 0.5, 0.5)
    v = band(np.array([[0.3, 0.5], [0.3, 0.0]]))
    assert v[0] == pytest.approx(0.5) and v[1] == pytest.approx(1.0)


def test_csv_round_trip(tmp_path):
    g = build_grid(FlatTorus(2, 1.0), 8)
    f = sample_factor(Custom(g.manifold, lambda x: 1 + x[..., 0]), g)
    f.write_csv(tmp_path / "f.csv")
    back = ScalarField.read_csv(g, tmp_path / "f.csv")
    assert np.array_equal(back.values, f.values)


def test_pairs_and_mc_norm():
    g = build_grid(FlatTorus(2, 1.0), 16)
    a, b = sample_node_pairs(g, 500, seed=3)
    a2, b2 = sample_node_pairs(g, 500, seed=3)
    assert np.array_equal(a, a2) and np.array_equal(b, b2)
    d = np.full(500, 0.5)
    val, se = lq_distance_norm(d, 2.0, 1.0)
    assert val == pytest.approx(0.5) and se == pytest.approx(0.0, abs=1e-12)
