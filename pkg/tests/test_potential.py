import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metriclab.families import singular_set_31
from metriclab.fields import Constant, Custom, ScalarField, sample_factor
from metriclab.manifold import FlatTorus, build_grid
from metriclab.potential import (ExponentRangeError, PotentialConfig, box_counting, check_gate,
                                 distance_potential_check, lq_of_potential, potential_at, potential_field,
                                 reverse_holder_check, self_cell_integral, sobolev_gate)

T = FlatTorus(2, 1.0)
G16 = build_grid(T, 16)
G64 = build_grid(T, 64)
# integral of |z|^-1 over the unit square centred at 0
V1_CONTINUUM = 4 * math.log(1 + math.sqrt(2))


def test_v1_constant_across_nodes():
    v = potential_field(sample_factor(Constant(T), G64)).values
    assert np.ptp(v) <= 1e-10 * v.mean()


def test_v1_matches_continuum_and_refines():
    vals = [potential_field(sample_factor(Constant(T), build_grid(T, n))).values[0] for n in (128, 256)]
    assert vals[1] == pytest.approx(3.52409, abs=5e-5)
    assert abs(vals[1] - vals[0]) / vals[1] < 0.01
    assert vals[1] == pytest.approx(V1_CONTINUUM, rel=1e-3)


def test_self_cell_integral():
    # a ball of volume V in 2D has radius sqrt(V/pi); the integral of r^-1 over it is 2 pi rho
    rho = math.sqrt(0.01 / math.pi)
    assert self_cell_integral(0.01, 2, 1.0) == pytest.approx(2 * math.pi * rho)


def test_fft_matches_direct():
    rng = np.random.default_rng(0)
    f = ScalarField(G16, rng.uniform(0.5, 2.0, G16.size))
    a = potential_field(f, method="fft").values
    b = potential_field(f, method="direct").values
    assert np.allclose(a, b, rtol=1e-10)
    assert potential_at(f, 37) == pytest.approx(b[37], rel=1e-10)


@given(st.floats(0, 3), st.floats(0, 3), st.integers(0, 2**32 - 1))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    u = ScalarField(G16, rng.uniform(0, 1, G16.size))
    w = ScalarField(G16, rng.uniform(0, 1, G16.size))
    lhs = potential_field(ScalarField(G16, a * u.values + b * w.values)).values
    rhs = a * potential_field(u).values + b * potential_field(w).values
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_exclude_mode_is_smaller_for_positive_fields():
    f = sample_factor(Constant(T), G16)
    assert np.all(potential_field(f, PotentialConfig(self_cell="exclude")).values < potential_field(f).values)


def test_gate():
    assert sobolev_gate(2, 1.5) == pytest.approx(6.0)
    check_gate(2, 1.5, 2.0)
    with pytest.raises(ExponentRangeError, match=r"q < mp/\(m-p\)"):
        check_gate(2, 1.5, 6.0)
    with pytest.raises(ExponentRangeError):
        PotentialConfig(t=2.0).exponent(2)


@given(st.floats(0.1, 10.0))
def test_lq_ratio_homogeneous(c):
    f = sample_factor(Custom(T, lambda x: 1 + np.cos(2 * np.pi * x[..., 0]) ** 2), G16)
    base = lq_of_potential(f, 1.5, 2.0).ratio
    assert lq_of_potential(f * c, 1.5, 2.0).ratio == pytest.approx(base, rel=1e-9)


def test_box_counting_dimensions():
    g = build_grid(T, 64)
    full = ScalarField(g, np.ones(g.size))
    dim_full = box_counting(full)[0]
    line = ScalarField(g, (np.arange(g.size) // 64 == 10).astype(float))
    dim_line = box_counting(line)[0]
    point = ScalarField(g, (np.arange(g.size) == 100).astype(float))
    dim_point = box_counting(point)[0]
    assert dim_full == pytest.approx(2.0, abs=1e-9)
    assert dim_line == pytest.approx(1.0, abs=1e-9)
    assert dim_point == pytest.approx(0.0, abs=1e-9)


def test_reverse_holder_at_singular_center():
    fam = singular_set_31()
    g = build_grid(fam.manifold, 128)
    f = sample_factor(fam.factor_spec(100), g, average=True)
    x = g.nearest_node(fam.center)
    rh = reverse_holder_check(f, x, p=2.0, t=0.5, delta=0.5)
    assert rh.passed and rh.lhs >= rh.c_fit * rh.delta**2 * 0.95


def test_distance_potential_variant_needs_f_at_least_one():
    f = ScalarField(G16, np.full(G16.size, 0.5))
    with pytest.raises(ValueError):
        distance_potential_check(f, [0], [5], eps=0.1, variant="excess")
