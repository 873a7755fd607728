import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from metriclab.families import (FAMILY_IDS, UnsupportedFamily, bubble_at, bubble_schedule, bubbles_32,
                                center_subsequence, cinched_limit_distance, cinched_sphere_33, constant_family,
                                make_family, singular_set_31, spike_34)
from metriclab.manifold import FlatTorus, RoundSphere2


def test_singular_radial_oracle_frozen():
    fam = singular_set_31()
    got = [fam.radial_oracle(j) for j in (100, 1000, 10000)]
    assert got == pytest.approx([1.8523216219581733, 1.8160178892583583, 1.7896974391360407], rel=1e-8)
    assert got[0] > got[1] > got[2] > 1 + math.log(2)


def test_singular_radial_oracle_independent():
    # piecewise closed form: core, log branch (antiderivative -ln(1 - ln r)), bridge, flat tail
    j, eta = 1000.0, 2.0
    core = j**-eta * j**eta / (1 + math.log(j))
    logb = math.log(1 - math.log(j**-eta)) - math.log(1 + math.log(j))
    spec = singular_set_31().factor_spec(j)
    bridge = quad(spec.radial_scalar, 1 / j, 2 / j, epsabs=1e-14)[0]
    assert singular_set_31().radial_oracle(j) == pytest.approx(core + logb + bridge + 1 - 2 / j, rel=1e-8)


def test_singular_limit_is_one_plus_log_eta():
    fam = singular_set_31(eta=3.0)
    c = fam.center
    y = c + np.array([1.0, 0.0])
    assert fam.limit_distance(c, y) == pytest.approx(1 + math.log(3.0))
    assert fam.limit_distance(c + [0.5, 0], c + [0.5, 1.0]) == pytest.approx(1.0)


def test_spike_radial_oracle_closed_form():
    # 4 * (1/16) + bridge (average 5/2 over width 1/16) + (1 - 2/16)
    assert spike_34(j_list=(16,)).radial_oracle(16) == pytest.approx(0.25 + 2.5 / 16 + 0.875, rel=1e-8)


def test_cinched_equator_shortcut():
    fam = cinched_sphere_33(0.5)
    d = fam.limit_distance((math.pi / 2, 0), (math.pi / 2, math.pi / 2))
    assert d == pytest.approx(math.pi / 4, abs=1e-9)
    assert fam.limit_distance((0, 0), (math.pi, 0)) == pytest.approx(math.pi, rel=1e-6)


@given(st.floats(0.1, 3.0), st.floats(0, 2 * math.pi), st.floats(0.1, 3.0), st.floats(0, 2 * math.pi))
def test_cinched_limit_bounds(t1, p1, t2, p2):
    S = RoundSphere2()
    x, y = (t1, p1), (t2, p2)
    d = cinched_limit_distance(S, 0.5, x, y)
    from metriclab.manifold import g0_distance

    assert d <= g0_distance(S, x, y) + 1e-9
    assert d >= 0.5 * g0_distance(S, x, y) - 1e-9


def test_bubble_schedule():
    sched = bubble_schedule(2, 6)
    assert len(sched) == 5456
    assert center_subsequence(2, 6) == [16, 80, 336, 1360, 5456]
    for j in center_subsequence(2, 8):
        p, r, k = bubble_at(j)
        assert p == (0.5, 0.5) and r == pytest.approx(2.0 ** (2 - k))


def test_bubble_needs_unit_torus():
    with pytest.raises((UnsupportedFamily, ValueError)):
        make_family("bubbles32", FlatTorus(2, 2.0), [1])


def test_constant_family_scales_flat():
    fam = constant_family(2.5)
    assert fam.limit_distance((0.1, 0.1), (0.4, 0.5)) == pytest.approx(2.5 * 0.5)


def test_make_family_registry():
    for fid in FAMILY_IDS:
        fam = make_family(fid)
        assert fam.id == fid
        assert fam.factor_spec(fam.j_list[0]) is not None
    with pytest.raises(UnsupportedFamily):
        make_family("nope")


def test_spike_alpha_range():
    with pytest.raises(ValueError):
        spike_34(alpha=1.5)
