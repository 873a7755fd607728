import pytest

from metriclab.config import ConfigError, parse_config

MINIMAL = """
schema = "v1"
[family]
id = "spike34"
"""


def rules(text, experiment=None):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, experiment)
    return [r for r, _ in exc.value.violations]


def test_minimal_defaults_materialized():
    cfg = parse_config(MINIMAL, "converge")
    d = cfg.to_dict()
    assert d["schema"] == "v1"
    assert d["manifold"] == {"kind": "torus", "dim": 2, "period": 1.0, "radius": 1.0}
    assert d["family"]["alpha"] == 0.5 and d["family"]["j_list"] is None
    assert d["solver"]["n"] == 256 and d["solver"]["k"] == 3 and d["solver"]["edge_quadrature"] == "midpoint"
    assert d["sampling"] == {"N": 200, "seed": 0}
    fam = cfg.build_family()
    assert fam.id == "spike34" and fam.j_list == (8, 16, 32, 64)


def test_alpha_out_of_range_names_rule():
    r = rules(MINIMAL + "alpha = 1.5\n")
    assert any("0 < alpha < 1" in x for x in r)


def test_gate_violation_names_rule():
    text = MINIMAL + "[exponents]\np = 1.5\nq_list = [6.0]\n"
    assert any("q < mp/(m-p)" in x for x in rules(text, "sobolev"))


def test_all_violations_reported():
    text = 'schema = "v2"\nbogus = 1\n[family]\nid = "spike34"\nalpha = 2.0\nwhat = 3\n[solver]\nn = 4096\n'
    r = rules(text)
    assert {"schema-version", "unknown-key", "node-cap: n^m <= max_nodes"} <= set(r)
    assert any("alpha" in x for x in r)
    assert r.count("unknown-key") == 2


def test_parse_error_has_position():
    with pytest.raises(ConfigError) as exc:
        parse_config('schema = "v1"\n[family\n')
    rule, msg = exc.value.violations[0]
    assert rule == "parse" and "line 2" in msg and "column" in msg


def test_wrong_type_and_family_manifold():
    text = 'schema = "v1"\n[manifold]\nkind = "sphere"\n[family]\nid = "spike34"\n[solver]\nn = "big"\n'
    r = rules(text)
    assert "type" in r and "family-manifold" in r


def test_holder_exponent():
    assert "holder-exponent: p > m" in rules(MINIMAL + "[exponents]\np = 1.5\n", "holder")


def test_j_list_rules():
    assert "j-list" in rules(MINIMAL + "j_list = [16, 8]\n")
    assert "j-list" in rules(MINIMAL + "j_list = []\n", "badset")


def test_bubbles_need_unit_torus():
    text = 'schema = "v1"\n[manifold]\nperiod = 2.0\n[family]\nid = "bubbles32"\n'
    assert "family-manifold" in rules(text)


def test_experiment_mismatch():
    assert "experiment" in rules('schema = "v1"\nexperiment = "holder"\n', "sobolev")


def test_cinched_round_trip():
    text = 'schema = "v1"\n[manifold]\nkind = "sphere"\n[family]\nid = "cinched33"\nh0 = 0.25\nj_list = [16, 64]\n'
    fam = parse_config(text).build_family()
    assert fam.id == "cinched33" and fam.params["h0"] == 0.25 and fam.j_list == (16, 64)
