"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from metriclab import experiments as ex
from metriclab.cli import main
from metriclab.families import bubbles_32, cinched_sphere_33, singular_set_31, spike_34
from metriclab.fields import Constant, lp_norm, sample_factor
from metriclab.geodesic import SolverConfig, metrication_bound, pair_distances
from metriclab.manifold import FlatTorus, build_grid, pairwise_distances

FLOOR3 = metrication_bound(3)


def _fmt(values, spec=".3f") -> str:
    return ", ".join(format(v, spec) for v in values)


def _rows(rep, kind):
    return [r for r in rep.rows if r["kind"] == kind]


def test_criterion_01_solver_envelope(record):
    t0 = time.perf_counter()
    T = FlatTorus(2, 1.0)
    g = build_grid(T, 256)
    one = sample_factor(Constant(T), g)
    rng = np.random.default_rng(2024)
    a = rng.integers(0, g.size, 100)
    b = rng.integers(0, g.size, 100)
    d0 = pairwise_distances(T, g.nodes[a], g.nodes[b])
    res = {}
    for k, upper in ((3, 1.052), (5, 1.019)):
        d = pair_distances(one, a, b, SolverConfig(stencil_radius=k))
        ok = np.all(d >= d0 - 1e-12) and np.all(d <= d0 * upper + 1e-12)
        res[k] = (bool(ok), float(np.max(d[d0 > 0] / d0[d0 > 0])))
    elapsed = time.perf_counter() - t0
    ok = res[3][0] and res[5][0] and elapsed < 60
    record(1, ok, f"max ratio k=3 {res[3][1]:.4f} (<=1.052), k=5 {res[5][1]:.4f} (<=1.019), {elapsed:.1f}s")
    assert ok


def test_criterion_02_singular_limit(record):
    fam = singular_set_31(eta=2.0, j_list=(100, 1000, 10000))
    rep = ex.run_convergence(fam, rho=0.2, n_pairs=50, n=512, k=5, tol=0.025, radial_tol=0.025)
    radial = _rows(rep, "radial")
    errs = [r["rel_error"] for r in radial]
    oracle = [r["oracle"] for r in radial]
    limit = 1 + math.log(2.0)
    decreasing = all(b < a for a, b in zip(oracle, oracle[1:])) and oracle[-1] > limit
    uniform = _rows(rep, "uniform")[-1]
    ok = len(radial) == 3 and max(errs) < 0.025 and decreasing and uniform["max_rel_error"] < 0.025
    record(2, ok, f"radial errors {_fmt(errs, '.2%')}; oracle "
                  f"{_fmt(oracle, '.4f')} -> {limit:.4f}; off-center max error "
                  f"{uniform['max_rel_error']:.2%} at j=1e4")
    assert ok


def test_criterion_03_spike_uniform_convergence(record):
    fam = spike_34(alpha=0.5, j_list=(8, 16, 32, 64))
    rep = ex.run_convergence(fam, n_pairs=200, n=256, k=3)
    errs = [r["max_rel_error"] for r in _rows(rep, "uniform")]
    uniform_ok = all(b <= a for a, b in zip(errs, errs[1:])) and errs[-1] < 0.01 + FLOOR3
    g = build_grid(fam.manifold, 256)
    norms = [lp_norm(sample_factor(fam.factor_spec(j).map(lambda v: np.abs(v - 1.0)), g, average=True), 3.0)
             for j in fam.j_list]
    norms_ok = all(b < a for a, b in zip(norms, norms[1:]))
    ok = uniform_ok and norms_ok
    record(3, ok, f"uniform errors {_fmt(errs, '.2%')} (last < {0.01 + FLOOR3:.2%}: "
                  f"{'ok' if uniform_ok else 'no'}); ||f_j-1||_3 {_fmt(norms, '.3f')} "
                  f"(decreasing: {'ok' if norms_ok else 'no'})")
    assert uniform_ok, errs
    assert norms_ok, norms


def test_criterion_04_sobolev_ratio(record):
    rep = ex.run_sobolev(spike_34(), p=1.5, q_list=(2.0,), n=256, n_pairs=400)
    rows = _rows(rep, "ratio")
    ratios = np.array([r["ratio"] for r in rows])
    med = float(np.median(ratios))
    slack = 0.10 + max(r["ratio_se"] for r in rows) / med
    dev = float(np.max(np.abs(ratios / med - 1)))
    ok = all(r["in_gate"] for r in rows) and dev <= slack
    record(4, ok, f"ratios {_fmt(ratios, '.3f')}; max deviation {dev:.1%} <= {slack:.1%}")
    assert ok


@pytest.fixture(scope="module")
def potential_report():
    return ex.run_potential(singular_set_31(j_list=(10, 100, 1000, 10000)), n=256, p=1.5, q=2.0)


def test_criterion_05_potential_operator(record, potential_report):
    rep = potential_report
    v1 = {r["n"]: r for r in _rows(rep, "v1")}
    spread = max(r["rel_spread"] for r in v1.values())
    refine = abs(v1[256]["mean"] - v1[128]["mean"]) / v1[256]["mean"]
    ratios = np.array([r["ratio"] for r in _rows(rep, "operator")])
    dev = float(np.max(np.abs(ratios / np.median(ratios) - 1)))
    ok = spread <= 1e-10 and refine < 0.01 and dev <= 0.10
    record(5, ok, f"V(1) spread {spread:.1e}, refinement {refine:.3%}, operator ratio deviation {dev:.2%} (q=2 < 6)")
    assert ok


def test_criterion_06_distance_potential(record):
    rep = ex.run_distance_potential(spike_34(), n=256, k=3, n_pairs=100, eps_factor=0.1,
                                    eps_sweep=(0.2, 0.1, 0.05))
    cs = np.array([r["constant"] for r in _rows(rep, "h_bound")])
    stable = bool(np.all(np.abs(cs / np.median(cs) - 1) <= 0.15))
    sweeps = {}
    for r in _rows(rep, "slack_bound"):
        sweeps.setdefault(r["j"], []).append((r["eps_factor"], r["constant"]))
    mono = all(all(b[1] >= a[1] - 1e-12 for a, b in zip(s, s[1:]))
               for s in (sorted(v, reverse=True) for v in sweeps.values()))
    informative = any(c > 0 for v in sweeps.values() for _, c in v)
    ok = stable and mono and informative
    record(6, ok, f"C(0.1 Diam) across j {_fmt(cs, '.4f')}; sweep nondecreasing as eps "
                  f"shrinks at every j: {mono}")
    assert ok


def test_criterion_07_curve_family(record):
    rep = ex.run_curves(n=256, samples=1000)
    fam = _rows(rep, "family")[0]
    tubes = {r["field"]: r["ratio_to_baseline"] for r in _rows(rep, "tube")}
    judged = [tubes[name] for name in ex.JUDGED_TUBE_FIELDS if name != "constant"]
    ok = (fam["endpoint_error"] <= 1e-12 and fam["jacobian_fd_max_rel_error"] <= 1e-6
          and fam["jacobian_bound_holds"] and len(judged) == 4 and max(judged) <= 3.0)
    record(7, ok, f"endpoint error {fam['endpoint_error']:.0e}, FD Jacobian gap {fam['jacobian_fd_max_rel_error']:.1e}, "
                  f"C_fit {fam['jacobian_c_fit']:.4f}, tube ratios vs f=1 {_fmt(judged, '.2f')}")
    assert ok


def test_criterion_08_reverse_holder(record, potential_report):
    rows = _rows(potential_report, "reverse_holder")
    deltas = [r["delta"] for r in rows]
    span = max(deltas) / min(deltas)
    holds = all(r["lhs"] >= r["c_fit"] * r["delta"] ** 2 * (1 - 0.05) for r in rows)
    ok = len(rows) == 3 and span >= 10 * (1 - 1e-9) and holds and all(r["passed"] for r in rows)
    record(8, ok, f"deltas {_fmt(deltas, '.3g')} (span {span:.1f}x), lhs/rhs "
                  f"{_fmt((r['lhs'] / r['rhs'] for r in rows), '.2f')}")
    assert ok


def test_criterion_09_bad_set(record):
    fam = singular_set_31(j_list=(10, 100, 1000, 10000))
    rep = ex.run_badset(fam, delta_factors=(2.0, 4.0, 8.0), n=256)
    sel = sorted((r for r in _rows(rep, "estimate") if r["delta_factor"] == 4.0), key=lambda r: r["j0"])
    contained = all(r["max_center_distance"] <= 0.1 * fam.manifold.period for r in sel)
    areas = [r["area"] for r in sel]
    shrink = all(b <= a for a, b in zip(areas, areas[1:]))
    live = [r for r in sel if r["nodes"] > 0]
    judged = live[-1] if live else sel[-1]
    ok = contained and shrink and judged["box_dimension"] < 0.5 and "fit_residual" in judged
    record(9, ok, f"max center distance {max(r['max_center_distance'] for r in sel):.3f} <= 0.4; areas "
                  f"{_fmt(areas, '.4g')}; box dimension {judged['box_dimension']:.2f} "
                  f"(residual {judged['fit_residual']:.2g}) at j0={judged['j0']}")
    assert ok


def test_criterion_10_bubble_subsequence(record):
    rep = ex.run_convergence(bubbles_32(), rho=0.1, n_pairs=100, n=256, k=3, tol=0.025)
    wit = _rows(rep, "witness")
    uniform = _rows(rep, "uniform")
    wit_ok = len(wit) >= 5 and all(r["ratio"] >= 0.9 for r in wit)
    last = uniform[-1]
    ok = wit_ok and last["max_rel_error"] < 0.025
    record(10, ok, f"witness ratios {_fmt((r['ratio'] for r in wit), '.2f')} over {len(wit)} blocks; "
                   f"subsequence error {last['max_rel_error']:.2%} at j={last['j']}")
    assert ok


def test_criterion_11_cinched_sphere(record):
    rep = ex.run_convergence(cinched_sphere_33(h0=0.5, j_list=(64,)), n_pairs=20, n=256, k=5)
    eq = _rows(rep, "equator")[-1]
    po = _rows(rep, "poles")[-1]
    ok = (eq["limit"] == pytest.approx(math.pi / 4, abs=1e-9) and eq["rel_error"] < 0.03
          and po["rel_error"] < 0.03 and po["limit"] == pytest.approx(math.pi))
    record(11, ok, f"equator {eq['distance']:.4f} vs pi/4 ({eq['rel_error']:.2%}); poles {po['distance']:.4f} "
                   f"vs pi ({po['rel_error']:.2%})")
    assert ok


def test_criterion_12_reproducible_rows(record, tmp_path):
    configs = {
        "converge": 'schema = "v1"\n[family]\nid = "spike34"\nj_list = [8, 16]\n[solver]\nn = 64\n[sampling]\nN = 30\nseed = 7\n',
        "sobolev": 'schema = "v1"\n[family]\nid = "spike34"\nj_list = [8, 16]\n[solver]\nn = 64\n[sampling]\nN = 100\nseed = 7\n',
        "curves-check": 'schema = "v1"\n[solver]\nn = 64\n',
    }
    same = {}
    for cmd, text in configs.items():
        cfg = tmp_path / f"{cmd}.toml"
        cfg.write_text(text)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{cmd}-{run}"
            assert main([cmd, "--config", str(cfg), "--out", str(out)]) in (0, 1)
            outs.append((out / "rows.csv").read_bytes())
        same[cmd] = outs[0] == outs[1]
    ok = all(same.values())
    record(12, ok, "byte-identical rows.csv on rerun: " + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok
