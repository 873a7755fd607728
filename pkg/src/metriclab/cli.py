"""Command line entry point: ``python -m metriclab <command> --config FILE --out DIR``.

Exit codes: 0 when every verdict passes, 1 when a verdict fails (reports
are still written), 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments as ex
from . import geodesic
from .config import ConfigError, load_config

COMMANDS = ("sobolev", "converge", "holder", "badset", "curves-check", "potential-check", "oracle")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metriclab", description="Conformal metric distance experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML experiment file (schema v1)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (env METRICLAB_THREADS)")
    ap.add_argument("--stamp", action="store_true", help="embed wall-clock data in JSON and SVG outputs")
    return ap


def _threads(arg) -> int:
    env = os.environ.get("METRICLAB_THREADS")
    if env:
        return max(1, int(env))
    if arg:
        return max(1, arg)
    return os.cpu_count() or 1


def run(command: str, cfg) -> ex.ExperimentReport:
    e = cfg.exponents
    s = cfg.solver
    smp = cfg.sampling
    if command == "curves-check":
        return ex.run_curves(n=s["n"], eps=e["eps"] if e["eps"] is not None else 0.05, seed=smp["seed"])
    family = cfg.build_family()
    if command == "converge":
        return ex.run_convergence(family, rho=e["rho"], n_pairs=smp["N"], seed=smp["seed"], n=s["n"], k=s["k"],
                                  quadrature=s["edge_quadrature"], tol=e["tol"],
                                  subsequence_k_max=e["subsequence_k_max"])
    if command == "sobolev":
        return ex.run_sobolev(family, e["p"], tuple(e["q_list"]), n=s["n"], seed=smp["seed"], n_pairs=smp["N"], k=s["k"],
                              allow_above_gate=e["allow_above_gate"], margin=e["margin"])
    if command == "holder":
        return ex.run_holder(family, e["p"], n=s["n"], k=s["k"], n_pairs=smp["N"], seed=smp["seed"])
    if command == "badset":
        return ex.run_badset(family, delta_factors=tuple(e["delta_factors"]), deltas=e["delta_list"],
                             j0_list=e["j0_list"], n=s["n"])
    if command == "potential-check":
        q = (e["q_list"] or [2.0])[0]
        return ex.run_potential(family, n=s["n"], p=e["p"], q=q, n_pairs=smp["N"] if smp["N"] else 0, k=s["k"],
                                seed=smp["seed"], eps_factor=e["eps"] if e["eps"] is not None else 0.1,
                                eps_sweep=tuple(e["eps_sweep"]))
    raise ValueError(command)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    geodesic.set_threads(_threads(args.threads))
    out = Path(args.out)
    if args.command == "oracle":
        out.mkdir(parents=True, exist_ok=True)
        values = ex.run_oracles()
        doc = {"config_hash": ex.config_hash({"oracle": 1}), "oracles": values}
        (out / "oracles.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
        return 0
    if not args.config:
        print("error: --config is required for this command", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.command)
    except ConfigError as exc:
        for rule, msg in exc.violations:
            print(f"config error [{rule}]: {msg}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        rep = run(args.command, cfg)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    rep.config["run_config"] = cfg.to_dict()
    for r in rep.rows:
        r["config_hash"] = rep.config_hash
    rep.write(out, stamp=args.stamp, formats=tuple(cfg.output["formats"]))
    for name, ok in rep.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if rep.passed else 1
