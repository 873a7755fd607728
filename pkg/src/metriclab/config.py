"""Experiment configuration files (TOML, schema ``v1``).

Example::

    schema = "v1"

    [manifold]
    kind = "torus"
    dim = 2
    period = 1.0

    [family]
    id = "spike34"
    alpha = 0.5
    j_list = [8, 16, 32, 64]

    [solver]
    n = 256
    k = 3

Every section is optional; defaults are filled in and recorded in the
report. Unknown keys are rejected and all violations are reported together.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import tomli

from .families import FAMILY_IDS, ExampleFamily, make_family
from .geodesic import QUADRATURES
from .manifold import DEFAULT_MAX_NODES, make_manifold
from .potential import sobolev_gate

SCHEMA = "v1"
EXPERIMENTS = ("sobolev", "converge", "holder", "badset", "curves-check", "potential-check")

_NUM = (int, float)
_SECTIONS = {
    "manifold": {"kind": (str, "torus"), "dim": (int, 2), "period": (_NUM, 1.0), "radius": (_NUM, 1.0)},
    "family": {"id": (str, None), "j_list": (list, None), "eta": (_NUM, None), "alpha": (_NUM, None),
               "h0": (_NUM, None), "c": (_NUM, None), "center": (list, None), "k_min": (int, None),
               "k_max": (int, None)},
    "solver": {"n": (int, 256), "k": (int, 3), "edge_quadrature": (str, "midpoint"), "max_nodes": (int, DEFAULT_MAX_NODES),
               "average": (bool, False)},
    "sampling": {"N": (int, 200), "seed": (int, 0)},
    "exponents": {"p": (_NUM, None), "q_list": (list, None), "delta_list": (list, None),
                  "delta_factors": (list, [2.0, 4.0, 8.0]), "eps": (_NUM, None), "eps_sweep": (list, [0.2, 0.1, 0.05]),
                  "rho": (_NUM, 0.0), "j0_list": (list, None), "tol": (_NUM, 0.01), "margin": (_NUM, 0.05),
                  "subsequence_k_max": (int, 8), "allow_above_gate": (bool, False)},
    "output": {"directory": (str, None), "formats": (list, ["json", "csv", "svg"])},
}
_FAMILY_PARAMS = {"singular31": ("eta", "center"), "spike34": ("alpha", "center"), "cinched33": ("h0",),
                  "bubbles32": ("k_min", "k_max"), "constant": ("c",)}
_FAMILY_DEFAULTS = {"eta": 2.0, "alpha": 0.5, "h0": 0.5, "c": 1.0, "k_min": 2, "k_max": 6}
_P_DEFAULT = {"sobolev": 1.5, "holder": 3.0, "potential-check": 1.5}


class ConfigError(ValueError):
    """All violations found in a configuration, each as ``(rule, message)``."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"[{r}] {m}" for r, m in self.violations))


@dataclass
class RunConfig:
    experiment: str | None
    manifold: dict
    family: dict
    solver: dict
    sampling: dict
    exponents: dict
    output: dict

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "experiment": self.experiment, "manifold": self.manifold, "family": self.family,
                "solver": self.solver, "sampling": self.sampling, "exponents": self.exponents, "output": self.output}

    def build_manifold(self):
        m = self.manifold
        return make_manifold(m["kind"], m["dim"], m["period"], m["radius"])

    def build_family(self) -> ExampleFamily:
        f = dict(self.family)
        fid = f.pop("id")
        js = f.pop("j_list")
        params = {k: (tuple(v) if isinstance(v, list) else v) for k, v in f.items() if k in _FAMILY_PARAMS[fid]}
        return make_family(fid, self.build_manifold(), js, **params)


def _type_ok(value, typ) -> bool:
    if typ is _NUM:
        return isinstance(value, _NUM) and not isinstance(value, bool)
    if typ is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, typ)


def parse_config(text: str, experiment: str | None = None) -> RunConfig:
    """Parse and validate a configuration document.

    Raises
    ------
    ConfigError
        With every violation found; a TOML syntax error is reported alone
        with its line and column.
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        where = f"line {line}, column {col}: " if line is not None else ""
        raise ConfigError([("parse", f"{where}{exc}")]) from None
    errs = []
    schema = doc.pop("schema", None)
    if schema != SCHEMA:
        errs.append(("schema-version", f"schema must be {SCHEMA!r}, got {schema!r}"))
    exp = doc.pop("experiment", experiment)
    if exp is not None and exp not in EXPERIMENTS:
        errs.append(("experiment", f"unknown experiment {exp!r}"))
    if experiment is not None and exp != experiment:
        errs.append(("experiment", f"config is for {exp!r} but the command is {experiment!r}"))
    sections = {}
    for name in list(doc):
        if name not in _SECTIONS:
            errs.append(("unknown-key", f"unknown top-level key {name!r}"))
            continue
        if not isinstance(doc[name], dict):
            errs.append(("type", f"{name} must be a table"))
            continue
    for name, schema_s in _SECTIONS.items():
        given = doc.get(name, {}) if isinstance(doc.get(name, {}), dict) else {}
        sec = {}
        for key, value in given.items():
            if key not in schema_s:
                errs.append(("unknown-key", f"unknown key {name}.{key}"))
                continue
            typ = schema_s[key][0]
            if not _type_ok(value, typ):
                errs.append(("type", f"{name}.{key} has the wrong type ({type(value).__name__})"))
                continue
            sec[key] = float(value) if typ is _NUM else value
        for key, (_, default) in schema_s.items():
            sec.setdefault(key, copy.deepcopy(default))
        sections[name] = sec
    _validate(sections, exp, errs)
    if errs:
        raise ConfigError(errs)
    return RunConfig(exp, sections["manifold"], sections["family"], sections["solver"], sections["sampling"],
                     sections["exponents"], sections["output"])


def _validate(s: dict, exp: str | None, errs: list) -> None:
    mf, fam, sol, smp, ex = s["manifold"], s["family"], s["solver"], s["sampling"], s["exponents"]
    if mf["kind"] not in ("torus", "sphere"):
        errs.append(("manifold-kind", "manifold.kind must be 'torus' or 'sphere'"))
    elif mf["kind"] == "torus" and not 2 <= mf["dim"] <= 4:
        errs.append(("manifold-dim", "torus dimension must be between 2 and 4"))
    elif mf["kind"] == "sphere" and mf["dim"] != 2:
        errs.append(("manifold-dim", "the round sphere has dimension 2"))
    for key in ("period", "radius"):
        if not mf[key] > 0:
            errs.append(("positive", f"manifold.{key} must be positive"))
    m = mf["dim"]

    needs_family = exp not in (None, "curves-check")
    fid = fam["id"]
    if fid is None:
        if needs_family:
            errs.append(("family-id", "family.id is required"))
    elif fid not in FAMILY_IDS:
        errs.append(("family-id", f"family.id must be one of {FAMILY_IDS}"))
    else:
        want = "sphere" if fid == "cinched33" else "torus"
        if mf["kind"] != want:
            errs.append(("family-manifold", f"family {fid} needs a {want}"))
        elif fid == "bubbles32" and (mf["dim"] != 2 or mf["period"] != 1.0):
            errs.append(("family-manifold", "family bubbles32 needs the unit 2-torus"))
        for key in ("eta", "alpha", "h0", "c", "center", "k_min", "k_max"):
            if fam[key] is not None and key not in _FAMILY_PARAMS[fid]:
                errs.append(("unknown-key", f"family.{key} is not a parameter of {fid}"))
        for key in _FAMILY_PARAMS[fid]:
            if fam[key] is None and key in _FAMILY_DEFAULTS:
                fam[key] = _FAMILY_DEFAULTS[key]
        for key in ("eta", "alpha", "h0", "c", "center", "k_min", "k_max"):
            if fam[key] is None:
                del fam[key]
        if fid == "spike34" and not 0 < fam["alpha"] < 1:
            errs.append(("spike-exponent: 0 < alpha < 1", f"alpha={fam['alpha']} must satisfy 0 < alpha < 1"))
        if fid == "singular31" and not fam["eta"] > 1:
            errs.append(("singular-exponent: eta > 1", f"eta={fam['eta']} must exceed 1"))
        if fid == "cinched33" and not 0 < fam["h0"] < 1:
            errs.append(("throat-depth: 0 < h0 < 1", f"h0={fam['h0']} must lie in (0, 1)"))
        if fid == "constant" and not fam["c"] > 0:
            errs.append(("positive", "family.c must be positive"))
        if "center" in fam and len(fam["center"]) != m:
            errs.append(("family-center", f"family.center needs {m} coordinates"))
        js = fam["j_list"]
        if js is not None:
            if not js:
                errs.append(("j-list", "family.j_list must not be empty"))
            elif not all(_type_ok(j, _NUM) and j >= 1 for j in js):
                errs.append(("j-list", "family.j_list entries must be numbers >= 1"))
            elif any(b <= a for a, b in zip(js, js[1:])):
                errs.append(("j-list", "family.j_list must be strictly increasing"))

    n, k = sol["n"], sol["k"]
    if n < 4:
        errs.append(("resolution", "solver.n must be at least 4"))
    if k < 1:
        errs.append(("stencil-radius", "solver.k must be >= 1"))
    elif n < 2 * k + 2:
        errs.append(("stencil-radius", f"solver.n={n} is too small for stencil radius {k}"))
    if sol["edge_quadrature"] not in QUADRATURES:
        errs.append(("quadrature", f"solver.edge_quadrature must be one of {QUADRATURES}"))
    nodes = n**m if mf["kind"] == "torus" else (n // 2 - 1) * n + 2
    if nodes > sol["max_nodes"]:
        errs.append(("node-cap: n^m <= max_nodes", f"{nodes} grid nodes exceed the cap {sol['max_nodes']}"))
    if mf["kind"] == "sphere" and n % 2:
        errs.append(("resolution", "sphere grids need an even n"))
    # potential-check treats N = 0 as "skip the distance rows"
    if smp["N"] < (0 if exp == "potential-check" else 1):
        errs.append(("sampling", "sampling.N must be positive"))
    if not 0 <= smp["seed"] < 2**64:
        errs.append(("sampling", "sampling.seed must be a 64-bit unsigned integer"))

    p = ex["p"]
    if p is None and exp in _P_DEFAULT:
        p = ex["p"] = _P_DEFAULT[exp]
    if exp == "sobolev" and ex["q_list"] is None:
        ex["q_list"] = [2.0]
    if exp in ("sobolev", "potential-check") and p is not None:
        if not 0 < p < m:
            errs.append(("sobolev-gate: q < mp/(m-p)", f"p={p} must satisfy 0 < p < m={m}"))
        else:
            gate = sobolev_gate(m, p)
            qs = ex["q_list"] or [2.0]
            for q in qs:
                if not _type_ok(q, _NUM) or not q > 0:
                    errs.append(("type", "exponents.q_list entries must be positive numbers"))
                elif q >= gate * (1 - ex["margin"]) and not ex["allow_above_gate"]:
                    errs.append(("sobolev-gate: q < mp/(m-p)",
                                 f"q={q} is not below mp/(m-p)={gate:.6g} with margin {ex['margin']:g}"))
    if exp == "holder" and p is not None and not p > m:
        errs.append(("holder-exponent: p > m", f"p={p} must exceed m={m}"))
    if ex["rho"] < 0:
        errs.append(("positive", "exponents.rho must be nonnegative"))
    if exp == "badset" and fam.get("j_list") is not None and fam["j_list"] == []:
        pass  # reported under j-list
    if exp == "badset" and fam.get("j_list") is None and fid is not None:
        errs.append(("j-list", "badset needs an explicit family.j_list"))
    if ex["eps"] is not None and not ex["eps"] > 0:
        errs.append(("positive", "exponents.eps must be positive"))
    fmts = s["output"]["formats"]
    if any(f not in ("json", "csv", "svg") for f in fmts):
        errs.append(("output-format", "output.formats entries must be json, csv or svg"))


def load_config(path, experiment: str | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), experiment)
