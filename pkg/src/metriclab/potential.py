"""Riesz-type potentials ``V f(x) = int f(z) d(x, z)^(-t) dV(z)`` on grids.

Also the inequality checks built on them: distance against potential,
reverse Hölder, and super-level ("bad") sets with a box-counting dimension.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import ScalarField, _unit_ball_volume
from .manifold import Grid, distances_from


class ExponentRangeError(ValueError):
    pass


@dataclass(frozen=True)
class PotentialConfig:
    """Kernel exponent and self-cell treatment.

    ``t=None`` means ``m - 1``. ``self_cell`` is ``"radial_correction"``
    (integrate ``r^-t`` over the equal-volume ball) or ``"exclude"``.
    """

    t: float | None = None
    self_cell: str = "radial_correction"

    def __post_init__(self):
        if self.self_cell not in ("radial_correction", "exclude"):
            raise ValueError("self_cell must be 'radial_correction' or 'exclude'")
        if self.t is not None and not self.t > 0:
            raise ValueError("kernel exponent t must be positive")

    def exponent(self, m: int) -> float:
        t = m - 1.0 if self.t is None else float(self.t)
        if t >= m:
            raise ExponentRangeError(f"kernel exponent t={t} must be below the dimension m={m} for V(1) to be finite")
        return t


def self_cell_integral(volume, m: int, t: float) -> np.ndarray:
    """``int r^-t`` over a Euclidean ball of the given volume."""
    rho = (np.asarray(volume, dtype=float) / _unit_ball_volume(m)) ** (1.0 / m)
    return m * _unit_ball_volume(m) * rho ** (m - t) / (m - t)


def _self_term(grid: Grid, t: float, cfg: PotentialConfig) -> np.ndarray:
    if cfg.self_cell == "exclude":
        return np.zeros(grid.size)
    return self_cell_integral(grid.cell_volume, grid.dim, t)


def _kernel_row(grid: Grid, x: int, t: float) -> np.ndarray:
    d = grid.distances_from(grid.nodes[x])
    k = np.zeros_like(d)
    nz = d > 0
    k[nz] = d[nz] ** (-t)
    return k


def potential_at(f: ScalarField, x: int, cfg: PotentialConfig | None = None) -> float:
    """Potential of ``f`` at node ``x`` by direct summation."""
    cfg = cfg or PotentialConfig()
    grid = f.grid
    t = cfg.exponent(grid.dim)
    k = _kernel_row(grid, x, t)
    return float(np.sum(f.values * k * grid.cell_volume) + f.values[x] * _self_term(grid, t, cfg)[x])


def _direct_field(values: np.ndarray, grid: Grid, t: float, cfg: PotentialConfig, block: int = 512) -> np.ndarray:
    out = np.empty(grid.size)
    fw = values * grid.cell_volume
    for lo in range(0, grid.size, block):
        hi = min(lo + block, grid.size)
        rows = np.stack([distances_from(grid.manifold, grid.nodes[i], grid.nodes) for i in range(lo, hi)])
        with np.errstate(divide="ignore"):
            k = np.where(rows > 0, rows, np.inf) ** (-t)
        out[lo:hi] = k @ fw
    return out + values * _self_term(grid, t, cfg)


def _fft_field(values: np.ndarray, grid: Grid, t: float, cfg: PotentialConfig) -> np.ndarray:
    # the kernel depends only on the index difference, so V is a circular convolution
    shape = grid.shape
    kern = _kernel_row(grid, 0, t).reshape(shape)
    kern.flat[0] = _self_term(grid, t, cfg)[0] / grid.cell_volume[0]
    vals = values.reshape(shape)
    out = np.fft.irfftn(np.fft.rfftn(vals) * np.fft.rfftn(kern), s=shape, axes=range(len(shape)))
    return np.clip(out.ravel() * grid.cell_volume[0], 0.0, None)


def potential_field(f: ScalarField, cfg: PotentialConfig | None = None, method: str = "auto") -> ScalarField:
    """Potential at every node.

    Parameters
    ----------
    method : {"auto", "fft", "direct"}
        ``fft`` (torus only) uses the translation invariance of the kernel;
        ``auto`` picks it whenever possible.
    """
    cfg = cfg or PotentialConfig()
    grid = f.grid
    t = cfg.exponent(grid.dim)
    torus = grid.manifold.kind == "torus"
    if method == "auto":
        method = "fft" if torus else "direct"
    if method == "fft":
        if not torus:
            raise ValueError("the FFT path needs a torus grid")
        vals = _fft_field(f.values, grid, t, cfg)
    elif method == "direct":
        vals = _direct_field(f.values, grid, t, cfg)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ScalarField(grid, vals)


def sobolev_gate(m: int, p: float) -> float:
    """Critical exponent ``mp/(m-p)`` (infinite when ``p >= m``)."""
    return math.inf if p >= m else m * p / (m - p)


def check_gate(m: int, p: float, q: float, margin: float = 0.05) -> None:
    if not 0 < p < m:
        raise ExponentRangeError(f"need 0 < p < m, got p={p}, m={m}")
    gate = sobolev_gate(m, p)
    if not q < gate * (1 - margin):
        raise ExponentRangeError(f"q={q} violates the gate q < mp/(m-p) = {gate:.6g} (margin {margin:.0%})")


@dataclass(frozen=True)
class PotentialNorms:
    v_norm: float
    f_norm: float
    ratio: float


def lq_of_potential(f: ScalarField, p: float, q: float, cfg: PotentialConfig | None = None,
                    margin: float = 0.05, enforce_gate: bool = True) -> PotentialNorms:
    """``||V f||_q``, ``||f||_p`` and their ratio.

    ``enforce_gate=False`` lets callers record divergence witnesses above
    the critical exponent.
    """
    from .fields import lp_norm

    if enforce_gate:
        check_gate(f.grid.dim, p, q, margin)
    v = potential_field(f, cfg)
    vn, fn = lp_norm(v, q), lp_norm(f, p)
    return PotentialNorms(vn, fn, vn / fn if fn > 0 else math.inf)


# ---------------------------------------------------------------------------
# distance against potential


@dataclass(frozen=True)
class DistancePotentialReport:
    variant: str
    eps: float
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)

    @property
    def ratios(self) -> np.ndarray:
        return np.where(self.rhs > 0, self.lhs / np.where(self.rhs > 0, self.rhs, 1.0), 0.0)

    @property
    def constant(self) -> float:
        """Empirical constant: the largest ``lhs / rhs`` over the pairs."""
        return float(np.max(self.ratios))


def distance_potential_check(f: ScalarField, a, b, eps: float = 0.0, variant: str = "total",
                             solver=None, cfg: PotentialConfig | None = None,
                             flat_distances=None, distances=None) -> DistancePotentialReport:
    """Compare graph distances with potentials of the metric.

    ``variant="total"``: ``lhs = d_h``, ``rhs = V(|h|^(1/2))(x) + V(|h|^(1/2))(y)``.
    ``variant="excess"``: ``lhs = max(0, d_h - d_flat - eps)`` with
    ``|h - g0|^(1/2)`` in the potentials; requires ``f >= 1``. ``d_flat``
    is the graph distance for ``f = 1`` on the same stencil, so the stencil
    bias cancels; pass ``flat_distances`` (and ``distances`` for ``d_h``)
    to reuse them across calls.
    """
    from .geodesic import SolverConfig, pair_distances
    from .fields import Constant, sample_factor

    solver = solver or SolverConfig()
    m = f.grid.dim
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    d = pair_distances(f, a, b, solver) if distances is None else np.asarray(distances, dtype=float)
    if variant == "total":
        g = ScalarField(f.grid, m**0.25 * f.values)
        lhs = d
    elif variant == "excess":
        if np.any(f.values < 1.0):
            raise ValueError("the h >= g0 variant needs f >= 1 everywhere")
        g = ScalarField(f.grid, np.sqrt(math.sqrt(m) * np.abs(f.values**2 - 1.0)))
        if flat_distances is None:
            flat = sample_factor(Constant(f.grid.manifold, 1.0), f.grid)
            flat_distances = pair_distances(flat, a, b, solver)
        lhs = np.maximum(0.0, d - np.asarray(flat_distances) - eps)
    else:
        raise ValueError("variant must be 'total' or 'excess'")
    v = potential_field(g, cfg).values
    return DistancePotentialReport(variant, eps, lhs, v[a] + v[b])


# ---------------------------------------------------------------------------
# reverse Hölder


@dataclass(frozen=True)
class ReverseHolder:
    lhs: float
    rhs: float
    c_fit: float
    delta: float
    passed: bool


def reverse_holder_check(f: ScalarField, x: int, p: float, t: float, delta: float, tol: float = 0.05) -> ReverseHolder:
    """Check ``int f^p d^-t >= C delta^p`` given ``V_(m-1) f(x) >= delta``.

    For ``p > 1`` the constant is ``(int d^-s)^(1-p)`` with
    ``s = (p(m-1) - t)/(p-1)``, evaluated by the same quadrature as the
    left side. For ``p = 1`` it is ``Diam^(m-1-t)`` (needs ``t >= m-1``).
    """
    grid = f.grid
    m = grid.dim
    if not p >= 1:
        raise ValueError("p must be >= 1")
    if not m - p < t < m:
        raise ValueError(f"need m - p < t < m, got t={t}")
    v = potential_at(f, x, PotentialConfig(t=m - 1))
    if v < delta:
        raise ValueError(f"precondition fails: potential {v:.6g} is below delta={delta:.6g}")
    fp = ScalarField(grid, f.values**p)
    lhs = potential_at(fp, x, PotentialConfig(t=t))
    if p == 1:
        if t < m - 1:
            raise ValueError("p = 1 needs t >= m - 1")
        c = grid.manifold.diameter ** (m - 1 - t)
    else:
        s = (p * (m - 1) - t) / (p - 1)
        ones = ScalarField(grid, np.ones(grid.size))
        c = potential_at(ones, x, PotentialConfig(t=s)) ** (1 - p)
    rhs = c * delta**p
    return ReverseHolder(lhs, rhs, c, delta, bool(lhs >= rhs * (1 - tol)))


# ---------------------------------------------------------------------------
# bad sets


@dataclass(frozen=True)
class BadSetEstimate:
    delta: float
    j0: float
    j_window: tuple
    indicator: ScalarField = field(repr=False)
    area: float
    box_dimension: float
    fit_residual: float
    box_sizes: tuple = ()
    box_counts: tuple = ()

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "j0": self.j0,
            "j_window": list(self.j_window),
            "area": self.area,
            "box_dimension": self.box_dimension,
            "fit_residual": self.fit_residual,
            "box_sizes": list(self.box_sizes),
            "box_counts": list(self.box_counts),
        }


def box_counting(indicator: ScalarField, sizes=(2, 4, 8, 16)) -> tuple[float, float, list, list]:
    """Box-counting dimension of a 0/1 field on a torus grid.

    Returns ``(dimension, residual, box_lengths, counts)``. The slope of
    ``log N`` against ``log(1/r)`` is clipped to ``[0, m]``; an empty set has
    dimension 0.
    """
    grid = indicator.grid
    if grid.manifold.kind != "torus":
        raise ValueError("box counting is implemented for torus grids")
    n, m = grid.n, grid.dim
    usable = [s for s in sizes if n % s == 0 and n // s >= 1]
    if len(usable) < 4:
        raise ValueError(f"box counting needs at least 4 usable scales, got {len(usable)}")
    mask = indicator.values.reshape(grid.shape) > 0
    counts = []
    for s in usable:
        shp = []
        for _ in range(m):
            shp += [n // s, s]
        counts.append(int(np.count_nonzero(mask.reshape(shp).any(axis=tuple(range(1, 2 * m, 2))))))
    lengths = [s * grid.spacing for s in usable]
    if counts[0] == 0:
        return 0.0, 0.0, lengths, counts
    x = np.log(1.0 / np.array(lengths))
    y = np.log(np.array(counts, dtype=float))
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(math.sqrt(res[0] / len(x))) if res.size else 0.0
    return float(np.clip(coef[0], 0.0, m)), resid, lengths, counts


def tail_max(potentials, js, j0) -> tuple[np.ndarray, tuple]:
    """Node-wise max of the potentials with ``j >= j0`` (the limsup surrogate)."""
    sel = [i for i, j in enumerate(js) if j >= j0]
    if not sel:
        raise ValueError(f"no j >= j0={j0} in the window")
    top = np.max(np.stack([np.asarray(potentials[i]) for i in sel]), axis=0)
    return top, tuple(js[i] for i in sel)


def bad_set_estimate(fields, js, delta: float, j0: float, cfg: PotentialConfig | None = None,
                     potentials=None, sizes=(2, 4, 8, 16)) -> BadSetEstimate:
    """Estimate ``{x : max_(j >= j0) V f_j(x) >= delta}``.

    Parameters
    ----------
    fields : sequence of ScalarField
        ``f_j = |g_j - g0|^(1/2)`` samples, one per entry of ``js``.
    potentials : optional
        Precomputed potential values of ``fields``, to share work across a
        lattice of ``(delta, j0)``.
    """
    if len(fields) == 0:
        raise ValueError("empty family")
    if len(fields) != len(js):
        raise ValueError("need one j per field")
    grid = fields[0].grid
    if potentials is None:
        potentials = [potential_field(f, cfg).values for f in fields]
    top, window = tail_max(potentials, list(js), j0)
    ind = ScalarField(grid, (top >= delta).astype(float))
    area = float(np.sum(ind.values * grid.cell_volume))
    dim, resid, lengths, counts = box_counting(ind, sizes)
    return BadSetEstimate(float(delta), j0, window, ind, area, dim, resid, tuple(lengths), tuple(counts))
