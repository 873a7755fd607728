"""Conformal factors, grid-sampled scalar fields and L^p norms.

A conformal metric is ``h = f^2 g0``. Its pointwise norm uses the
g0-Frobenius convention, so ``|g0|_{g0} = sqrt(m)`` and
``|f^2 g0|_{g0} = sqrt(m) f^2``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .manifold import Grid, Manifold, distances_from, torus_displacement

# ---------------------------------------------------------------------------
# analytic conformal factors


def smoothstep5(u):
    """Quintic smoothstep on [0, 1]: zero first and second derivatives at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6 * u - 15) + 10)


class ConformalFactor:
    """Analytic conformal factor ``f``, evaluable at arbitrary points.

    Subclasses implement :meth:`__call__`. ``supports`` lists balls
    ``(center, radius)`` outside of which ``f`` equals ``outside_value``; an
    empty list means no such localisation is known. ``refine`` lists balls
    inside which edge integrals need adaptive quadrature.
    """

    manifold: Manifold
    outside_value: float = 1.0

    def __call__(self, points) -> np.ndarray:
        raise NotImplementedError

    @property
    def supports(self) -> list[tuple[np.ndarray, float]]:
        return []

    @property
    def refine(self) -> list[tuple[np.ndarray, float]]:
        return []

    def map(self, fn: Callable[[np.ndarray], np.ndarray], label: str = "mapped") -> "MappedFactor":
        return MappedFactor(self, fn, label)


@dataclass(frozen=True)
class Constant(ConformalFactor):
    manifold: Manifold
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("constant conformal factor must be positive")

    @property
    def outside_value(self):
        return self.c

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return np.full(pts.shape[:-1], float(self.c))


@dataclass(frozen=True)
class Custom(ConformalFactor):
    """Wraps a closed-form evaluator ``fn(points) -> values``."""

    manifold: Manifold
    fn: Callable[[np.ndarray], np.ndarray]
    label: str = "custom"

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return np.broadcast_to(np.asarray(self.fn(pts), dtype=float), pts.shape[:-1]).copy()


class RadialProfile(ConformalFactor):
    """Factor depending only on the background distance to ``center``.

    On the torus the distance may be restricted to a subset of coordinate
    ``axes``, which makes the profile radial about a flat subtorus instead of
    a point.
    """

    center: np.ndarray
    axes: tuple[int, ...] | None = None

    #: radii where the profile formula switches branch
    breakpoints: tuple[float, ...] = ()

    def radial(self, r) -> np.ndarray:
        raise NotImplementedError

    def radial_scalar(self, r: float) -> float:
        return float(self.radial(np.asarray([r]))[0])

    def radius_of(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        mfd = self.manifold
        if mfd.kind == "torus":
            d = torus_displacement(self.center, pts, mfd.period)
            if self.axes is not None:
                d = d[..., list(self.axes)]
            return np.sqrt(np.sum(d * d, axis=-1))
        flat = pts.reshape(-1, 2)
        return distances_from(mfd, self.center, flat).reshape(pts.shape[:-1])

    def __call__(self, points):
        return self.radial(self.radius_of(points))

    @property
    def support_radius(self) -> float:
        return max(self.breakpoints) if self.breakpoints else math.inf

    @property
    def supports(self):
        if self.axes is not None and len(self.axes) != self.manifold.dim:
            return []
        return [(np.asarray(self.center, dtype=float), self.support_radius)]


def _check_center(mfd: Manifold, center) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    if c.shape != (mfd.dim,):
        raise ValueError(f"center must have {mfd.dim} coordinates")
    if mfd.kind == "torus":
        if np.any(c < 0) or np.any(c >= mfd.period):
            raise ValueError("center must lie in the fundamental domain")
    elif not (0 <= c[0] <= math.pi and 0 <= c[1] < 2 * math.pi):
        raise ValueError("sphere center must be (colatitude, longitude) in range")
    return c


class RadialLogSingular(RadialProfile):
    """Log-singular bubble profile with a smooth decreasing bridge.

    ``f(r) = j^eta/(1 + ln j)`` for ``r <= j^-eta``,
    ``1/(r (1 - ln r))`` for ``j^-eta < r <= 1/j``,
    ``h_j(j r)`` on ``[1/j, 2/j]`` and ``1`` beyond. The bridge ``h_j`` is the
    quintic smoothstep from ``j/(1 + ln j)`` down to ``1``.
    """

    def __init__(self, manifold: Manifold, center, j: float, eta: float, axes=None):
        if j < 1:
            raise ValueError("j must be >= 1")
        if not eta > 1:
            raise ValueError("eta must be > 1")
        if 2.0 / j > 1.0:
            raise ValueError("profile needs 2/j <= 1 so the log branch stays below 1")
        self.manifold = manifold
        self.center = _check_center(manifold, center)
        self.j = float(j)
        self.eta = float(eta)
        self.axes = None if axes is None else tuple(axes)
        lj = math.log(self.j)
        self.core_radius = self.j ** (-self.eta)
        self.core_value = self.j**self.eta / (1 + lj)
        self.bridge_start = self.j / (1 + lj)
        self.breakpoints = (self.core_radius, 1 / self.j, 2 / self.j)

    def __repr__(self):
        return f"RadialLogSingular(j={self.j:g}, eta={self.eta:g}, center={self.center.tolist()})"

    def bridge(self, v):
        """The decreasing bridge ``h_j`` on ``[1, 2]``."""
        return self.bridge_start + (1.0 - self.bridge_start) * smoothstep5(np.asarray(v) - 1.0)

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        core = r <= self.core_radius
        logb = (r > self.core_radius) & (r <= 1 / self.j)
        br = (r > 1 / self.j) & (r < 2 / self.j)
        out[core] = self.core_value
        rl = r[logb]
        out[logb] = 1.0 / (rl * (1.0 - np.log(rl)))
        out[br] = self.bridge(self.j * r[br])
        return out

    def radial_scalar(self, r):
        if r <= self.core_radius:
            return self.core_value
        if r <= 1 / self.j:
            return 1.0 / (r * (1.0 - math.log(r)))
        if r < 2 / self.j:
            u = self.j * r - 1.0
            s = u * u * u * (u * (6 * u - 15) + 10)
            return self.bridge_start + (1.0 - self.bridge_start) * s
        return 1.0

    @property
    def refine(self):
        return self.supports


class RadialSpike(RadialProfile):
    """Bounded spike: ``j^alpha`` on ``r <= 1/j``, smooth bridge to 1 on ``[1/j, 2/j]``."""

    def __init__(self, manifold: Manifold, center, j: float, alpha: float):
        if j < 1:
            raise ValueError("j must be >= 1")
        if not 0 < alpha < 1:
            raise ValueError("alpha must satisfy 0 < alpha < 1")
        self.manifold = manifold
        self.center = _check_center(manifold, center)
        self.j = float(j)
        self.alpha = float(alpha)
        self.axes = None
        self.peak = self.j**self.alpha
        self.breakpoints = (1 / self.j, 2 / self.j)

    def __repr__(self):
        return f"RadialSpike(j={self.j:g}, alpha={self.alpha:g}, center={self.center.tolist()})"

    def bridge(self, v):
        return self.peak + (1.0 - self.peak) * smoothstep5(np.asarray(v) - 1.0)

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        core = r <= 1 / self.j
        br = (r > 1 / self.j) & (r < 2 / self.j)
        out[core] = self.peak
        out[br] = self.bridge(self.j * r[br])
        return out

    def radial_scalar(self, r):
        if r <= 1 / self.j:
            return self.peak
        if r < 2 / self.j:
            u = self.j * r - 1.0
            return self.peak + (1.0 - self.peak) * (u * u * u * (u * (6 * u - 15) + 10))
        return 1.0


class BubbleField(ConformalFactor):
    """``1/r_i`` inside each ball ``B_{r_i}(p_i)``, 1 elsewhere.

    Where balls overlap the smallest ball wins.
    """

    def __init__(self, manifold: Manifold, bubbles: Sequence[tuple[Sequence[float], float]]):
        if not bubbles:
            raise ValueError("need at least one bubble")
        self.manifold = manifold
        self.bubbles = [(_check_center(manifold, c), float(r)) for c, r in bubbles]
        for _, r in self.bubbles:
            if not r > 0:
                raise ValueError("bubble radii must be positive")

    def __repr__(self):
        return f"BubbleField({[(c.tolist(), r) for c, r in self.bubbles]})"

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, self.manifold.dim)
        out = np.ones(flat.shape[0])
        best = np.full(flat.shape[0], np.inf)
        for c, r in self.bubbles:
            hit = (distances_from(self.manifold, c, flat) < r) & (r < best)
            out[hit] = 1.0 / r
            best[hit] = r
        return out.reshape(pts.shape[:-1])

    @property
    def supports(self):
        return [(c, r) for c, r in self.bubbles]


class CinchedEquator(RadialProfile):
    """Conformal throat around the equator of the round sphere.

    Radial in the colatitude ``r``: ``h(j (r - pi/2))`` for
    ``|r - pi/2| <= 1/j`` and 1 otherwise, with
    ``h(u) = 1 - (1 - h0)(1 - u^2)^3``.
    """

    def __init__(self, manifold: Manifold, j: float, h0: float):
        if manifold.kind != "sphere":
            raise ValueError("the cinched-equator profile lives on the round sphere")
        if not 0 < h0 < 1:
            raise ValueError("h0 must lie in (0, 1)")
        if j < 1:
            raise ValueError("j must be >= 1")
        self.manifold = manifold
        self.center = np.array([0.0, 0.0])
        self.axes = None
        self.j = float(j)
        self.h0 = float(h0)
        self.breakpoints = (math.pi / 2 - 1 / self.j, math.pi / 2 + 1 / self.j)

    def __repr__(self):
        return f"CinchedEquator(j={self.j:g}, h0={self.h0:g})"

    @staticmethod
    def throat(u, h0):
        u = np.asarray(u, dtype=float)
        return 1.0 - (1.0 - h0) * (1.0 - u * u) ** 3

    def radius_of(self, points):
        # colatitude, independent of the sphere radius
        return np.asarray(points, dtype=float)[..., 0]

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        u = self.j * (r - math.pi / 2)
        return np.where(np.abs(u) <= 1.0, self.throat(np.clip(u, -1, 1), self.h0), 1.0)

    @property
    def supports(self):
        return []


class CinchedBand(ConformalFactor):
    """The cinched throat profile laid across a flat torus as a band ``|x_axis - c| <= 1/j``."""

    def __init__(self, manifold: Manifold, j: float, h0: float, level: float, axis: int = 1):
        if manifold.kind != "torus":
            raise ValueError("CinchedBand is defined on the flat torus")
        if not 0 < h0 < 1:
            raise ValueError("h0 must lie in (0, 1)")
        self.manifold = manifold
        self.j = float(j)
        self.h0 = float(h0)
        self.level = float(level)
        self.axis = int(axis)

    def __repr__(self):
        return f"CinchedBand(j={self.j:g}, h0={self.h0:g}, level={self.level:g})"

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        d = torus_displacement(self.level, pts[..., self.axis], self.manifold.period)
        u = self.j * d
        return np.where(np.abs(u) <= 1.0, CinchedEquator.throat(np.clip(u, -1, 1), self.h0), 1.0)


class MappedFactor(ConformalFactor):
    """Pointwise transform ``fn(f)`` of another factor; keeps its localisation data."""

    def __init__(self, base: ConformalFactor, fn, label="mapped"):
        self.base = base
        self.fn = fn
        self.label = label
        self.manifold = base.manifold

    def __repr__(self):
        return f"{self.label}({self.base!r})"

    @property
    def outside_value(self):
        return float(self.fn(np.asarray([self.base.outside_value]))[0])

    def __call__(self, points):
        return np.asarray(self.fn(self.base(points)), dtype=float)

    @property
    def supports(self):
        return self.base.supports

    @property
    def refine(self):
        return self.base.refine

    @property
    def radial_base(self):
        return self.base if isinstance(self.base, RadialProfile) else None


def tensor_norm_factor(spec: ConformalFactor, mode: str = "metric", power: float = 1.0) -> MappedFactor:
    """Analytic ``|h|_{g0}^power`` (metric mode) or ``|h - g0|_{g0}^power`` (difference mode)."""
    m = spec.manifold.dim
    root = math.sqrt(m)
    if mode == "metric":
        return spec.map(lambda v: (root * v * v) ** power, f"|h|^{power:g}")
    if mode == "difference":
        return spec.map(lambda v: (root * np.abs(v * v - 1.0)) ** power, f"|h-g0|^{power:g}")
    raise ValueError(f"unknown tensor norm mode {mode!r}")


# ---------------------------------------------------------------------------
# sampled fields


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One nonnegative value per grid node.

    ``source`` keeps the analytic factor the values were sampled from, when
    there is one; the geodesic solver uses it for sub-cell quadrature.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)
    source: ConformalFactor | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if np.any(v < 0):
            raise ValueError("field values must be nonnegative")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __mul__(self, a: float) -> "ScalarField":
        src = None
        if self.source is not None:
            src = self.source.map(lambda v, a=a: a * v, f"{a:g}*")
        return ScalarField(self.grid, self.values * a, src)

    __rmul__ = __mul__

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "value"])
            for i, v in enumerate(self.values):
                w.writerow([i, repr(float(v))])

    @classmethod
    def read_csv(cls, grid: Grid, path) -> "ScalarField":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        vals = np.empty(len(rows))
        for row in rows:
            vals[int(row["node"])] = float(row["value"])
        return cls(grid, vals)


def _unit_ball_volume(m: int) -> float:
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def _cell_average(spec: ConformalFactor, grid: Grid, values: np.ndarray, subcells: int) -> np.ndarray:
    mfd = grid.manifold
    m = mfd.dim
    h = grid.spacing
    offsets = (np.arange(subcells) + 0.5) / subcells - 0.5
    sub = np.stack(np.meshgrid(*[offsets] * m, indexing="ij"), axis=-1).reshape(-1, m) * h
    supports = spec.supports
    if supports:
        idx = set()
        for c, rad in supports:
            near = np.nonzero(grid.distances_from(c) <= rad + h * math.sqrt(m))[0]
            idx.update(near.tolist())
        todo = np.array(sorted(idx), dtype=int)
    else:
        todo = np.arange(grid.size)
    out = values.copy()
    for chunk in np.array_split(todo, max(1, len(todo) // 4096 + 1)):
        if len(chunk) == 0:
            continue
        pts = grid.nodes[chunk][:, None, :] + sub[None, :, :]
        out[chunk] = np.mean(spec(pts), axis=1)
    radial = spec if isinstance(spec, RadialProfile) else getattr(spec, "radial_base", None)
    if radial is not None and (radial.axes is None or len(radial.axes) == m):
        # equal-volume ball around the center replaces the cell holding it
        from scipy.integrate import quad

        fn = (lambda r: float(spec.fn(np.asarray([radial.radial_scalar(r)]))[0])) if radial is not spec else radial.radial_scalar
        rho = (h**m / _unit_ball_volume(m)) ** (1 / m)
        area = m * _unit_ball_volume(m)
        pts = [b for b in radial.breakpoints if 0 < b < rho]
        total, _ = quad(lambda r: fn(r) * area * r ** (m - 1), 0.0, rho, points=pts or None, limit=400, epsrel=1e-10)
        out[grid.nearest_node(radial.center)] = total / h**m
    return out


def sample_factor(spec: ConformalFactor, grid: Grid, average: bool = False, subcells: int = 4) -> ScalarField:
    """Sample an analytic factor at every grid node.

    With ``average=False`` (default) ``values[i] = f(node_i)`` exactly. With
    ``average=True`` (torus only) nodes whose cells meet the factor's support
    get the mean over ``subcells^m`` sub-cell midpoints, and for a radial
    profile the node nearest the center gets the exact mean over the
    equal-volume ball; this conserves the integral of profiles whose features
    are smaller than a cell.
    """
    if spec.manifold != grid.manifold:
        raise ValueError("factor and grid live on different manifolds")
    values = np.asarray(spec(grid.nodes), dtype=float)
    if average:
        if grid.manifold.kind != "torus":
            raise ValueError("cell averaging is implemented for torus grids only")
        values = _cell_average(spec, grid, values, subcells)
    return ScalarField(grid, values, spec)


def tensor_norm_field(f: ScalarField, mode: str = "metric") -> ScalarField:
    """Pointwise ``|f^2 g0|_{g0} = sqrt(m) f^2`` or ``|(f^2 - 1) g0|_{g0}``."""
    m = f.grid.dim
    v = f.values
    if mode == "metric":
        out = math.sqrt(m) * v * v
    elif mode == "difference":
        out = math.sqrt(m) * np.abs(v * v - 1.0)
    else:
        raise ValueError(f"unknown tensor norm mode {mode!r}")
    src = tensor_norm_factor(f.source, mode) if f.source is not None else None
    return ScalarField(f.grid, out, src)


def lp_norm(f: ScalarField, p: float) -> float:
    """``(sum_i v_i^p w_i)^(1/p)`` with the grid's quadrature weights."""
    if not p > 0:
        raise ValueError("p must be positive")
    v = f.values
    top = float(np.max(v)) if v.size else 0.0
    if top == 0.0:
        return 0.0
    s = np.sum((v / top) ** p * f.grid.cell_volume)
    return top * float(s) ** (1.0 / p)


def sample_node_pairs(grid: Grid, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` node pairs i.i.d. with probability proportional to cell volume."""
    rng = np.random.default_rng(seed)
    prob = grid.cell_volume / grid.total_volume
    a = rng.choice(grid.size, size=count, p=prob)
    b = rng.choice(grid.size, size=count, p=prob)
    return a, b


def lq_distance_norm(distances, q: float, total_volume_sq: float, estimator: str = "monte_carlo",
                     weights=None) -> tuple[float, float]:
    """L^q norm of a distance function over ``M x M``.

    Parameters
    ----------
    distances : array_like
        ``monte_carlo``: distances of pairs drawn uniformly from ``M x M``.
        ``full_grid``: distances of every node pair (any shape), paired with
        ``weights`` holding the product quadrature weights.
    q : float
    total_volume_sq : float
        ``Vol(M)^2``, only used by the Monte Carlo estimator.

    Returns
    -------
    value, std_error
        The estimate and its delta-method standard error (zero for
        ``full_grid``).
    """
    if not q > 0:
        raise ValueError("q must be positive")
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        raise ValueError("empty pair list")
    if estimator == "full_grid":
        if weights is None:
            raise ValueError("full_grid estimator needs product weights")
        w = np.broadcast_to(np.asarray(weights, dtype=float), d.shape)
        return float(np.sum(d**q * w)) ** (1.0 / q), 0.0
    if estimator != "monte_carlo":
        raise ValueError(f"unknown estimator {estimator!r}")
    if d.size < 100:
        raise ValueError("Monte Carlo estimator needs at least 100 pairs")
    dq = d.ravel() ** q
    mean = float(np.mean(dq))
    se_mean = float(np.std(dq, ddof=1)) / math.sqrt(dq.size)
    value = (total_volume_sq * mean) ** (1.0 / q)
    se = value * se_mean / (q * mean) if mean > 0 else 0.0
    return value, se
