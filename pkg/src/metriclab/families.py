"""The four example families, their generators and limit-distance oracles.

Family ids:

``singular31``
    Log-singular radial bump about a point (``eta`` > 1).
``bubbles32``
    One bubble ``f = 1/r_j`` on ``B(p_j, r_j)`` per index, centers walking
    the dyadic sets ``Q_k``.
``cinched33``
    Round sphere with a throat ``h0`` at the equator.
``spike34``
    Radial spike of height ``j^alpha``.
``constant``
    ``f = c`` for every ``j``; a homogeneity control.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize

from .fields import (BubbleField, CinchedEquator, ConformalFactor, Constant, RadialLogSingular,
                     RadialProfile, RadialSpike)
from .manifold import FlatTorus, Manifold, RoundSphere2, g0_distance, great_circle_angle, sphere_to_xyz

FAMILY_IDS = ("singular31", "bubbles32", "cinched33", "spike34", "constant")


class UnsupportedFamily(ValueError):
    pass


# ---------------------------------------------------------------------------
# bubble schedule


def bubble_schedule(k_min: int = 2, k_max: int = 6) -> list[tuple[tuple[float, float], float, int]]:
    """``(p_j, r_j, k)`` for ``j = 1, 2, ...``.

    ``Q_k = {(a/2^(k+1), b/2^(k+1)) : a, b = 1..2^k}`` listed with ``a`` as the
    outer index, blocks in increasing ``k``; ``r_j = 2^-(k-2)``.
    """
    out = []
    for k in range(k_min, k_max + 1):
        den = 2.0 ** (k + 1)
        r = 2.0 ** (-(k - 2))
        for a in range(1, 2**k + 1):
            for b in range(1, 2**k + 1):
                out.append(((a / den, b / den), r, k))
    return out


def bubble_at(j: int, k_min: int = 2) -> tuple[tuple[float, float], float, int]:
    """Entry ``j`` (1-based) of the schedule without building the whole list."""
    if j < 1:
        raise ValueError("bubble indices start at 1")
    k = k_min
    idx = j - 1
    while idx >= 4**k:
        idx -= 4**k
        k += 1
    side = 2**k
    a, b = divmod(idx, side)
    den = 2.0 ** (k + 1)
    return ((a + 1) / den, (b + 1) / den), 2.0 ** (-(k - 2)), k


def center_subsequence(k_min: int = 2, k_max: int = 6) -> list[int]:
    """Indices ``j`` with ``p_j = (1/2, 1/2)``: the last entry of each ``Q_k`` block."""
    out, total = [], 0
    for k in range(k_min, k_max + 1):
        total += 4**k
        out.append(total)
    return out


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True, eq=False)
class ExampleFamily:
    id: str
    manifold: Manifold
    params: dict = field(default_factory=dict)
    j_list: tuple = ()

    def __post_init__(self):
        if self.id not in FAMILY_IDS:
            raise UnsupportedFamily(f"unknown family {self.id!r}")
        js = tuple(self.j_list)
        if any(b <= a for a, b in zip(js, js[1:])):
            raise ValueError("j_list must be strictly increasing")
        object.__setattr__(self, "j_list", js)
        need = {"singular31": "torus", "bubbles32": "torus", "spike34": "torus", "cinched33": "sphere"}
        kind = need.get(self.id)
        if kind is not None and self.manifold.kind != kind:
            raise UnsupportedFamily(f"family {self.id} is not defined on a {self.manifold.kind}")
        if self.id == "bubbles32" and (self.manifold.dim != 2 or self.manifold.period != 1.0):
            raise UnsupportedFamily("bubbles32 lives on the unit 2-torus")

    # -- generators ---------------------------------------------------------

    @property
    def center(self) -> np.ndarray | None:
        if self.id in ("singular31", "spike34"):
            return np.asarray(self.params["center"], dtype=float)
        if self.id == "bubbles32":
            return np.array([0.5, 0.5])
        return None

    def factor_spec(self, j) -> ConformalFactor:
        """Pointwise-exact conformal factor ``f_j``."""
        p = self.params
        mfd = self.manifold
        if self.id == "singular31":
            return RadialLogSingular(mfd, p["center"], j, p["eta"], p.get("axes"))
        if self.id == "spike34":
            return RadialSpike(mfd, p["center"], j, p["alpha"])
        if self.id == "cinched33":
            return CinchedEquator(mfd, j, p["h0"])
        if self.id == "bubbles32":
            c, r, _ = bubble_at(int(j), p.get("k_min", 2))
            return BubbleField(mfd, [(c, r)])
        return Constant(mfd, p["c"])

    def locus_distance(self, points) -> np.ndarray:
        """Background distance from each point to the singular locus (inf if none)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.manifold.dim)
        if self.id == "cinched33":
            return self.manifold.radius * np.abs(pts[:, 0] - math.pi / 2)
        c = self.center
        if c is None:
            return np.full(len(pts), np.inf)
        from .manifold import distances_from

        return distances_from(self.manifold, c, pts)

    # -- oracles ------------------------------------------------------------

    def limit_distance(self, x, y) -> float:
        """Distance in the ``j -> inf`` limit (for ``bubbles32``: along the center subsequence)."""
        mfd = self.manifold
        flat = g0_distance(mfd, x, y)
        if self.id in ("spike34", "bubbles32"):
            return flat
        if self.id == "constant":
            return self.params["c"] * flat
        if self.id == "singular31":
            c = self.center
            at_x = g0_distance(mfd, x, c) < 1e-12
            at_y = g0_distance(mfd, y, c) < 1e-12
            if at_x and at_y:
                return 0.0
            if at_x or at_y:
                return flat + math.log(self.params["eta"])
            return flat
        return cinched_limit_distance(mfd, self.params["h0"], x, y)

    def radial_oracle(self, j, r_max: float = 1.0) -> float:
        """``int_0^r_max f_j(r) dr`` by adaptive quadrature (relative 1e-10)."""
        spec = self.factor_spec(j)
        if not isinstance(spec, RadialProfile) or self.id == "cinched33":
            if self.id == "constant":
                return self.params["c"] * r_max
            raise UnsupportedFamily(f"family {self.id} has no radial profile")
        return radial_line_integral(spec, r_max)


def radial_line_integral(spec: RadialProfile, r_max: float) -> float:
    pts = sorted(b for b in spec.breakpoints if 0 < b < r_max)
    edges = [0.0] + pts + [r_max]
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        val, _ = quad(spec.radial_scalar, lo, hi, limit=400, epsabs=0.0, epsrel=1e-11)
        total += val
    return total


def singular_set_31(eta: float = 2.0, period: float = 4.0, dim: int = 2, center=None,
                    j_list=(100, 1000, 10000), axes=None) -> ExampleFamily:
    mfd = FlatTorus(dim, period)
    c = tuple(center) if center is not None else (period / 2,) * dim
    return ExampleFamily("singular31", mfd, {"eta": float(eta), "center": c, "axes": axes}, tuple(j_list))


def spike_34(alpha: float = 0.5, period: float = 1.0, dim: int = 2, center=None,
             j_list=(8, 16, 32, 64)) -> ExampleFamily:
    if not 0 < alpha < 1:
        raise ValueError("alpha must satisfy 0 < alpha < 1")
    mfd = FlatTorus(dim, period)
    c = tuple(center) if center is not None else (period / 2,) * dim
    return ExampleFamily("spike34", mfd, {"alpha": float(alpha), "center": c}, tuple(j_list))


def bubbles_32(k_min: int = 2, k_max: int = 6, j_list=None) -> ExampleFamily:
    js = tuple(j_list) if j_list is not None else tuple(range(1, len(bubble_schedule(k_min, k_max)) + 1))
    return ExampleFamily("bubbles32", FlatTorus(2, 1.0), {"k_min": k_min, "k_max": k_max}, js)


def cinched_sphere_33(h0: float = 0.5, radius: float = 1.0, j_list=(16, 32, 64)) -> ExampleFamily:
    return ExampleFamily("cinched33", RoundSphere2(radius), {"h0": float(h0)}, tuple(j_list))


def constant_family(c: float = 1.0, manifold: Manifold | None = None, j_list=(1, 2, 3)) -> ExampleFamily:
    return ExampleFamily("constant", manifold or FlatTorus(2, 1.0), {"c": float(c)}, tuple(j_list))


def make_family(id: str, manifold: Manifold | None = None, j_list=None, **params) -> ExampleFamily:
    """Build a family from an id and keyword parameters (config entry point)."""
    if id == "singular31":
        kw = {"period": manifold.period, "dim": manifold.dim} if manifold is not None else {}
        return singular_set_31(j_list=j_list or (100, 1000, 10000), **kw, **params)
    if id == "spike34":
        kw = {"period": manifold.period, "dim": manifold.dim} if manifold is not None else {}
        return spike_34(j_list=j_list or (8, 16, 32, 64), **kw, **params)
    if id == "bubbles32":
        if manifold is not None and manifold != FlatTorus(2, 1.0):
            raise UnsupportedFamily("bubbles32 lives on the unit 2-torus")
        return bubbles_32(j_list=j_list, **params)
    if id == "cinched33":
        kw = {"radius": manifold.radius} if manifold is not None else {}
        return cinched_sphere_33(j_list=j_list or (16, 32, 64), **kw, **params)
    if id == "constant":
        return constant_family(manifold=manifold, j_list=j_list or (1, 2, 3), **params)
    raise UnsupportedFamily(f"unknown family {id!r}")


# ---------------------------------------------------------------------------
# cinched-sphere limit


def cinched_limit_distance(mfd: RoundSphere2, h0: float, x, y, grid_steps: int = 181) -> float:
    """Limit distance for the metric that is ``h0`` on the equator and 1 elsewhere.

    Minimum of the direct great-circle distance and
    ``d(x, e1) + h0 * arc(e1, e2) + d(e2, y)`` over equator points
    ``e1, e2``, found by a grid search refined with Nelder-Mead.
    """
    R = mfd.radius
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    direct = g0_distance(mfd, x, y)
    ux, uy = sphere_to_xyz(x), sphere_to_xyz(y)

    def to_eq(u, phi):
        e = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)
        return R * great_circle_angle(e, np.broadcast_to(u, e.shape))

    def cost(phi1, phi2):
        arc = np.abs(np.angle(np.exp(1j * (phi2 - phi1))))
        return to_eq(ux, phi1) + h0 * R * arc + to_eq(uy, phi2)

    # the longitudes of x and y are kinks of the cost, so seed them explicitly
    phis = np.sort(np.concatenate([np.linspace(-math.pi, math.pi, grid_steps), [x[1], y[1]]]))
    c = cost(phis[:, None], phis[None, :])
    i, k = np.unravel_index(np.argmin(c), c.shape)
    res = minimize(lambda v: float(cost(np.asarray(v[0]), np.asarray(v[1]))), [phis[i], phis[k]],
                   method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    return float(min(direct, res.fun, c[i, k]))
