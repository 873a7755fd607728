"""Symmetric families of curves about a flat-torus segment.

For endpoints ``x, y`` at distance ``L`` with unit direction ``e`` the curves
are ``gamma(tau, t, s) = x + t e + tau L sin(pi t / L) s`` where ``s`` is a
unit normal to ``e``. Writing ``v = tau s`` for the point of the
``(m-1)``-ball ``Gamma_eps``, the map ``(t, v) -> gamma`` is a diffeomorphism
onto the tube, and the projection ``gamma -> v`` has normal Jacobian

    NJ = (L sin(pi t / L))^(1-m) * sqrt(1 + (pi tau cos(pi t / L))^2).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.ndimage import map_coordinates

from .fields import ScalarField
from .manifold import FlatTorus, Manifold, g0_distance, torus_displacement, wrap


class FamilyError(ValueError):
    pass


def _normal_frame(e: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of ``e``, shape ``(m-1, m)``."""
    m = e.size
    if m == 2:
        return np.array([[-e[1], e[0]]])
    q, _ = np.linalg.qr(np.column_stack([e, np.eye(m)]))
    return q[:, 1:m].T


def _sphere_directions(m: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions in ``R^(m-1)`` and their quadrature weights on ``S^(m-2)``."""
    if m == 2:
        return np.array([[-1.0], [1.0]]), np.ones(2)
    if m == 3:
        a = 2 * math.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(a), np.sin(a)]), np.full(count, 2 * math.pi / count)
    # Fibonacci points on S^2
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    phi = math.pi * (1 + 5**0.5) * i
    r = np.sqrt(1 - z * z)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z]), np.full(count, 4 * math.pi / count)


@dataclass(frozen=True, eq=False)
class SymmetricFamily:
    """Curves of width ``eps`` joining ``x`` to ``y`` on a flat torus.

    Attributes
    ----------
    tau, t : ndarray
        Sample lattice: ``n_tau`` midpoints of ``(0, eps)`` and ``n_t + 1``
        points of ``[0, L]``.
    directions, direction_weights : ndarray
        Unit normals ``s`` (coordinates in ``frame``) with their measure on
        ``S^(m-2)``; for ``m = 2`` these are ``s = -1, +1``.
    """

    manifold: Manifold
    x: np.ndarray
    y: np.ndarray
    L: float
    eps: float
    e: np.ndarray
    frame: np.ndarray
    tau: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    directions: np.ndarray = field(repr=False)
    direction_weights: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.manifold.dim

    def normal(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float) @ self.frame

    def points(self, tau, t, s, wrapped: bool = True) -> np.ndarray:
        """``gamma(tau, t, s)``; broadcasting over ``tau`` and ``t``."""
        tau = np.asarray(tau, dtype=float)[..., None]
        t = np.asarray(t, dtype=float)[..., None]
        sn = _sin_profile(t, self.L)
        p = self.x + t * self.e + tau * self.L * sn * self.normal(s)
        return wrap(p, self.manifold.period) if wrapped else p

    def speed(self, tau, t) -> np.ndarray:
        """``|d gamma / dt|_{g0}``."""
        return np.sqrt(1.0 + (math.pi * np.asarray(tau) * np.cos(math.pi * np.asarray(t) / self.L)) ** 2)

    def g0_length(self, tau: float) -> float:
        return float(simpson(self.speed(tau, self.t), x=self.t))

    def write_csv(self, path) -> None:
        """Dump ``(tau, s_index, t, coordinates...)`` for every lattice sample."""
        m = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "s_index", "t"] + [f"x{i}" for i in range(m)])
            for k, s in enumerate(self.directions):
                for tau in self.tau:
                    pts = self.points(tau, self.t, s)
                    for tt, p in zip(self.t, pts):
                        w.writerow([repr(float(tau)), k, repr(float(tt))] + [repr(float(c)) for c in p])


def _sin_profile(t, L):
    # sin(pi t/L) evaluated from the nearer end so both endpoints give exactly 0
    t = np.asarray(t, dtype=float)
    return np.sin(math.pi * np.minimum(t, L - t) / L)


def build_family(mfd: Manifold, x, y, eps: float | None = None, n_tau: int = 8, n_t: int = 64,
                 n_dirs: int = 16) -> SymmetricFamily:
    """Symmetric family of width ``eps`` (default ``0.05 * period``).

    ``eps`` must not exceed ``(period/2) / Diam``.
    """
    if not isinstance(mfd, FlatTorus):
        raise FamilyError("symmetric families are implemented on the flat torus only")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    delta = torus_displacement(x, y, mfd.period)
    L = float(np.linalg.norm(delta))
    if L == 0.0:
        raise FamilyError("endpoints must differ")
    if eps is None:
        eps = 0.05 * mfd.period
    bound = (mfd.period / 2) / mfd.diameter
    if not 0 < eps <= bound:
        raise FamilyError(f"width eps={eps} outside (0, {bound:.6g}]")
    e = delta / L
    dirs, wts = _sphere_directions(mfd.dim, n_dirs)
    tau = (np.arange(n_tau) + 0.5) / n_tau * eps
    t = np.linspace(0.0, L, n_t + 1)
    return SymmetricFamily(mfd, x, y, L, float(eps), e, _normal_frame(e), tau, t, dirs, wts)


# ---------------------------------------------------------------------------
# Jacobians


def _check_t(family: SymmetricFamily, t):
    t = np.asarray(t, dtype=float)
    if np.any((t <= 0) | (t >= family.L)):
        raise FamilyError("the normal Jacobian is singular at the endpoints; need 0 < t < L")
    return t


def normal_jacobian(family: SymmetricFamily, tau, t) -> np.ndarray:
    """Closed-form normal Jacobian of the projection onto ``Gamma_eps``."""
    t = _check_t(family, t)
    m = family.dim
    L = family.L
    return (L * np.sin(math.pi * t / L)) ** (1 - m) * family.speed(tau, t)


def normal_jacobian_fd(family: SymmetricFamily, tau: float, t: float, s=None, step: float = 1e-6) -> float:
    """Normal Jacobian from central differences of the forward map ``(t, v) -> gamma``."""
    _check_t(family, t)
    m = family.dim
    if s is None:
        s = family.directions[-1]
    s = np.asarray(s, dtype=float)
    L = family.L

    def phi(q):
        tt, v = q[0], q[1:]
        return family.x + tt * family.e + L * math.sin(math.pi * tt / L) * (v @ family.frame)

    q0 = np.concatenate([[t], tau * s])
    h = step * max(1.0, L)
    jac = np.empty((m, m))
    for i in range(m):
        dq = np.zeros(m)
        dq[i] = h
        jac[:, i] = (phi(q0 + dq) - phi(q0 - dq)) / (2 * h)
    a = np.linalg.inv(jac)[1:, :]
    return float(math.sqrt(np.linalg.det(a @ a.T)))


@dataclass(frozen=True)
class JacobianBound:
    c_fit: float
    c_flat: float
    holds: bool
    max_fd_error: float


def jacobian_bound_check(family: SymmetricFamily, samples: int = 1000, seed: int = 0) -> JacobianBound:
    """Fit ``C`` in ``NJ <= C (L sin(pi t/L))^(1-m)`` over random ``(tau, t)``.

    Also returns the largest relative gap to the finite-difference Jacobian
    and the flat-case constant ``sqrt(1 + pi^2 eps^2)``.
    """
    rng = np.random.default_rng(seed)
    L, m = family.L, family.dim
    tau = rng.uniform(0, family.eps, samples)
    t = rng.uniform(0.02 * L, 0.98 * L, samples)
    nj = normal_jacobian(family, tau, t)
    base = (L * np.sin(math.pi * t / L)) ** (1 - m)
    c = float(np.max(nj / base))
    holds = bool(np.all(nj <= c * base * (1 + 1e-12)))
    errs = [abs(normal_jacobian_fd(family, a, b) - v) / v for a, b, v in zip(tau, t, nj)]
    return JacobianBound(c, math.sqrt(1 + (math.pi * family.eps) ** 2), holds, float(max(errs)))


# ---------------------------------------------------------------------------
# integrals of sampled fields over the family


def interpolate(f: ScalarField, points) -> np.ndarray:
    """Periodic multilinear interpolation of a torus field."""
    grid = f.grid
    if grid.manifold.kind != "torus":
        raise FamilyError("interpolation is implemented on torus grids")
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, grid.dim)
    coords = (wrap(flat, grid.manifold.period) / grid.spacing).T
    vals = map_coordinates(f.values.reshape(grid.shape), coords, order=1, mode="grid-wrap")
    return vals.reshape(pts.shape[:-1])


def curve_length(f: ScalarField, family: SymmetricFamily, tau: float = 0.0, s=None) -> float:
    """``int_0^L f(gamma) |gamma'| dt`` by Simpson's rule on the family's t-lattice."""
    if s is None:
        s = family.directions[-1]
    pts = family.points(tau, family.t, s)
    vals = interpolate(f, pts) * family.speed(tau, family.t)
    return float(simpson(vals, x=family.t))


def tube_integral(f: ScalarField, family: SymmetricFamily) -> float:
    """``int_{Gamma_eps x [0, L]} f dt dmu``: midpoint in ``tau``, Simpson in ``t``."""
    m = family.dim
    dtau = family.eps / family.tau.size
    radial_w = family.tau ** (m - 2) * dtau
    total = 0.0
    for s, ws in zip(family.directions, family.direction_weights):
        pts = family.points(family.tau[:, None], family.t[None, :], s)
        line = simpson(interpolate(f, pts), x=family.t, axis=1)
        total += ws * float(np.sum(radial_w * line))
    return total


def lemma_constant(family: SymmetricFamily, samples: int = 4001) -> float:
    """``sup NJ / (d(x,.)^(1-m) + d(y,.)^(1-m))`` over the tube: the sharp constant."""
    L, m = family.L, family.dim
    t = np.linspace(0, L, samples)[1:-1]
    tau = family.eps
    nj = normal_jacobian(family, tau, t)
    # offset points at the outer edge of the tube (largest distance to x, y)
    off = tau * L * np.sin(math.pi * t / L)
    dx = np.hypot(t, off)
    dy = np.hypot(L - t, off)
    return float(np.max(nj / (dx ** (1 - m) + dy ** (1 - m))))


@dataclass(frozen=True)
class TubeCheck:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


def family_potential_bound_check(f: ScalarField, family: SymmetricFamily, cfg=None) -> TubeCheck:
    """Tube integral of ``f`` against ``V f(x) + V f(y)`` (endpoints snapped to nodes)."""
    from .potential import PotentialConfig, potential_at

    cfg = cfg or PotentialConfig()
    grid = f.grid
    vx = potential_at(f, grid.nearest_node(family.x), cfg)
    vy = potential_at(f, grid.nearest_node(family.y), cfg)
    return TubeCheck(tube_integral(f, family), vx + vy)
