"""Background manifolds, their uniform grids and exact background distances.

Two backgrounds are supported: the flat torus ``T^m`` with an arbitrary period
(side length of the fundamental cube) and the round 2-sphere. Torus points are
coordinate vectors in ``[0, period)^m``; sphere points are ``(theta, phi)``
pairs with ``theta`` the colatitude in ``[0, pi]`` and ``phi`` the longitude
in ``[0, 2 pi)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_NODES = 2**20


class ResolutionTooLarge(ValueError):
    """Raised when a grid would exceed the configured node cap."""


@dataclass(frozen=True)
class FlatTorus:
    dim: int = 2
    period: float = 1.0

    kind = "torus"

    def __post_init__(self):
        if not 2 <= self.dim <= 4:
            raise ValueError(f"torus dimension must be in [2, 4], got {self.dim}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def diameter(self) -> float:
        return self.period * math.sqrt(self.dim) / 2

    @property
    def volume(self) -> float:
        return self.period**self.dim

    @property
    def injectivity_radius(self) -> float:
        return self.period / 2


@dataclass(frozen=True)
class RoundSphere2:
    radius: float = 1.0

    kind = "sphere"
    dim = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    @property
    def diameter(self) -> float:
        return math.pi * self.radius

    @property
    def volume(self) -> float:
        return 4 * math.pi * self.radius**2

    @property
    def injectivity_radius(self) -> float:
        return math.pi * self.radius


Manifold = FlatTorus | RoundSphere2


def make_manifold(kind: str, dim: int = 2, period: float = 1.0, radius: float = 1.0) -> Manifold:
    if kind == "torus":
        return FlatTorus(dim=dim, period=period)
    if kind == "sphere":
        if dim != 2:
            raise ValueError("only the round 2-sphere is supported")
        return RoundSphere2(radius=radius)
    raise ValueError(f"unknown manifold kind {kind!r}")


# ---------------------------------------------------------------------------
# torus helpers


def torus_displacement(a, b, period):
    """Minimal-image displacement ``b - a`` on a torus, componentwise."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return d - period * np.round(d / period)


def wrap(points, period):
    """Map torus points into the fundamental domain ``[0, period)^m``."""
    w = np.mod(np.asarray(points, dtype=float), period)
    # np.mod can return `period` itself for tiny negative inputs
    return np.where(w >= period, 0.0, w)


def sphere_to_xyz(points, radius=1.0):
    pts = np.asarray(points, dtype=float)
    theta, phi = pts[..., 0], pts[..., 1]
    st = np.sin(theta)
    return radius * np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def xyz_to_sphere(xyz):
    v = np.asarray(xyz, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    theta = np.arccos(np.clip(v[..., 2] / r, -1.0, 1.0))
    phi = np.mod(np.arctan2(v[..., 1], v[..., 0]), 2 * np.pi)
    return np.stack([theta, phi], axis=-1)


def great_circle_angle(u, v):
    """Angle between unit vectors, accurate for nearly parallel inputs."""
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(np.asarray(u) * np.asarray(v), axis=-1)
    return np.arctan2(cross, dot)


def _check_point(mfd: Manifold, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (mfd.dim,):
        raise ValueError(f"expected a point with {mfd.dim} coordinates, got shape {x.shape}")
    return x


def g0_distance(mfd: Manifold, x, y) -> float:
    """Background distance between two points.

    On the torus this is the minimum over the ``3^m`` neighbouring lattice
    shifts of the Euclidean distance; on the sphere it is the great-circle
    distance.
    """
    x = _check_point(mfd, x)
    y = _check_point(mfd, y)
    if mfd.kind == "torus":
        best = math.inf
        for shift in itertools.product((-1, 0, 1), repeat=mfd.dim):
            diff = y + mfd.period * np.asarray(shift, dtype=float) - x
            best = min(best, math.sqrt(float(diff @ diff)))
        return best
    ux = sphere_to_xyz(x)
    uy = sphere_to_xyz(y)
    dot = float(np.clip(ux @ uy, -1.0, 1.0))
    return mfd.radius * math.acos(dot)


def distances_from(mfd: Manifold, x, points) -> np.ndarray:
    """Vectorised background distance from ``x`` to every row of ``points``."""
    pts = np.asarray(points, dtype=float)
    if mfd.kind == "torus":
        d = torus_displacement(x, pts, mfd.period)
        return np.sqrt(np.sum(d * d, axis=-1))
    ux = sphere_to_xyz(np.asarray(x, dtype=float))
    up = sphere_to_xyz(pts)
    return mfd.radius * great_circle_angle(np.broadcast_to(ux, up.shape), up)


def pairwise_distances(mfd: Manifold, a, b) -> np.ndarray:
    """Distances between matching rows of ``a`` and ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if mfd.kind == "torus":
        d = torus_displacement(a, b, mfd.period)
        return np.sqrt(np.sum(d * d, axis=-1))
    return mfd.radius * great_circle_angle(sphere_to_xyz(a), sphere_to_xyz(b))


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class Grid:
    """A uniform grid on a background manifold.

    Attributes
    ----------
    manifold : FlatTorus or RoundSphere2
    n : int
        Nodes per dimension (torus) or longitudes per ring (sphere).
    nodes : ndarray, shape (N, dim)
        Node coordinates in the fundamental domain.
    cell_volume : ndarray, shape (N,)
        Quadrature weight of every node.

    Torus nodes are stored in C order of the index tuple ``(i_0, ..., i_{m-1})``.
    Sphere nodes are ordered north pole, rings ``1 .. n/2 - 1`` (each with
    ``n`` longitudes), south pole.
    """

    manifold: Manifold
    n: int
    nodes: np.ndarray = field(repr=False)
    cell_volume: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.manifold.dim

    @property
    def spacing(self) -> float:
        """Node spacing (torus: period/n; sphere: arc length between rings)."""
        if self.manifold.kind == "torus":
            return self.manifold.period / self.n
        return self.manifold.radius * 2 * math.pi / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        if self.manifold.kind == "torus":
            return (self.n,) * self.manifold.dim
        return (self.n // 2 - 1, self.n)

    @property
    def total_volume(self) -> float:
        return float(np.sum(self.cell_volume))

    def nearest_node(self, point) -> int:
        """Index of the node closest to ``point`` in the background metric."""
        point = _check_point(self.manifold, point)
        if self.manifold.kind == "torus":
            idx = np.mod(np.rint(wrap(point, self.manifold.period) / self.spacing), self.n).astype(int)
            return int(np.ravel_multi_index(tuple(idx), self.shape))
        return int(np.argmin(distances_from(self.manifold, point, self.nodes)))

    def node_index(self, *index) -> int:
        """Flat node index from a torus multi-index or a sphere ``(ring, lon)`` pair."""
        if self.manifold.kind == "torus":
            return int(np.ravel_multi_index(tuple(i % self.n for i in index), self.shape))
        ring, lon = index
        rings = self.n // 2
        if ring == 0:
            return 0
        if ring == rings:
            return self.size - 1
        return 1 + (ring - 1) * self.n + lon % self.n

    def distances_from(self, x) -> np.ndarray:
        return distances_from(self.manifold, x, self.nodes)


def build_grid(mfd: Manifold, n: int, max_nodes: int = DEFAULT_MAX_NODES) -> Grid:
    """Build the uniform grid with ``n`` nodes per dimension.

    Raises
    ------
    ResolutionTooLarge
        If the node count would exceed ``max_nodes``.
    """
    if n < 4:
        raise ValueError(f"grid resolution must be at least 4, got {n}")
    if mfd.kind == "torus":
        count = n**mfd.dim
        if count > max_nodes:
            raise ResolutionTooLarge(f"{n}^{mfd.dim} = {count} nodes exceeds the cap of {max_nodes}")
        h = mfd.period / n
        axes = [np.arange(n) * h] * mfd.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        vol = np.full(count, h**mfd.dim)
    else:
        if n % 2:
            raise ValueError("sphere grids need an even number of longitudes")
        rings = n // 2
        count = 2 + (rings - 1) * n
        if count > max_nodes:
            raise ResolutionTooLarge(f"sphere grid with {count} nodes exceeds the cap of {max_nodes}")
        dtheta = math.pi / rings
        theta = np.arange(1, rings) * dtheta
        phi = np.arange(n) * (2 * math.pi / n)
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        ring_nodes = np.stack([tt.ravel(), pp.ravel()], axis=-1)
        nodes = np.vstack([[0.0, 0.0], ring_nodes, [math.pi, 0.0]])
        r2 = mfd.radius**2
        zone = 2 * math.pi * r2 * (np.cos(theta - dtheta / 2) - np.cos(theta + dtheta / 2)) / n
        cap = 2 * math.pi * r2 * (1 - math.cos(dtheta / 2))
        vol = np.concatenate([[cap], np.repeat(zone, n), [cap]])
    nodes.setflags(write=False)
    vol.setflags(write=False)
    return Grid(manifold=mfd, n=n, nodes=nodes, cell_volume=vol)
