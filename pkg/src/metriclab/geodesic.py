"""Distances of conformal metrics by shortest paths on stencil graphs.

Nodes within Chebyshev index radius ``k`` are joined by straight g0-segments
(great-circle arcs on the sphere) whose weight is the line integral of the
conformal factor. Only primitive offsets are used: a non-primitive offset is
a chain of primitive ones along the same segment.
"""
from __future__ import annotations

import csv
import itertools
import math
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .fields import RadialProfile, ScalarField
from .manifold import Grid, sphere_to_xyz, torus_displacement, wrap, xyz_to_sphere, great_circle_angle

QUADRATURES = ("midpoint", "trapezoid", "simpson")
DEFAULT_MEMORY_CAP = 2 * 1024**3
_BYTES_PER_EDGE = 56
_CHUNK = 1 << 17


class NotStencilAdjacent(ValueError):
    pass


class MemoryCapExceeded(MemoryError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    stencil_radius: int = 3
    edge_quadrature: str = "midpoint"
    resolution: int | None = None
    subsamples: int = 8

    def __post_init__(self):
        if self.stencil_radius < 1:
            raise ValueError("stencil radius must be >= 1")
        if self.edge_quadrature not in QUADRATURES:
            raise ValueError(f"edge quadrature must be one of {QUADRATURES}")
        if self.subsamples < 1:
            raise ValueError("need at least one sub-sample per edge")

    @property
    def metrication_bound(self) -> float:
        """``1 - cos(atan(1/k))``: angular metrication error scale of the stencil."""
        return metrication_bound(self.stencil_radius)

    def as_dict(self) -> dict:
        return {
            "stencil_radius": self.stencil_radius,
            "edge_quadrature": self.edge_quadrature,
            "resolution": self.resolution,
            "subsamples": self.subsamples,
            "metrication_bound": self.metrication_bound,
        }


def metrication_bound(k: int) -> float:
    return 1.0 - math.cos(math.atan(1.0 / k))


def primitive_offsets(k: int, dim: int) -> np.ndarray:
    """Canonical primitive offsets: gcd 1, first nonzero component positive."""
    out = []
    for o in itertools.product(range(-k, k + 1), repeat=dim):
        if not any(o):
            continue
        if math.gcd(*(abs(c) for c in o)) != 1:
            continue
        first = next(c for c in o if c)
        if first > 0:
            out.append(o)
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# graph structure


class StencilGraph:
    """Undirected stencil edges of a grid plus a CSR layout over both directions."""

    def __init__(self, grid: Grid, k: int):
        self.grid = grid
        self.k = k
        if grid.manifold.kind == "torus":
            self._build_torus()
        else:
            self._build_sphere()
        self.max_len = float(np.max(self.edge_len))

    @property
    def n_edges(self) -> int:
        return self.edge_u.size

    def _build_torus(self):
        grid, k = self.grid, self.k
        n, m = grid.n, grid.dim
        if n < 2 * k + 1:
            raise ValueError(f"stencil radius {k} needs at least {2 * k + 1} nodes per dimension")
        offsets = primitive_offsets(k, m)
        dc = len(offsets)
        N = grid.size
        _check_memory(N * dc)
        idx = np.arange(N, dtype=np.int64).reshape(grid.shape)
        axes = tuple(range(m))
        fwd = np.empty((N, dc), dtype=np.int32)
        bwd = np.empty((N, dc), dtype=np.int32)
        for c, o in enumerate(offsets):
            fwd[:, c] = np.roll(idx, tuple(-o), axis=axes).ravel()
            bwd[:, c] = np.roll(idx, tuple(o), axis=axes).ravel()
        self.offsets = offsets
        self.vectors = offsets.astype(float) * grid.spacing
        self.edge_u = np.repeat(np.arange(N, dtype=np.int32), dc)
        self.edge_v = fwd.ravel()
        self.edge_dir = np.tile(np.arange(dc, dtype=np.int16), N)
        lens = np.linalg.norm(self.vectors, axis=1)
        self.edge_len = np.tile(lens, N)
        base = np.arange(N, dtype=np.int64)[:, None] * dc + np.arange(dc)[None, :]
        back = bwd.astype(np.int64) * dc + np.arange(dc)[None, :]
        self.indices = np.concatenate([fwd, bwd], axis=1).ravel()
        self.csr_edge = np.concatenate([base, back], axis=1).ravel().astype(np.int64)
        self.indptr = np.arange(0, 2 * dc * N + 1, 2 * dc, dtype=np.int64)

    def _build_sphere(self):
        grid, k = self.grid, self.k
        n = grid.n
        rings = n // 2
        if n < 2 * k + 2 or rings - 1 < 1:
            raise ValueError(f"stencil radius {k} needs at least {2 * k + 2} longitudes")
        us, vs = [], []
        offs = [(a, b) for a, b in itertools.product(range(-k, k + 1), repeat=2)
                if (a, b) != (0, 0) and math.gcd(abs(a), abs(b)) == 1 and (a > 0 or (a == 0 and b > 0))]
        ring = np.arange(1, rings)
        lon = np.arange(n)
        rr, ll = np.meshgrid(ring, lon, indexing="ij")
        rr, ll = rr.ravel(), ll.ravel()
        node = 1 + (rr - 1) * n + ll
        for a, b in offs:
            tr = rr + a
            ok = (tr >= 1) & (tr <= rings - 1)
            us.append(node[ok])
            vs.append(1 + (tr[ok] - 1) * n + (ll[ok] + b) % n)
        north, south = 0, grid.size - 1
        for i in range(1, min(k, rings - 1) + 1):
            ring_nodes = 1 + (i - 1) * n + lon
            us.append(np.full(n, north))
            vs.append(ring_nodes)
        for i in range(max(1, rings - k), rings):
            ring_nodes = 1 + (i - 1) * n + lon
            us.append(ring_nodes)
            vs.append(np.full(n, south))
        u = np.concatenate(us).astype(np.int32)
        v = np.concatenate(vs).astype(np.int32)
        _check_memory(u.size)
        self.edge_u, self.edge_v = u, v
        xyz = sphere_to_xyz(grid.nodes)
        self.xyz = xyz
        self.edge_len = grid.manifold.radius * great_circle_angle(xyz[u], xyz[v])
        rows = np.concatenate([u, v]).astype(np.int64)
        cols = np.concatenate([v, u])
        eid = np.concatenate([np.arange(u.size), np.arange(u.size)])
        order = np.lexsort((cols, rows))
        self.indices = cols[order]
        self.csr_edge = eid[order].astype(np.int64)
        counts = np.bincount(rows, minlength=grid.size)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def find_edge(self, u: int, v: int) -> int:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        hits = np.nonzero(self.indices[lo:hi] == v)[0]
        if hits.size == 0:
            raise NotStencilAdjacent(f"nodes {u} and {v} are not within stencil radius {self.k}")
        return int(self.csr_edge[lo + hits[0]])

    def segment_points(self, eids: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Points at fractions ``s`` along each edge, shape ``(len(eids), len(s), dim)``."""
        s = np.asarray(s, dtype=float)
        if self.grid.manifold.kind == "torus":
            start = self.grid.nodes[self.edge_u[eids]]
            vec = self.vectors[self.edge_dir[eids]]
            pts = start[:, None, :] + s[None, :, None] * vec[:, None, :]
            return wrap(pts, self.grid.manifold.period)
        a = self.xyz[self.edge_u[eids]]
        b = self.xyz[self.edge_v[eids]]
        ang = great_circle_angle(a, b)[:, None, None]
        sin = np.sin(ang)
        pts = (np.sin((1 - s)[None, :, None] * ang) * a[:, None, :] + np.sin(s[None, :, None] * ang) * b[:, None, :]) / sin
        return xyz_to_sphere(pts)


def _check_memory(n_edges: int, cap: int = DEFAULT_MEMORY_CAP):
    need = n_edges * _BYTES_PER_EDGE
    if need > cap:
        raise MemoryCapExceeded(f"stencil graph needs about {need / 1e9:.2f} GB, above the {cap / 1e9:.2f} GB cap")


@lru_cache(maxsize=3)
def stencil_graph(grid: Grid, k: int) -> StencilGraph:
    return StencilGraph(grid, k)


# ---------------------------------------------------------------------------
# edge weights


def _rule_nodes(quadrature: str, subsamples: int) -> tuple[np.ndarray, np.ndarray]:
    if quadrature == "midpoint":
        return (np.arange(subsamples) + 0.5) / subsamples, np.full(subsamples, 1.0 / subsamples)
    if quadrature == "simpson":
        return np.array([0.0, 0.5, 1.0]), np.array([1.0, 4.0, 1.0]) / 6
    return np.array([0.0, 1.0]), np.array([0.5, 0.5])


def _refined_weight(profile: RadialProfile, graph: StencilGraph, eid: int) -> float:
    start = graph.grid.nodes[graph.edge_u[eid]]
    vec = graph.vectors[graph.edge_dir[eid]]
    length = float(np.linalg.norm(vec))
    e = vec / length
    rel = torus_displacement(start, profile.center, graph.grid.manifold.period)
    s0 = float(rel @ e)
    b = float(np.linalg.norm(rel - s0 * e))
    pts = {s0}
    for rho in profile.breakpoints:
        if rho > b:
            half = math.sqrt(rho * rho - b * b)
            pts.update((s0 - half, s0 + half))
    pts = sorted(p for p in pts if 0 < p < length)
    radial = profile.radial_scalar

    def integrand(s):
        return radial(math.hypot(s - s0, b))

    val, _ = quad(integrand, 0.0, length, points=pts or None, limit=400, epsabs=1e-14, epsrel=1e-11)
    return val


def _radial_source(spec):
    if isinstance(spec, RadialProfile):
        return spec
    return None


def _weights_for(f: ScalarField, graph: StencilGraph, eids: np.ndarray, quadrature: str, subsamples: int) -> np.ndarray:
    lens = graph.edge_len[eids]
    spec = f.source
    if spec is None or quadrature == "trapezoid":
        v = f.values
        return 0.5 * (v[graph.edge_u[eids]] + v[graph.edge_v[eids]]) * lens
    s, wts = _rule_nodes(quadrature, subsamples)
    out = np.empty(eids.size)
    for lo in range(0, eids.size, _CHUNK):
        part = eids[lo:lo + _CHUNK]
        vals = spec(graph.segment_points(part, s))
        out[lo:lo + _CHUNK] = (vals @ wts) * lens[lo:lo + _CHUNK]
    return out


def _candidate_edges(graph: StencilGraph, balls) -> np.ndarray:
    grid = graph.grid
    near = np.zeros(grid.size, dtype=bool)
    for c, rad in balls:
        near |= grid.distances_from(c) <= rad + graph.max_len
    nodes = np.nonzero(near)[0]
    if graph.grid.manifold.kind == "torus":
        dc = len(graph.offsets)
        return (nodes[:, None] * dc + np.arange(dc)[None, :]).ravel()
    mask = near[graph.edge_u] | near[graph.edge_v]
    return np.nonzero(mask)[0]


def _refine_edges(graph: StencilGraph, profile: RadialProfile, rad: float) -> np.ndarray:
    cand = _candidate_edges(graph, [(profile.center, rad)])
    if cand.size == 0:
        return cand
    start = graph.grid.nodes[graph.edge_u[cand]]
    vec = graph.vectors[graph.edge_dir[cand]]
    rel = torus_displacement(start, profile.center, graph.grid.manifold.period)
    ll = np.sum(vec * vec, axis=1)
    t = np.clip(np.sum(rel * vec, axis=1) / ll, 0.0, 1.0)
    gap = np.linalg.norm(rel - t[:, None] * vec, axis=1)
    return cand[gap < rad]


def edge_weights(f: ScalarField, graph: StencilGraph, quadrature: str = "midpoint", subsamples: int = 8) -> np.ndarray:
    """Weights of every undirected edge of ``graph`` under the factor ``f``."""
    spec = f.source
    if spec is None or quadrature == "trapezoid":
        return _weights_for(f, graph, np.arange(graph.n_edges), quadrature, subsamples)
    supports = spec.supports
    if supports:
        w = spec.outside_value * graph.edge_len
        cand = _candidate_edges(graph, supports)
        w[cand] = _weights_for(f, graph, cand, quadrature, subsamples)
    else:
        w = _weights_for(f, graph, np.arange(graph.n_edges), quadrature, subsamples)
    profile = _radial_source(spec)
    if profile is not None and graph.grid.manifold.kind == "torus":
        for _, rad in spec.refine:
            for eid in _refine_edges(graph, profile, rad):
                w[eid] = _refined_weight(profile, graph, int(eid))
    return w


def edge_weight(f: ScalarField, u: int, v: int, cfg: SolverConfig | None = None) -> float:
    """Weight of the single stencil edge between nodes ``u`` and ``v``."""
    cfg = cfg or SolverConfig()
    graph = stencil_graph(f.grid, cfg.stencil_radius)
    eid = graph.find_edge(u, v)
    w = _weights_for(f, graph, np.array([eid]), cfg.edge_quadrature, cfg.subsamples)[0]
    profile = _radial_source(f.source)
    if profile is not None and cfg.edge_quadrature != "trapezoid" and graph.grid.manifold.kind == "torus":
        for _, rad in f.source.refine:
            if eid in set(_refine_edges(graph, profile, rad).tolist()):
                w = _refined_weight(profile, graph, eid)
    return float(w)


_MATRIX_CACHE: "weakref.WeakKeyDictionary[ScalarField, dict]" = weakref.WeakKeyDictionary()


def weighted_graph(f: ScalarField, cfg: SolverConfig) -> csr_matrix:
    """CSR adjacency of the stencil graph weighted by ``f`` (cached per field)."""
    if cfg.resolution is not None and cfg.resolution != f.grid.n:
        raise ValueError(f"solver configured for n={cfg.resolution} but field has n={f.grid.n}")
    key = (cfg.stencil_radius, cfg.edge_quadrature, cfg.subsamples)
    per_field = _MATRIX_CACHE.setdefault(f, {})
    if key not in per_field:
        graph = stencil_graph(f.grid, cfg.stencil_radius)
        w = edge_weights(f, graph, cfg.edge_quadrature, cfg.subsamples)
        per_field.clear()
        per_field[key] = csr_matrix((w[graph.csr_edge], graph.indices, graph.indptr), shape=(f.grid.size,) * 2)
    return per_field[key]


# ---------------------------------------------------------------------------
# distances


@dataclass(frozen=True, eq=False)
class DistanceField:
    source: int
    dist: np.ndarray = field(repr=False)
    config: SolverConfig = SolverConfig()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "distance"])
            for i, d in enumerate(self.dist):
                w.writerow([i, repr(float(d))])


def single_source(f: ScalarField, source: int, cfg: SolverConfig | None = None) -> DistanceField:
    """Exact shortest-path distances from ``source`` in the weighted stencil graph."""
    cfg = cfg or SolverConfig()
    g = weighted_graph(f, cfg)
    dist = dijkstra(g, directed=True, indices=int(source))
    dist.setflags(write=False)
    return DistanceField(int(source), dist, cfg)


_THREADS = 1


def set_threads(count: int) -> None:
    """Number of worker threads used for batches of Dijkstra sources."""
    global _THREADS
    _THREADS = max(1, int(count))


def distance_rows(f: ScalarField, sources, cfg: SolverConfig | None = None, chunk: int = 8):
    """Yield ``(source, distances)`` for every source, computing in small batches.

    Results are identical for any thread count; batches are yielded in order.
    """
    cfg = cfg or SolverConfig()
    g = weighted_graph(f, cfg)
    sources = np.asarray(sources, dtype=np.int64)
    parts = [sources[lo:lo + chunk] for lo in range(0, sources.size, chunk)]

    def solve(part):
        return np.atleast_2d(dijkstra(g, directed=True, indices=part))

    if _THREADS > 1 and len(parts) > 1:
        with ThreadPoolExecutor(_THREADS) as pool:
            results = pool.map(solve, parts)
            for part, rows in zip(parts, results):
                for s, row in zip(part, rows):
                    yield int(s), row
        return
    for part in parts:
        for s, row in zip(part, solve(part)):
            yield int(s), row


def pair_distances(f: ScalarField, a, b, cfg: SolverConfig | None = None) -> np.ndarray:
    """Graph distances between node pairs ``(a[i], b[i])``, one Dijkstra per distinct source."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    out = np.empty(a.size)
    order = {}
    for i, s in enumerate(a):
        order.setdefault(int(s), []).append(i)
    for s, row in distance_rows(f, sorted(order), cfg):
        idx = order[s]
        out[idx] = row[b[idx]]
    return out


@dataclass(frozen=True)
class PairDistance:
    distance: float
    source: int
    target: int
    snap_x: float
    snap_y: float

    def __float__(self):
        return self.distance


def pair_distance(f: ScalarField, x, y, cfg: SolverConfig | None = None) -> PairDistance:
    """Distance between the grid nodes nearest to ``x`` and ``y``.

    The background distance from each point to its node is kept as the
    snapping displacement.
    """
    grid = f.grid
    sx, sy = grid.nearest_node(x), grid.nearest_node(y)
    from .manifold import g0_distance

    snap_x = g0_distance(grid.manifold, x, grid.nodes[sx])
    snap_y = g0_distance(grid.manifold, y, grid.nodes[sy])
    d = single_source(f, sx, cfg).dist[sy]
    return PairDistance(float(d), sx, sy, snap_x, snap_y)
