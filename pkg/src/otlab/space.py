"""Finite geodesic metric spaces modelled as weighted graphs.

A :class:`MetricSpace` is a connected graph with strictly positive edge
lengths; its metric is the shortest-path distance, computed once and cached
as a dense matrix.  Geodesics are shortest paths carrying a constant-speed
time parameterization on ``[0, 1]``.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

# relative tolerance used when deciding whether a path is a shortest path
REL_TOL = 1e-9


class SpaceError(ValueError):
    """Raised when a space description violates a structural invariant."""


class MetricSpace:
    """Connected weighted graph with cached all-pairs shortest-path distances.

    Parameters
    ----------
    n_vertices:
        Number of vertices; vertex ids are ``0 .. n_vertices - 1``.
    edges:
        Iterable of ``(u, v, weight)`` with ``weight > 0``.  Each unordered
        pair may appear at most once and self loops are rejected.
    labels:
        Optional mapping ``vertex -> str`` annotation.
    dist:
        Optional precomputed distance matrix.  Only used by derived spaces
        (e.g. rescaled balls) which inherit the metric of a parent space.
    """

    def __init__(self, n_vertices: int, edges: Iterable[Sequence[float]] = (),
                 labels: dict[int, str] | None = None, dist: np.ndarray | None = None):
        n = int(n_vertices)
        if n < 1:
            raise SpaceError(f"a space needs at least one vertex, got {n_vertices}")
        self.n = n
        weights: dict[tuple[int, int], float] = {}
        for e in edges:
            u, v, w = int(e[0]), int(e[1]), float(e[2])
            if not (0 <= u < n and 0 <= v < n):
                raise SpaceError(f"edge ({u}, {v}) references a vertex outside 0..{n - 1}")
            if u == v:
                raise SpaceError(f"self loop at vertex {u}")
            if not (w > 0 and np.isfinite(w)):
                raise SpaceError(f"edge ({u}, {v}) has non-positive weight {w}")
            key = (min(u, v), max(u, v))
            if key in weights:
                raise SpaceError(f"duplicate edge {key}")
            weights[key] = w
        self._weights = weights
        self.edges: tuple[tuple[int, int, float], ...] = tuple(
            (u, v, w) for (u, v), w in sorted(weights.items()))
        nbrs: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for u, v, w in self.edges:
            nbrs[u].append((v, w))
            nbrs[v].append((u, w))
        self.neighbors: tuple[tuple[tuple[int, float], ...], ...] = tuple(
            tuple(sorted(a)) for a in nbrs)
        self.labels: dict[int, str] = dict(labels or {})

        if dist is None:
            dist = self._all_pairs()
        else:
            dist = np.array(dist, dtype=float)
            if dist.shape != (n, n):
                raise SpaceError(f"distance matrix has shape {dist.shape}, expected {(n, n)}")
        if not np.all(np.isfinite(dist)):
            i, j = np.argwhere(~np.isfinite(dist))[0]
            raise SpaceError(f"graph is disconnected: no path between {i} and {j}")
        dist.setflags(write=False)
        self.dist = dist
        self._check_metric()

    def _all_pairs(self) -> np.ndarray:
        if self.n == 1:
            return np.zeros((1, 1))
        rows = [u for u, v, _ in self.edges] + [v for u, v, _ in self.edges]
        cols = [v for u, v, _ in self.edges] + [u for u, v, _ in self.edges]
        vals = [w for *_, w in self.edges] * 2
        graph = csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        d = shortest_path(graph, method="D", directed=False)
        # per-source runs may differ in the last ulp; keep the shorter value
        return np.minimum(d, d.T)

    def _check_metric(self) -> None:
        d = self.dist
        if not np.allclose(d, d.T, rtol=0, atol=0):
            raise SpaceError("distance matrix is not symmetric")
        off = d + np.eye(self.n)
        if np.any(np.diag(d) != 0) or np.any(off <= 0):
            raise SpaceError("distance must vanish exactly on the diagonal")
        for (u, v), w in self._weights.items():
            if d[u, v] > w * (1 + REL_TOL):
                raise SpaceError(f"dist({u}, {v}) exceeds the edge weight {w}")
        if self.n <= 500:
            scale = REL_TOL * max(1.0, float(d.max()))
            for k in range(self.n):
                if np.any(d[:, k, None] + d[None, k, :] < d - scale):
                    raise SpaceError(f"triangle inequality fails through vertex {k}")

    # ------------------------------------------------------------------ queries
    def weight(self, u: int, v: int) -> float:
        """Length of the edge ``{u, v}``; ``KeyError`` if absent."""
        return self._weights[(min(u, v), max(u, v))]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._weights

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    @property
    def min_edge(self) -> float:
        return min((w for *_, w in self.edges), default=0.0)

    @property
    def max_edge(self) -> float:
        return max((w for *_, w in self.edges), default=0.0)

    def ball(self, x: int, r: float) -> np.ndarray:
        """Vertices of the closed ball ``B(x, r)`` in increasing id order."""
        return np.flatnonzero(self.dist[x] <= r * (1 + REL_TOL) + 1e-300)

    def on_shortest_path(self, x: int, v: int, u: int, y: int, w: float) -> bool:
        """True when stepping ``v -> u`` (length ``w``) keeps an ``x -> y`` path shortest."""
        d = self.dist
        total = d[x, y]
        return d[x, v] + w + d[u, y] <= total + REL_TOL * max(total, 1e-300)

    def to_dict(self) -> dict:
        return {
            "vertices": self.n,
            "edges": [[u, v, w] for u, v, w in self.edges],
            "labels": {str(k): s for k, s in sorted(self.labels.items())},
        }

    def __repr__(self) -> str:
        return f"MetricSpace(n={self.n}, edges={len(self.edges)})"


@dataclass(frozen=True)
class DiscreteGeodesic:
    """A shortest path ``v_0 .. v_k`` with constant-speed times ``t_i``."""

    vertices: tuple[int, ...]
    times: tuple[float, ...]
    length: float
    space: MetricSpace = field(repr=False, compare=False)

    @property
    def start(self) -> int:
        return self.vertices[0]

    @property
    def end(self) -> int:
        return self.vertices[-1]

    def __len__(self) -> int:
        return len(self.vertices)


class GeodesicList(NamedTuple):
    geodesics: list[DiscreteGeodesic]
    truncated: bool


def make_geodesic(space: MetricSpace, path: Sequence[int]) -> DiscreteGeodesic:
    """Wrap a vertex path as a geodesic, checking that it is a shortest path."""
    path = tuple(int(v) for v in path)
    partial = [0.0]
    for a, b in zip(path, path[1:]):
        if not space.has_edge(a, b):
            raise SpaceError(f"no edge between consecutive vertices {a} and {b}")
        partial.append(partial[-1] + space.weight(a, b))
    length = partial[-1]
    target = space.dist[path[0], path[-1]]
    if abs(length - target) > REL_TOL * max(target, 1e-300):
        raise SpaceError(f"path {path[0]} -> {path[-1]} has length {length}, distance is {target}")
    if len(path) == 1:
        times = (0.0,)
    else:
        times = tuple(p / length for p in partial[:-1]) + (1.0,)
    return DiscreteGeodesic(path, times, length, space)


def build_space(spec: dict) -> MetricSpace:
    """Resolve a declarative space description.

    Either ``{"vertices": N, "edges": [[u, v, w], ...], "labels": {...}}`` or
    ``{"gallery": name, "params": {...}}`` naming a builder from
    :mod:`otlab.gallery`.
    """
    if "gallery" in spec:
        from otlab import gallery

        built = gallery.build(spec["gallery"], **spec.get("params", {}))
        return getattr(built, "space", built)
    if "vertices" not in spec:
        raise SpaceError("space spec needs 'vertices' or 'gallery'")
    for e in spec.get("edges", []):
        if len(e) != 3:
            raise SpaceError(f"edge entry {e!r} must be [u, v, weight]")
    labels = {int(k): str(v) for k, v in spec.get("labels", {}).items()}
    return MetricSpace(spec["vertices"], spec.get("edges", []), labels)


def enumerate_geodesics(space: MetricSpace, x: int, y: int, cap: int = 64) -> GeodesicList:
    """All shortest paths ``x -> y`` in lexicographic order, at most ``cap``.

    The traversal walks the shortest-path DAG from ``x`` visiting neighbours
    in increasing id order, so the output order is lexicographic in the vertex
    sequences.  ``truncated`` is set when more than ``cap`` paths exist.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    _check_vertex(space, x)
    _check_vertex(space, y)
    if x == y:
        return GeodesicList([make_geodesic(space, (x,))], False)
    found: list[DiscreteGeodesic] = []
    stack: list[tuple[int, ...]] = [(x,)]
    while stack:
        path = stack.pop()
        v = path[-1]
        if v == y:
            if len(found) == cap:
                return GeodesicList(found, True)
            found.append(make_geodesic(space, path))
            continue
        succ = [u for u, w in space.neighbors[v] if space.on_shortest_path(x, v, u, y, w)]
        for u in reversed(succ):
            stack.append(path + (u,))
    return GeodesicList(found, False)


def first_geodesic(space: MetricSpace, x: int, y: int) -> DiscreteGeodesic:
    """Lexicographically first shortest path from ``x`` to ``y``."""
    path = [x]
    while path[-1] != y:
        v = path[-1]
        path.append(next(u for u, w in space.neighbors[v]
                         if space.on_shortest_path(x, v, u, y, w)))
    return make_geodesic(space, path)


def geodesic_point(g: DiscreteGeodesic, t: float) -> tuple[int, float]:
    """Evaluate ``g`` at time ``t`` by snapping to the nearest path vertex.

    Returns ``(vertex, snap_error)`` with ``snap_error = |t - t_i| * length``;
    ties go to the earlier vertex.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time {t} outside [0, 1]")
    times = g.times
    if len(times) == 1:
        return g.vertices[0], 0.0
    i = bisect.bisect_left(times, t)
    if i == len(times):
        i -= 1
    elif i > 0 and (t - times[i - 1]) <= (times[i] - t):
        i -= 1
    return g.vertices[i], abs(t - times[i]) * g.length


def geodesic_sup_distance(g: DiscreteGeodesic, h: DiscreteGeodesic) -> tuple[float, float]:
    """Sup distance between two geodesics over their merged time grid.

    Returns ``(value, correction)`` where ``correction`` is the largest sum of
    snap errors met on the grid; the continuous sup distance is within
    ``correction`` of ``value``.
    """
    d = g.space.dist
    grid = sorted(set(g.times) | set(h.times))
    value = correction = 0.0
    for t in grid:
        a, ea = geodesic_point(g, t)
        b, eb = geodesic_point(h, t)
        value = max(value, float(d[a, b]))
        correction = max(correction, ea + eb)
    return value, correction


def curve_length(space: MetricSpace, path: Sequence[int]) -> float:
    """Sum of the edge weights traversed by ``path``."""
    total = 0.0
    for a, b in zip(path, path[1:]):
        if not space.has_edge(a, b):
            raise SpaceError(f"no edge between consecutive vertices {a} and {b}")
        total += space.weight(a, b)
    return total


def is_geodesic_path(space: MetricSpace, path: Sequence[int]) -> bool:
    target = space.dist[path[0], path[-1]]
    return abs(curve_length(space, path) - target) <= REL_TOL * max(target, 1e-300)


def _check_vertex(space: MetricSpace, v: int) -> None:
    if not 0 <= v < space.n:
        raise ValueError(f"vertex {v} not in space of {space.n} vertices")
