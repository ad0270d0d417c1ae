"""Scale-ladder estimates of ascending slopes and the upper-gradient test.

Three slopes of a function ``f`` at a vertex ``x`` are estimated at each
radius ``r`` of a :class:`ScaleLadder`, all from the same quotient
``q(y) = [f(y) - f(x)]^+ / d(x, y)``:

* ``slope_plus``: max of ``q`` over the closed ball ``B(x, r)``;
* ``slope_curves``: max over simple paths from ``x`` (at most
  ``hop_horizon`` edges, inside the ball of the largest radius) of the min
  of ``q`` over the path vertices lying in ``B(x, r)``;
* ``slope_geodesics``: the same, restricted to paths that are geodesics.

The min over the first few path vertices stands in for the liminf as the
curve parameter goes to zero.  Sharing one quotient makes the ordering
``geodesics <= curves <= plus`` hold exactly whenever the path enumeration
is complete.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from otlab.space import REL_TOL, DiscreteGeodesic, MetricSpace


@dataclass(frozen=True)
class ScaleLadder:
    radii: tuple[float, ...]
    hop_horizon: int = 4

    def __post_init__(self):
        r = tuple(float(x) for x in self.radii)
        if not r or any(x <= 0 for x in r):
            raise ValueError("ladder radii must be positive and non-empty")
        if any(a <= b for a, b in zip(r, r[1:])):
            raise ValueError("ladder radii must be strictly decreasing")
        if self.hop_horizon < 1:
            raise ValueError("hop_horizon must be >= 1")
        object.__setattr__(self, "radii", r)

    @property
    def smallest(self) -> float:
        return self.radii[-1]


def default_ladder(space: MetricSpace, levels: int = 8, hop_horizon: int = 4) -> ScaleLadder:
    """Radii ``diam / 2^k`` (k = 1..levels) floored at the longest edge.

    The floor keeps every neighbour of every vertex inside the smallest ball,
    so the headline radius still sees one full edge in every direction.
    """
    floor = space.max_edge
    if floor == 0:
        return ScaleLadder((1.0,), hop_horizon)
    radii = [space.diameter / 2 ** k for k in range(1, levels + 1)]
    radii = [r for r in radii if r > floor * (1 + 1e-12)] + [floor]
    return ScaleLadder(tuple(radii), hop_horizon)


def _quotients(f: np.ndarray, x: int, space: MetricSpace) -> np.ndarray:
    d = space.dist[x]
    q = np.zeros(space.n)
    away = d > 0
    q[away] = np.maximum(f[away] - f[x], 0.0) / d[away]
    return q


def ascending_slope(f: np.ndarray, x: int, ladder: ScaleLadder, space: MetricSpace) -> np.ndarray:
    """Max of ``[f(y) - f(x)]^+ / d(x, y)`` over ``0 < d(x, y) <= r`` for each radius."""
    f = np.asarray(f, dtype=float)
    q = _quotients(f, x, space)
    d = space.dist[x]
    out = np.zeros(len(ladder.radii))
    for k, r in enumerate(ladder.radii):
        inside = (d > 0) & (d <= r * (1 + REL_TOL))
        if inside.any():
            out[k] = q[inside].max()
    return out


@dataclass(frozen=True)
class PathSlope:
    values: np.ndarray
    paths: int
    partial: bool


def _path_values(paths, q: np.ndarray, d: np.ndarray, radii: Sequence[float]) -> np.ndarray:
    out = np.zeros(len(radii))
    for path in paths:
        qs = q[list(path)]
        ds = d[list(path)]
        for k, r in enumerate(radii):
            inside = ds <= r * (1 + REL_TOL)
            if inside.any():
                out[k] = max(out[k], qs[inside].min())
    return out


def geodesic_prefixes(space: MetricSpace, x: int, horizon: int, reach: float,
                      cap: int = 64) -> tuple[list[tuple[int, ...]], bool]:
    """Shortest paths from ``x`` with at most ``horizon`` edges ending within ``reach``.

    Each is a geodesic from ``x`` to its last vertex, and every geodesic
    from ``x`` to a target within ``reach`` starts with one of them.  At most
    ``cap`` paths are kept per end vertex; ``True`` is returned alongside
    when that cap dropped any.
    """
    d = space.dist[x]
    per_end: dict[int, int] = {}
    out: list[tuple[int, ...]] = []
    partial = False
    stack: list[tuple[int, ...]] = [(x,)]
    while stack:
        path = stack.pop()
        v = path[-1]
        if len(path) > 1:
            if per_end.get(v, 0) >= cap:
                partial = True
                continue
            per_end[v] = per_end.get(v, 0) + 1
            out.append(path[1:])
        if len(path) - 1 >= horizon:
            continue
        for u, w in reversed(space.neighbors[v]):
            du = d[v] + w
            if du <= d[u] + REL_TOL * max(d[u], 1e-300) and d[u] <= reach * (1 + REL_TOL):
                stack.append(path + (u,))
    return out, partial


def simple_paths(space: MetricSpace, x: int, horizon: int, reach: float,
                 budget: int = 100_000) -> tuple[list[tuple[int, ...]], bool]:
    """Simple paths from ``x`` with at most ``horizon`` edges inside ``B(x, reach)``."""
    d = space.dist[x]
    out: list[tuple[int, ...]] = []
    stack: list[tuple[int, ...]] = [(x,)]
    while stack:
        path = stack.pop()
        if len(path) > 1:
            if len(out) >= budget:
                return out, True
            out.append(path[1:])
        if len(path) - 1 >= horizon:
            continue
        for u, _ in reversed(space.neighbors[path[-1]]):
            if u not in path and d[u] <= reach * (1 + REL_TOL):
                stack.append(path + (u,))
    return out, False


def slope_along_geodesics(f: np.ndarray, x: int, ladder: ScaleLadder, space: MetricSpace,
                          cap: int = 64) -> PathSlope:
    f = np.asarray(f, dtype=float)
    paths, partial = geodesic_prefixes(space, x, ladder.hop_horizon, ladder.radii[0], cap)
    vals = _path_values(paths, _quotients(f, x, space), space.dist[x], ladder.radii)
    return PathSlope(vals, len(paths), partial)


def slope_along_curves(f: np.ndarray, x: int, ladder: ScaleLadder, space: MetricSpace,
                       budget: int = 100_000) -> PathSlope:
    """Curve version; when ``partial`` the values are lower bounds."""
    f = np.asarray(f, dtype=float)
    paths, partial = simple_paths(space, x, ladder.hop_horizon, ladder.radii[0], budget)
    vals = _path_values(paths, _quotients(f, x, space), space.dist[x], ladder.radii)
    return PathSlope(vals, len(paths), partial)


@dataclass(frozen=True)
class SlopeReport:
    """Per-vertex, per-radius slope estimates (arrays are ``vertices x radii``)."""

    vertices: tuple[int, ...]
    radii: tuple[float, ...]
    slope_plus: np.ndarray
    slope_curves: np.ndarray
    slope_geodesics: np.ndarray
    partial: tuple[int, ...]

    @property
    def headline_plus(self) -> np.ndarray:
        return self.slope_plus[:, -1]

    @property
    def headline_curves(self) -> np.ndarray:
        return self.slope_curves[:, -1]

    @property
    def headline_geodesics(self) -> np.ndarray:
        return self.slope_geodesics[:, -1]

    def chain_violations(self, tol: float = 0.0) -> list[tuple[int, float]]:
        """``(vertex, radius)`` cells where ``geodesics <= curves <= plus`` fails."""
        bad = (self.slope_geodesics > self.slope_curves + tol) | (self.slope_curves > self.slope_plus + tol)
        return [(self.vertices[i], self.radii[k]) for i, k in zip(*np.nonzero(bad))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["vertex", "radius", "slope_plus", "slope_curves", "slope_geodesics"])
        for i, v in enumerate(self.vertices):
            for k, r in enumerate(self.radii):
                w.writerow([v, repr(r), repr(float(self.slope_plus[i, k])),
                            repr(float(self.slope_curves[i, k])), repr(float(self.slope_geodesics[i, k]))])
        return buf.getvalue()


def slope_report(f: np.ndarray, space: MetricSpace, ladder: ScaleLadder | None = None,
                 vertices: Sequence[int] | None = None, curves: bool = True,
                 cap: int = 64, budget: int = 100_000) -> SlopeReport:
    ladder = default_ladder(space) if ladder is None else ladder
    vertices = tuple(range(space.n)) if vertices is None else tuple(int(v) for v in vertices)
    shape = (len(vertices), len(ladder.radii))
    plus, curv, geo = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    partial = []
    for i, x in enumerate(vertices):
        plus[i] = ascending_slope(f, x, ladder, space)
        g = slope_along_geodesics(f, x, ladder, space, cap)
        geo[i] = g.values
        flagged = g.partial
        if curves:
            c = slope_along_curves(f, x, ladder, space, budget)
            curv[i] = c.values
            flagged = flagged or c.partial
        else:
            curv[i] = np.nan
        if flagged:
            partial.append(x)
    return SlopeReport(vertices, ladder.radii, plus, curv, geo, tuple(partial))


@dataclass(frozen=True)
class UpperGradientCheck:
    passed: bool
    residual: float
    integral: float
    trapezoid: float
    variation: float


def check_upper_gradient(f: np.ndarray, g: np.ndarray, path, space: MetricSpace | None = None) -> UpperGradientCheck:
    """Test ``|f(end) - f(start)| <= integral of g`` along a path.

    ``path`` is a :class:`DiscreteGeodesic` or any vertex sequence joined by
    edges (curves are allowed so the test can run along non-geodesics).
    Each edge contributes ``length * max(g(a), g(b))``: on an edge the slope
    of ``f`` is seen in full from whichever endpoint it ascends from, so the
    larger endpoint value is the one that bounds the edge.  The trapezoid
    value is reported alongside.
    """
    if isinstance(path, DiscreteGeodesic):
        space = path.space if space is None else space
        path = path.vertices
    if space is None:
        raise ValueError("a space is needed to measure a bare vertex path")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("upper gradient candidates must be nonnegative")
    upper = trap = 0.0
    for a, b in zip(path, path[1:]):
        w = space.weight(a, b)
        upper += w * max(g[a], g[b])
        trap += w * 0.5 * (g[a] + g[b])
    variation = abs(f[path[0]] - f[path[-1]])
    residual = upper - variation
    return UpperGradientCheck(residual >= -1e-9, float(residual), float(upper), float(trap), float(variation))


check_upper_gradient_along_geodesics = check_upper_gradient
