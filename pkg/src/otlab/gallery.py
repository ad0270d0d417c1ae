"""Reference spaces: segments, grids, tripods, cycles and the arc space.

The arc space is the dyadic counterexample in which every geodesic between
points of the unit interval runs along half-circle arcs of length
``(2 - 2**-n) * 2**-n`` rather than along the interval itself, and a
Lipschitz function dips in the middle of every arc.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from otlab.space import MetricSpace, SpaceError


def build_segment(n: int, spacing: float = 1.0) -> MetricSpace:
    """Path graph on ``n + 1`` vertices with ``n`` edges of length ``spacing``."""
    if n < 1:
        raise SpaceError("segment needs at least one edge")
    edges = [(i, i + 1, spacing) for i in range(n)]
    labels = {i: f"pos({i * spacing:g})" for i in range(n + 1)}
    return MetricSpace(n + 1, edges, labels)


def build_unit_segment(n_vertices: int) -> MetricSpace:
    """Uniform discretization of ``[0, 1]`` with ``n_vertices`` points."""
    if n_vertices < 2:
        raise SpaceError("unit segment needs at least two vertices")
    return build_segment(n_vertices - 1, 1.0 / (n_vertices - 1))


def build_grid(w: int, h: int, spacing: float = 1.0) -> MetricSpace:
    """``w x h`` four-neighbour grid; vertex ``(i, j)`` has id ``j * w + i``."""
    if w < 1 or h < 1:
        raise SpaceError("grid sizes must be >= 1")
    edges = []
    for j in range(h):
        for i in range(w):
            v = j * w + i
            if i + 1 < w:
                edges.append((v, v + 1, spacing))
            if j + 1 < h:
                edges.append((v, v + w, spacing))
    labels = {j * w + i: f"cell({i},{j})" for j in range(h) for i in range(w)}
    return MetricSpace(w * h, edges, labels)


def build_tripod(leg: int, spacing: float = 1.0) -> MetricSpace:
    """Three legs of ``leg`` edges glued at a centre vertex 0.

    Leg ``a`` (0, 1, 2) holds vertices ``1 + a * leg .. (a + 1) * leg``,
    ordered outward from the centre.
    """
    if leg < 1:
        raise SpaceError("tripod legs need at least one edge")
    edges = []
    labels = {0: "center"}
    for a in range(3):
        prev = 0
        for s in range(1, leg + 1):
            v = 1 + a * leg + (s - 1)
            edges.append((prev, v, spacing))
            labels[v] = f"leg({a},{s})"
            prev = v
    return MetricSpace(1 + 3 * leg, edges, labels)


def build_cycle(n: int, spacing: float = 1.0) -> MetricSpace:
    if n < 3:
        raise SpaceError("cycle needs at least three vertices")
    edges = [(i, (i + 1) % n, spacing) for i in range(n)]
    return MetricSpace(n, edges, {i: f"cyc({i})" for i in range(n)})


def build_star(k: int, spacing: float = 1.0) -> MetricSpace:
    if k < 1:
        raise SpaceError("star needs at least one leaf")
    return MetricSpace(k + 1, [(0, i, spacing) for i in range(1, k + 1)],
                       {0: "center", **{i: f"leaf({i})" for i in range(1, k + 1)}})


@dataclass(frozen=True)
class ExampleSpace:
    """Discretized arc space together with its Lipschitz function."""

    space: MetricSpace
    f: np.ndarray
    depth: int
    arc_resolution: int
    base_vertices: tuple[int, ...]
    # (n, k) -> vertex path from k 2^-n to (k+1) 2^-n along the arc
    arcs: dict
    base_edges: tuple[tuple[int, int], ...]

    def base_vertex(self, x: Fraction | float) -> int:
        """Vertex id of the dyadic point ``x`` (a multiple of ``2**-depth``)."""
        k = Fraction(x) * 2 ** self.depth
        if k.denominator != 1 or not 0 <= k <= 2 ** self.depth:
            raise ValueError(f"{x} is not a level-{self.depth} dyadic point of [0, 1]")
        return self.base_vertices[int(k)]

    def coordinate(self, v: int) -> float:
        return self.base_vertices.index(v) / 2 ** self.depth

    @property
    def base_path(self) -> tuple[int, ...]:
        """The interval ``[0, 1]`` as a vertex path along the base edges."""
        return self.base_vertices


def arc_length(n: int) -> Fraction:
    return (2 - Fraction(1, 2 ** n)) / 2 ** n


def arc_profile(n: int, k: int, t: Fraction) -> Fraction:
    """Value of the function at constant-speed parameter ``t`` along arc ``(n, k)``."""
    h = Fraction(1, 2 ** n)
    if t <= Fraction(1, 2):
        return k * h - 2 * h * t
    return (k - 3) * h + 4 * h * t


def build_example_space(depth: int, arc_resolution: int) -> ExampleSpace:
    """Arc space with arc levels ``1 .. depth`` and ``arc_resolution`` edges per arc.

    Base vertices are the dyadic points ``k 2^-depth`` (ids ``0 .. 2^depth``).
    Adjacent base vertices are joined by an edge of length ``2 * 2^-depth`` so
    the interval is present as a curve of length 2 that no geodesic uses.
    """
    N, M = int(depth), int(arc_resolution)
    if N < 1:
        raise SpaceError("depth must be >= 1")
    if M < 2 or M % 2:
        raise SpaceError(f"arc resolution must be even and >= 2 (midpoints are vertices), got {M}")
    for n in range(1, N):
        # one arc must beat the two finer arcs spanning the same pair
        if not arc_length(n) < 2 * arc_length(n + 1):
            raise SpaceError(f"arc level {n} is not shorter than two level-{n + 1} arcs")
    n_base = 2 ** N + 1
    base = tuple(range(n_base))
    labels = {v: f"base({v}/{2 ** N})" for v in base}
    f_exact: dict[int, Fraction] = {v: Fraction(v, 2 ** N) for v in base}
    edges: list[tuple[int, int, float]] = []
    base_edges = []
    for v in range(n_base - 1):
        edges.append((v, v + 1, 2.0 / 2 ** N))
        base_edges.append((v, v + 1))
    arcs = {}
    nxt = n_base
    for n in range(1, N + 1):
        step = 2 ** (N - n)
        w = float(arc_length(n) / M)
        for k in range(2 ** n):
            left, right = base[k * step], base[(k + 1) * step]
            path = [left]
            for j in range(1, M):
                v = nxt
                nxt += 1
                labels[v] = f"arc({n},{k},{j})"
                f_exact[v] = arc_profile(n, k, Fraction(j, M))
                path.append(v)
            path.append(right)
            for a, b in zip(path, path[1:]):
                edges.append((a, b, w))
            arcs[(n, k)] = tuple(path)
    space = MetricSpace(nxt, edges, labels)
    f = np.array([float(f_exact[v]) for v in range(nxt)])
    return ExampleSpace(space, f, N, M, base, arcs, tuple(base_edges))


def nbound(x: float, y: float) -> int:
    """Coarsest admissible arc level for a geodesic between ``x`` and ``y``.

    Uses ``floor(log2(1 / |x - y|)) + 2``: an interval of length
    ``L > 2^-(e+1)`` contains a whole dyadic interval of level ``e + 2``, and
    a geodesic crossing it uses an arc at least that coarse.  The exponent is
    found with exact rationals to avoid floating-point floor errors.
    """
    gap = Fraction(abs(Fraction(x) - Fraction(y)))
    if gap <= 0:
        raise ValueError("points must be distinct")
    inv = 1 / gap
    e = inv.numerator.bit_length() - inv.denominator.bit_length()
    # adjust so that 2**e <= inv < 2**(e+1)
    while Fraction(2) ** e > inv:
        e -= 1
    while Fraction(2) ** (e + 1) <= inv:
        e += 1
    return e + 2


BUILDERS = {
    "segment": build_segment,
    "unit_segment": build_unit_segment,
    "grid": build_grid,
    "tripod": build_tripod,
    "cycle": build_cycle,
    "star": build_star,
    "arc_space": build_example_space,
}


def build(name: str, **params):
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise SpaceError(f"unknown gallery space {name!r}; known: {sorted(BUILDERS)}") from None
    return builder(**params)


def lipschitz_constant(space: MetricSpace, f: np.ndarray) -> float:
    """Max per-edge ``|f(u) - f(v)| / w``; equals the Lipschitz constant for the path metric."""
    return max((abs(f[u] - f[v]) / w for u, v, w in space.edges), default=0.0)


@dataclass(frozen=True)
class ExampleAudit:
    """Checks on the arc space; ``passed`` holds iff every individual check does."""

    depth: int
    arc_resolution: int
    pairs_checked: int
    nbound_failures: tuple[tuple[int, int], ...]
    base_edges_on_geodesics: tuple[tuple[int, int], ...]
    lipschitz: float
    lipschitz_expected: float
    midpoint_errors: float
    base_slopes: tuple[float, ...]
    base_path_length: float
    variation: float
    slope_integral: float
    upper_gradient_fails: bool

    @property
    def passed(self) -> bool:
        return (not self.nbound_failures and not self.base_edges_on_geodesics
                and abs(self.lipschitz - self.lipschitz_expected) <= 1e-12
                and self.midpoint_errors == 0.0
                and all(s == 0.0 for s in self.base_slopes)
                and self.upper_gradient_fails)

    def to_dict(self) -> dict:
        return {
            "depth": self.depth, "arc_resolution": self.arc_resolution,
            "pairs_checked": self.pairs_checked,
            "nbound_failures": [list(p) for p in self.nbound_failures],
            "base_edges_on_geodesics": [list(p) for p in self.base_edges_on_geodesics],
            "lipschitz": self.lipschitz, "lipschitz_expected": self.lipschitz_expected,
            "midpoint_errors": self.midpoint_errors,
            "base_slopes": list(self.base_slopes),
            "base_path_length": self.base_path_length, "variation": self.variation,
            "slope_integral": self.slope_integral,
            "upper_gradient_fails": self.upper_gradient_fails, "passed": self.passed,
        }


def _arc_of_edges(es: ExampleSpace) -> dict[tuple[int, int], tuple[int, int]]:
    owner = {}
    for key, path in es.arcs.items():
        for a, b in zip(path, path[1:]):
            owner[(min(a, b), max(a, b))] = key
    return owner


def example_space_audit(es: ExampleSpace, cap: int = 64) -> ExampleAudit:
    """Audit the arc space.

    * every geodesic between two base vertices runs along at least one full
      arc ``(n, k)`` with ``n <= nbound(x, y)``, and no base edge is used;
    * the graph Lipschitz constant of ``f`` equals ``4 / (2 - 2^-1) = 8/3``;
    * ``f`` at every arc midpoint equals ``(k - 1) 2^-n``;
    * the headline slope along geodesics of ``f`` is 0 at every base vertex;
    * along the base path, ``|f(0) - f(1)| = 1`` exceeds the integral of that
      slope, so it is not an upper gradient along all curves.
    """
    from otlab.slopes import check_upper_gradient, default_ladder, slope_along_geodesics
    from otlab.space import enumerate_geodesics, curve_length

    sp = es.space
    owner = _arc_of_edges(es)
    base_set = set(es.base_edges)
    nbound_fail, base_used = [], set()
    pairs = 0
    for i, x in enumerate(es.base_vertices):
        for y in es.base_vertices[i + 1:]:
            pairs += 1
            limit = nbound(es.coordinate(x), es.coordinate(y))
            for g in enumerate_geodesics(sp, x, y, cap).geodesics:
                edges = [(min(a, b), max(a, b)) for a, b in zip(g.vertices, g.vertices[1:])]
                base_used.update(e for e in edges if e in base_set)
                # arcs covered in full by this path
                used = {}
                for e in edges:
                    if e in owner:
                        used[owner[e]] = used.get(owner[e], 0) + 1
                full = [key for key, c in used.items() if c == es.arc_resolution]
                if not any(n <= limit for n, _ in full):
                    nbound_fail.append((x, y))
    # the base edge must be strictly longer than the arc spanning the same pair
    for u, v in es.base_edges:
        if sp.dist[u, v] >= sp.weight(u, v) * (1 - 1e-12):
            base_used.add((u, v))

    mid_err = 0.0
    for (n, k), path in es.arcs.items():
        z = path[es.arc_resolution // 2]
        mid_err = max(mid_err, abs(es.f[z] - (k - 1) / 2 ** n))

    ladder = default_ladder(sp)
    slopes = np.zeros(sp.n)
    for v in es.base_vertices:
        slopes[v] = slope_along_geodesics(es.f, v, ladder, sp, cap).values[-1]
    check = check_upper_gradient(es.f, slopes, es.base_path, sp)
    # the slope candidate is only evaluated at base vertices, which are all the base path visits
    return ExampleAudit(
        depth=es.depth, arc_resolution=es.arc_resolution, pairs_checked=pairs,
        nbound_failures=tuple(nbound_fail), base_edges_on_geodesics=tuple(sorted(base_used)),
        lipschitz=lipschitz_constant(sp, es.f), lipschitz_expected=8.0 / 3.0,
        midpoint_errors=float(mid_err),
        base_slopes=tuple(float(slopes[v]) for v in es.base_vertices),
        base_path_length=curve_length(sp, es.base_path), variation=check.variation,
        slope_integral=check.integral, upper_gradient_fails=not check.passed,
    )
