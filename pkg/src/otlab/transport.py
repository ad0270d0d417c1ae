"""Kantorovich problem with quadratic cost: solving, lifting and map extraction.

The solver is a network simplex on the bipartite transportation graph
between the supports of the two marginals.  The entering arc is the first
arc (row-major over source x target atoms) with negative reduced cost and
the leaving arc is the smallest-index arc among the blocking ones, i.e.
Bland's rule, which keeps degenerate instances from cycling and makes the
pivot sequence, and hence the output, deterministic.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.optimize import linear_sum_assignment

from otlab.measure import Measure, MeasureError, push_forward
from otlab.space import DiscreteGeodesic, MetricSpace, first_geodesic, make_geodesic

MARGINAL_TOL = 1e-9
PRUNE_BELOW = 1e-12


class TransportError(ValueError):
    pass


@dataclass(frozen=True)
class SimplexResult:
    """Raw solver output on the support index sets.

    ``flow`` is ``|rows| x |cols|``; ``u + v <= cost`` with equality on the
    basis (squared-distance units).
    """

    rows: np.ndarray
    cols: np.ndarray
    flow: np.ndarray
    u: np.ndarray
    v: np.ndarray
    pivots: int


def _northwest_corner(a: np.ndarray, b: np.ndarray) -> dict[tuple[int, int], float]:
    n, m = len(a), len(b)
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    basis: dict[tuple[int, int], float] = {}
    i = j = 0
    while True:
        q = min(ra[i], rb[j])
        basis[(i, j)] = q
        row_done = ra[i] <= rb[j]
        ra[i] -= q
        rb[j] -= q
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1 or row_done:
            i += 1
        else:
            j += 1
    return basis


def _tree_adjacency(basis, n: int, m: int) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n + m)]
    for i, j in basis:
        adj[i].append(n + j)
        adj[n + j].append(i)
    return adj


def _potentials(basis, cost: np.ndarray, adj: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    n, m = cost.shape
    u = np.zeros(n)
    v = np.zeros(m)
    seen = [False] * (n + m)
    seen[0] = True
    stack = [0]
    while stack:
        node = stack.pop()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < n:
                v[nb - n] = cost[node, nb - n] - u[node]
            else:
                u[nb] = cost[nb, node - n] - v[node - n]
            stack.append(nb)
    return u, v


def _tree_path(adj: list[list[int]], src: int, dst: int) -> list[int]:
    parent = {src: -1}
    stack = [src]
    while stack:
        node = stack.pop()
        if node == dst:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                stack.append(nb)
    path = [dst]
    while path[-1] != src:
        path.append(parent[path[-1]])
    return path


def network_simplex(cost: np.ndarray, a: np.ndarray, b: np.ndarray,
                    max_pivots: int = 1_000_000) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Solve ``min <cost, flow>`` over couplings of ``a`` and ``b`` (equal totals).

    Returns ``(flow, u, v, pivots)``.
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    basis = _northwest_corner(a, b)
    eps = 1e-11 * max(1.0, float(np.abs(cost).max(initial=0.0)))
    pivots = 0
    while True:
        adj = _tree_adjacency(basis, n, m)
        u, v = _potentials(basis, cost, adj)
        reduced = (cost - u[:, None] - v[None, :]).ravel()
        negative = np.flatnonzero(reduced < -eps)
        if len(negative) == 0:
            break
        if pivots >= max_pivots:
            raise TransportError(f"network simplex did not converge in {max_pivots} pivots")
        pivots += 1
        ei, ej = divmod(int(negative[0]), m)
        # tree path col ej -> row ei; together with (ei, ej) it closes the cycle
        path = _tree_path(adj, n + ej, ei)
        cells = []
        for k in range(len(path) - 1):
            p, q = path[k], path[k + 1]
            cells.append((q, p - n) if p >= n else (p, q - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(basis[c] for c in minus)
        leaving = min(c for c in minus if basis[c] <= theta)
        for c in minus:
            basis[c] = max(basis[c] - theta, 0.0)
        for c in plus:
            basis[c] += theta
        del basis[leaving]
        basis[(ei, ej)] = theta
    flow = np.zeros((n, m))
    for (i, j), q in basis.items():
        flow[i, j] = q
    return flow, u, v, pivots


def solve_simplex(space: MetricSpace, mu: Measure, nu: Measure) -> SimplexResult:
    _check_marginals(space, mu, nu)
    rows, cols = mu.support, nu.support
    d2 = space.dist[np.ix_(rows, cols)] ** 2
    flow, u, v, pivots = network_simplex(d2, mu.masses[rows], nu.masses[cols])
    return SimplexResult(rows, cols, flow, u, v, pivots)


def _check_marginals(space: MetricSpace, mu: Measure, nu: Measure) -> None:
    for name, meas in (("mu", mu), ("nu", nu)):
        if len(meas) != space.n:
            raise MeasureError(f"{name} has {len(meas)} masses, space has {space.n} vertices")
        if not meas.is_probability():
            raise MeasureError(f"{name} is not a probability measure (total {meas.total})")
    if abs(mu.total - nu.total) > MARGINAL_TOL:
        raise MeasureError(f"unequal totals {mu.total} and {nu.total}")


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling ``(x, y, mass)`` of two measures, sorted by ``(x, y)``."""

    xs: np.ndarray
    ys: np.ndarray
    masses: np.ndarray
    mu: Measure
    nu: Measure
    cost: float
    optimal: bool = False

    def __iter__(self) -> Iterator[tuple[int, int, float]]:
        return ((int(x), int(y), float(q)) for x, y, q in zip(self.xs, self.ys, self.masses))

    def __len__(self) -> int:
        return len(self.masses)

    @property
    def support(self) -> list[tuple[int, int]]:
        return [(int(x), int(y)) for x, y in zip(self.xs, self.ys)]

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.mu)
        src = np.bincount(self.xs, weights=self.masses, minlength=n)
        dst = np.bincount(self.ys, weights=self.masses, minlength=n)
        return src, dst

    def marginal_error(self) -> float:
        src, dst = self.marginals()
        return float(max(np.abs(src - self.mu.masses).max(), np.abs(dst - self.nu.masses).max()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "mass"])
        for x, y, q in self:
            w.writerow([x, y, repr(q)])
        return buf.getvalue()


def make_plan(space: MetricSpace, entries, mu: Measure, nu: Measure,
              optimal: bool = False) -> TransportPlan:
    """Build a plan from ``(x, y, mass)`` triples, merging repeats and dropping zeros."""
    acc: dict[tuple[int, int], float] = {}
    for x, y, q in entries:
        acc[(int(x), int(y))] = acc.get((int(x), int(y)), 0.0) + float(q)
    keys = sorted(k for k, q in acc.items() if q > 0)
    xs = np.array([k[0] for k in keys], dtype=int)
    ys = np.array([k[1] for k in keys], dtype=int)
    qs = np.array([acc[k] for k in keys], dtype=float)
    cost = float(np.sum(qs * space.dist[xs, ys] ** 2)) if keys else 0.0
    return TransportPlan(xs, ys, qs, mu, nu, cost, optimal)


def plan_from_csv(text: str, space: MetricSpace, mu: Measure, nu: Measure) -> TransportPlan:
    rows = list(csv.DictReader(io.StringIO(text)))
    return make_plan(space, ((r["x"], r["y"], r["mass"]) for r in rows), mu, nu)


def solve_kantorovich(space: MetricSpace, mu: Measure, nu: Measure) -> TransportPlan:
    """Optimal coupling of ``mu`` and ``nu`` for the cost ``d^2``."""
    return plan_from_simplex(space, solve_simplex(space, mu, nu), mu, nu)


def plan_from_simplex(space: MetricSpace, res: SimplexResult, mu: Measure, nu: Measure) -> TransportPlan:
    i, j = np.nonzero(res.flow >= PRUNE_BELOW)
    plan = make_plan(space, zip(res.rows[i], res.cols[j], res.flow[i, j]), mu, nu, optimal=True)
    err = plan.marginal_error()
    if err > MARGINAL_TOL:
        raise TransportError(f"marginal violation {err:.3g} after solve")
    return plan


def equal_atom_cost(space: MetricSpace, sources, targets) -> float:
    """Optimal ``d^2`` cost between two equal-size uniform atom sets.

    Uses a dense assignment solver; serves as an independent check of the
    network simplex on instances where every atom carries the same mass.
    """
    sources, targets = list(sources), list(targets)
    if len(sources) != len(targets):
        raise TransportError("equal-atom check needs the same number of atoms on both sides")
    c = space.dist[np.ix_(sources, targets)] ** 2
    r, k = linear_sum_assignment(c)
    return float(c[r, k].sum() / len(sources))


# ------------------------------------------------------------------ geodesic plans
@dataclass(frozen=True)
class GeodesicPlan:
    """Mass-weighted geodesics whose endpoints couple ``mu`` and ``nu``."""

    entries: tuple[tuple[DiscreteGeodesic, float], ...]
    mu: Measure
    nu: Measure

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def cost(self) -> float:
        return float(sum(q * g.length ** 2 for g, q in self.entries))

    def endpoint_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.mu)
        src, dst = np.zeros(n), np.zeros(n)
        for g, q in self.entries:
            src[g.start] += q
            dst[g.end] += q
        return src, dst

    def project(self, space: MetricSpace) -> TransportPlan:
        return make_plan(space, ((g.start, g.end, q) for g, q in self.entries), self.mu, self.nu)

    def to_json(self) -> str:
        return json.dumps({"entries": [{"vertices": list(g.vertices), "mass": q}
                                       for g, q in self.entries]}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, space: MetricSpace, mu: Measure, nu: Measure) -> "GeodesicPlan":
        data = json.loads(text)
        return cls(tuple((make_geodesic(space, e["vertices"]), float(e["mass"]))
                         for e in data["entries"]), mu, nu)


def lift_to_geodesic_plan(plan: TransportPlan, space: MetricSpace) -> GeodesicPlan:
    """Replace each pair by the lexicographically first geodesic joining it."""
    return GeodesicPlan(tuple((first_geodesic(space, x, y), q) for x, y, q in plan),
                        plan.mu, plan.nu)


# ------------------------------------------------------------------ maps
@dataclass(frozen=True)
class SplitEntry:
    source: int
    mass: float
    destinations: dict[int, float]


@dataclass(frozen=True)
class MapOrSplit:
    """Either a transport map or the list of sources whose mass splits.

    ``split_mass_fraction`` is always filled in: the mass not sent to the
    modal destination of its source, as a fraction of the plan's total.
    """

    mapping: dict[int, int] | None
    split: tuple[SplitEntry, ...]
    split_mass_fraction: float
    pushforward_error: float | None = field(default=None)

    @property
    def is_map(self) -> bool:
        return self.mapping is not None


def extract_map(plan: TransportPlan, tol: float = 0.0) -> MapOrSplit:
    """Read off ``x -> modal destination`` when every source is (1 - tol)-concentrated."""
    if not 0.0 <= tol < 1.0:
        raise ValueError("tol must lie in [0, 1)")
    rows: dict[int, dict[int, float]] = {}
    for x, y, q in plan:
        rows.setdefault(x, {})[y] = q
    total = float(plan.masses.sum()) or 1.0
    mapping: dict[int, int] = {}
    split = []
    lost = 0.0
    for x in sorted(rows):
        dests = rows[x]
        mass = sum(dests.values())
        # ties go to the smaller vertex id
        y_star = min(dests, key=lambda y: (-dests[y], y))
        top = dests[y_star]
        lost += mass - top
        mapping[x] = y_star
        if top < (1.0 - tol) * mass:
            split.append(SplitEntry(x, mass, dict(sorted(dests.items()))))
    fraction = lost / total
    if split:
        return MapOrSplit(None, tuple(split), fraction)
    image = push_forward(plan.mu, mapping)
    err = float(np.abs(image.masses - plan.nu.masses).max())
    return MapOrSplit(mapping, (), fraction, err)
