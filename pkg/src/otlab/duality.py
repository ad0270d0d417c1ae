"""Dual side of the quadratic transport problem.

All potentials are for the cost ``c(x, y) = d(x, y)**2 / 2``; the primal
cost uses ``d**2``, so optimal primal cost equals twice the dual value.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from otlab.measure import Measure
from otlab.space import DiscreteGeodesic, MetricSpace
from otlab.transport import TransportPlan, plan_from_simplex, solve_simplex

FEAS_TOL = 1e-9
SLACK_TOL = 1e-7


def c_transform(phi: np.ndarray, space: MetricSpace) -> np.ndarray:
    """``phi^c(x) = min_y d(x, y)^2 / 2 - phi(y)``; ``-inf`` entries of ``phi`` are skipped."""
    phi = np.asarray(phi, dtype=float)
    finite = np.isfinite(phi)
    if not finite.any():
        raise ValueError("c-transform of a function that is -inf everywhere")
    if np.any(np.isposinf(phi)) or np.any(np.isnan(phi)):
        raise ValueError("potential values must be finite or -inf")
    half = 0.5 * space.dist[:, finite] ** 2
    return np.min(half - phi[finite][None, :], axis=1)


@dataclass(frozen=True)
class PotentialPair:
    """A potential ``phi`` and its c-transform, with the dual objective."""

    phi: np.ndarray
    phic: np.ndarray
    dual_value: float
    space: MetricSpace = field(repr=False, compare=False)

    def feasibility_residual(self) -> float:
        """``max phi(x) + phic(y) - d^2(x, y) / 2`` (nonpositive when feasible)."""
        half = 0.5 * self.space.dist ** 2
        return float(np.max(self.phi[:, None] + self.phic[None, :] - half))

    def concavity_residual(self) -> float:
        """``max |phi - (phi^c)^c|``."""
        return float(np.max(np.abs(self.phi - c_transform(self.phic, self.space))))

    def value(self, mu: Measure, nu: Measure) -> float:
        return float(self.phi @ mu.masses + self.phic @ nu.masses)

    def to_csv(self) -> str:
        lines = ["vertex,phi,phic"]
        lines += [f"{v},{a!r},{b!r}" for v, (a, b) in enumerate(zip(self.phi.tolist(), self.phic.tolist()))]
        return "\n".join(lines) + "\n"


def pair_from_phi(phi: np.ndarray, space: MetricSpace, mu: Measure, nu: Measure) -> PotentialPair:
    """Make ``phi`` c-concave (``phi <- (phi^c)^c``) and attach its transform."""
    psi = c_transform(phi, space)
    phi = c_transform(psi, space)
    phic = c_transform(phi, space)
    pp = PotentialPair(phi, phic, 0.0, space)
    return PotentialPair(phi, phic, pp.value(mu, nu), space)


def central_potential(space: MetricSpace, plan: TransportPlan) -> tuple[np.ndarray, np.ndarray] | None:
    """An anchor-free optimal potential on the sources of ``plan``.

    Optimal potentials restricted to the sources are the solutions of the
    difference constraints ``phi(a) - phi(b) <= W(b, a)`` with
    ``W(b, a) = min_y c(a, y) - c(b, y)`` over targets ``y`` of ``b``.  With
    ``D`` the shortest-path closure of ``W``, ``D[r, .]`` and ``-D[., r]`` are
    the extreme solutions pinned at ``r``; their midpoint, averaged over all
    ``r``, is returned as ``(sources, phi)``.  Tight cycles have weight zero
    and come out as tiny negatives after rounding, which are tolerated;
    ``None`` is returned for a genuinely negative cycle (non-optimal plan).
    """
    rows = np.unique(plan.xs)
    if len(rows) == 0:
        return None
    half = 0.5 * space.dist ** 2
    W = np.full((len(rows), len(rows)), np.inf)
    pos = {int(x): i for i, x in enumerate(rows)}
    for x, y, _ in plan:
        b = pos[x]
        W[b] = np.minimum(W[b], half[rows, y] - half[x, y])
    D = W
    np.fill_diagonal(D, 0.0)
    for k in range(len(rows)):
        D = np.minimum(D, D[:, k, None] + D[None, k, :])
    scale = float(half.max(initial=0.0))
    if np.diag(D).min() < -SLACK_TOL * (1.0 + scale):
        return None
    np.fill_diagonal(D, 0.0)
    return rows, 0.5 * (D - D.T).mean(axis=0)


def solve(space: MetricSpace, mu: Measure, nu: Measure) -> tuple[TransportPlan, PotentialPair]:
    """Optimal plan and c-concave optimal potential pair.

    The plan comes from the network simplex.  Its node potentials are one
    vertex of the (usually large) set of optimal potentials; the centred
    choice of :func:`central_potential` is used instead when available, and
    the simplex potentials otherwise.
    """
    res = solve_simplex(space, mu, nu)
    plan = plan_from_simplex(space, res, mu, nu)
    phi0 = np.full(space.n, -np.inf)
    central = central_potential(space, plan)
    if central is None:
        phi0[res.rows] = 0.5 * res.u
    else:
        rows, phi = central
        phi0[rows] = phi
    pair = pair_from_phi(phi0, space, mu, nu)
    if central is not None and not verify_potential(pair, plan).passed:
        phi0 = np.full(space.n, -np.inf)
        phi0[res.rows] = 0.5 * res.u
        pair = pair_from_phi(phi0, space, mu, nu)
    return plan, pair


def solve_dual(space: MetricSpace, mu: Measure, nu: Measure) -> PotentialPair:
    return solve(space, mu, nu)[1]


@dataclass(frozen=True)
class PotentialCheck:
    residual: float
    passed: bool
    witness: tuple[int, int] | None


def verify_potential(pp: PotentialPair, plan: TransportPlan) -> PotentialCheck:
    """Complementary slackness ``phi(x) + phic(y) = d^2(x, y) / 2`` on the plan support."""
    if len(plan) == 0:
        return PotentialCheck(0.0, True, None)
    d2 = pp.space.dist[plan.xs, plan.ys] ** 2
    res = np.abs(pp.phi[plan.xs] + pp.phic[plan.ys] - 0.5 * d2)
    bad = res > SLACK_TOL * (1.0 + d2)
    k = int(np.argmax(bad)) if bad.any() else int(np.argmax(res))
    witness = (int(plan.xs[k]), int(plan.ys[k])) if bad.any() else None
    return PotentialCheck(float(res.max()), not bad.any(), witness)


def duality_gap(plan: TransportPlan, pp: PotentialPair) -> float:
    """``plan.cost - 2 * dual value`` (>= 0 for feasible inputs)."""
    return plan.cost - 2.0 * pp.value(plan.mu, plan.nu)


@dataclass(frozen=True)
class CycleCheck:
    passed: bool
    violation: tuple[tuple[int, int], ...] | None
    excess: float
    cycles_checked: int
    partial: bool


def _cycle_count(s: int, max_cycle: int) -> int:
    return sum(math.comb(s, k) * math.factorial(k - 1) for k in range(2, min(max_cycle, s) + 1))


def check_cyclical_monotonicity(support: Sequence[tuple[int, int]], max_cycle: int,
                                space: MetricSpace, budget: int = 5_000_000) -> CycleCheck:
    """Exhaustive search for a cycle of pairs whose target rotation lowers ``sum d^2``.

    Every subset of at most ``max_cycle`` pairs is tried with every cyclic
    order.  When the total number of cycles exceeds ``budget`` only the first
    ``budget`` are checked and ``partial`` is set.
    """
    if max_cycle < 2:
        raise ValueError("max_cycle must be >= 2")
    pairs = list(support)
    xs = np.array([p[0] for p in pairs], dtype=int)
    ys = np.array([p[1] for p in pairs], dtype=int)
    d2 = space.dist ** 2
    scale = float(d2.max(initial=0.0))
    checked = 0
    partial = _cycle_count(len(pairs), max_cycle) > budget
    for k in range(2, min(max_cycle, len(pairs)) + 1):
        orders = [(0,) + p for p in itertools.permutations(range(1, k))]
        combos = itertools.combinations(range(len(pairs)), k)
        while True:
            chunk = np.array(list(itertools.islice(combos, 20000)), dtype=int).reshape(-1, k)
            if len(chunk) == 0:
                break
            for order in orders:
                if checked >= budget:
                    return CycleCheck(True, None, 0.0, checked, True)
                take = min(len(chunk), budget - checked)
                c = chunk[:take][:, order]
                cx, cy = xs[c], ys[c]
                kept = d2[cx, cy].sum(axis=1)
                rotated = d2[cx, np.roll(cy, -1, axis=1)].sum(axis=1)
                excess = kept - rotated
                bad = np.flatnonzero(excess > FEAS_TOL * (1.0 + scale))
                checked += take
                if len(bad):
                    row = c[bad[0]]
                    cyc = tuple((int(xs[i]), int(ys[i])) for i in row)
                    return CycleCheck(False, cyc, float(excess[bad[0]]), checked, partial)
    return CycleCheck(True, None, 0.0, checked, partial)


@dataclass(frozen=True)
class QuotientBounds:
    """Difference quotient of ``phi`` along a geodesic and its guaranteed bracket.

    ``lower`` follows from feasibility at ``(g_t, g_1)`` plus slackness at
    ``(g_0, g_1)``; ``upper`` from c-concavity (the minimiser ``y*`` defining
    ``phi(g_t)`` also bounds ``phi(g_0)``).  ``ascent_excess`` is the largest
    amount by which ``[phi(z) - phi(g_0)] / d(z, g_0)`` exceeds
    ``(d(z, g_0) + 2 d(g_0, g_1)) / 2`` over probes ``z``; it is ``<= 0`` up
    to rounding whenever slackness holds at ``(g_0, g_1)``.
    """

    t: float
    quotient: float
    lower: float
    upper: float
    ascent_excess: float


def potential_quotient_bounds(pp: PotentialPair, g: DiscreteGeodesic, t: float) -> QuotientBounds:
    times = np.asarray(g.times)
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-12 or t <= 0:
        raise ValueError(f"t={t} is not a positive vertex-aligned time of the geodesic")
    d = pp.space.dist
    x0, xt = g.vertices[0], g.vertices[i]
    L = g.length
    dt = d[x0, xt]
    quotient = (pp.phi[x0] - pp.phi[xt]) / dt
    lower = (2.0 - t) / 2.0 * L
    ystar = int(np.argmin(0.5 * d[xt] ** 2 - pp.phic))
    upper = (d[x0, ystar] ** 2 - d[xt, ystar] ** 2) / (2.0 * dt)
    dz = d[x0]
    probe = dz > 0
    ascent = (pp.phi[probe] - pp.phi[x0]) / dz[probe] - (dz[probe] + 2.0 * L) / 2.0
    return QuotientBounds(float(t), float(quotient), float(lower), float(upper),
                          float(ascent.max(initial=-np.inf)))


def slope1st_slack(pp: PotentialPair, g: DiscreteGeodesic) -> np.ndarray:
    """``phi(g_0) - phi(g_t) - (2t - t^2)/2 * d^2(g_0, g_1)`` at every aligned time."""
    t = np.asarray(g.times)
    v = np.asarray(g.vertices)
    return pp.phi[v[0]] - pp.phi[v] - (2 * t - t ** 2) / 2.0 * g.length ** 2
