"""Branching diagnostics, rescaled balls and Gromov-Hausdorff distances."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from otlab.space import (DiscreteGeodesic, MetricSpace, enumerate_geodesics,
                         geodesic_point)

TANGENT_LEGEND = (
    "Inter-scale GH distances compare consecutive rescaled balls only; a small or "
    "stabilising sequence is consistent with a tangent along this ladder, but the "
    "report cannot tell apart limits along different subsequences of radii."
)


# ------------------------------------------------------------------ witnesses
@dataclass(frozen=True)
class RatioLadder:
    times: tuple[float, ...]
    ratios: tuple[float | None, ...]
    verdict: str
    trend: float | None


@dataclass(frozen=True)
class BranchWitness:
    """Two geodesics from one start that meet again and yet differ.

    ``kind`` is ``"branch"`` when they agree at an interior time
    ``agree_time`` in (0, 1) and ``"nonunique"`` when they share both
    endpoints (``agree_time = 1``) but differ in between.
    """

    g: DiscreteGeodesic
    h: DiscreteGeodesic
    agree_time: float
    split_times: tuple[float, ...]
    ratio_ladder: tuple[float | None, ...]
    kind: str


def _time_map(g: DiscreteGeodesic) -> dict[float, int]:
    return {round(t, 12): v for t, v in zip(g.times, g.vertices)}


def _dyadic_ratios(g: DiscreteGeodesic, h: DiscreteGeodesic, depth: int) -> tuple[list[float], list[float | None]]:
    d = g.space.dist
    ts, ratios = [], []
    for k in range(1, depth + 1):
        t = 2.0 ** -k
        a, _ = geodesic_point(g, t)
        b, _ = geodesic_point(h, t)
        base = d[g.start, a]
        ts.append(t)
        ratios.append(float(d[a, b] / base) if base > 0 else None)
    return ts, ratios


def _witness(g: DiscreteGeodesic, h: DiscreteGeodesic, depth: int = 6) -> BranchWitness | None:
    """Witness for the pair if they meet at a common time (other than 0) and differ."""
    if g.vertices == h.vertices or g.start != h.start:
        return None
    d = g.space.dist
    grid = sorted(set(g.times) | set(h.times))
    split = []
    for t in grid:
        a, _ = geodesic_point(g, t)
        b, _ = geodesic_point(h, t)
        if d[a, b] > 0:
            split.append(t)
    if not split:
        return None
    _, ratios = _dyadic_ratios(g, h, depth)
    if g.end == h.end and g.length > 0:
        return BranchWitness(g, h, 1.0, tuple(split), tuple(ratios), "nonunique")
    tg, th = _time_map(g), _time_map(h)
    for t in sorted(set(tg) & set(th)):
        if 0 < t < 1 and tg[t] == th[t]:
            return BranchWitness(g, h, t, tuple(split), tuple(ratios), "branch")
    return None


def detect_branching(space: MetricSpace, sample_pairs: int | None = None, seed: int = 0,
                     cap: int = 16, max_witnesses: int = 8,
                     exhaustive_limit: int = 200) -> list[BranchWitness]:
    """Scan geodesic pairs with a common start for branching or non-uniqueness.

    Exhaustive over all starts and targets when the space has at most
    ``exhaustive_limit`` vertices; otherwise ``sample_pairs`` random starts
    (seeded) are scanned.  An empty list means no witness was found, which
    is only a proof of absence in the exhaustive regime and when no
    enumeration hit ``cap``.
    """
    if space.n <= exhaustive_limit or sample_pairs is None:
        starts = range(space.n)
    else:
        rng = np.random.default_rng(seed)
        starts = sorted(rng.choice(space.n, size=min(sample_pairs, space.n), replace=False).tolist())
    out: list[BranchWitness] = []
    scale = max(space.diameter, 1e-300)
    for x in starts:
        by_length: dict[float, list[DiscreteGeodesic]] = {}
        for y in range(space.n):
            if y == x:
                continue
            for g in enumerate_geodesics(space, x, y, cap).geodesics:
                by_length.setdefault(round(g.length / scale, 9), []).append(g)
        for group in by_length.values():
            for i in range(len(group)):
                for j in range(i + 1, len(group)):
                    w = _witness(group[i], group[j])
                    if w is not None:
                        out.append(w)
                        if len(out) >= max_witnesses:
                            return out
    return out


def strong_nonbranching_ratio(g: DiscreteGeodesic, h: DiscreteGeodesic, depth: int = 6,
                              eps: float = 1e-9) -> RatioLadder:
    """Ratios ``d(g_t, h_t) / d(g_0, g_t)`` at ``t = 2^-1 .. 2^-depth``.

    Non-aligned times snap to the nearest path vertex.  The verdict is
    ``"bounded"`` when every defined ratio is at least ``eps`` and
    ``"decaying"`` otherwise; ``trend`` is the least-squares slope of
    ``log ratio`` against ``log t`` over the positive ratios.
    """
    d = g.space.dist
    if g.start != h.start:
        raise ValueError("geodesics must share their start")
    if g.end == h.end:
        raise ValueError("geodesics must end at different points")
    if d[g.start, g.end] <= 0:
        raise ValueError("first geodesic must be nonconstant")
    ts, ratios = _dyadic_ratios(g, h, depth)
    defined = [(t, r) for t, r in zip(ts, ratios) if r is not None]
    bounded = bool(defined) and all(r >= eps for _, r in defined)
    pos = [(t, r) for t, r in defined if r > 0]
    trend = None
    if len(pos) >= 2:
        lt = np.log([t for t, _ in pos])
        lr = np.log([r for _, r in pos])
        trend = float(np.polyfit(lt, lr, 1)[0])
    return RatioLadder(tuple(ts), tuple(ratios), "bounded" if bounded else "decaying", trend)


# ------------------------------------------------------------------ rescaling
@dataclass(frozen=True)
class PointedSpace:
    """A rescaled closed ball with its basepoint and the ids it came from."""

    space: MetricSpace
    basepoint: int
    source_vertices: tuple[int, ...]
    radius: float
    convex: bool


def rescale_ball(space: MetricSpace, x: int, r: float) -> PointedSpace:
    """Closed ball ``B(x, r)`` with the parent metric divided by ``r``.

    Distances are restricted from the parent, not recomputed inside the
    ball; ``convex`` records whether the induced edges alone reproduce them.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    verts = [int(v) for v in space.ball(x, r)]
    index = {v: i for i, v in enumerate(verts)}
    edges = [(index[u], index[v], w / r) for u, v, w in space.edges if u in index and v in index]
    labels = {index[v]: space.labels.get(v, str(v)) for v in verts}
    sub = space.dist[np.ix_(verts, verts)] / r
    ball = MetricSpace(len(verts), edges, labels, dist=sub)
    convex = _induced_matches(ball)
    return PointedSpace(ball, index[x], tuple(verts), float(r), convex)


def rescale(space: MetricSpace, factor: float) -> MetricSpace:
    """Same graph with every length multiplied by ``factor``."""
    return MetricSpace(space.n, [(u, v, w * factor) for u, v, w in space.edges],
                       space.labels, dist=space.dist * factor)


def _induced_matches(space: MetricSpace) -> bool:
    if space.n == 1:
        return True
    if not space.edges:
        return False
    rows = [u for u, v, _ in space.edges] + [v for u, v, _ in space.edges]
    cols = [v for u, v, _ in space.edges] + [u for u, v, _ in space.edges]
    vals = [w for *_, w in space.edges] * 2
    g = shortest_path(csr_matrix((vals, (rows, cols)), shape=(space.n, space.n)), directed=False)
    return bool(np.allclose(g, space.dist, rtol=1e-9, atol=0))


# ------------------------------------------------------------------ Gromov-Hausdorff
@dataclass(frozen=True)
class GHResult:
    value: float
    method: str
    correspondence: tuple[tuple[int, int], ...] = field(default=())


def distortion(dA: np.ndarray, dB: np.ndarray, pairs: Sequence[tuple[int, int]]) -> float:
    """``max |dA(a, a') - dB(b, b')|`` over pairs of pairs of a relation."""
    if not pairs:
        return 0.0
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    return float(np.max(np.abs(dA[np.ix_(a, a)] - dB[np.ix_(b, b)])))


def _feasible(dA: np.ndarray, dB: np.ndarray, delta: float,
              fixed: tuple[int, int] | None) -> list[tuple[int, int]] | None:
    """Correspondence of distortion <= delta, or None.

    Variables are ``f(a)`` for every ``a`` and ``g(b)`` for every ``b``; a
    value picks one pair ``(a, b)``.  Search is depth-first with forward
    checking over the pairs still compatible with every chosen pair.
    """
    p, q = dA.shape[0], dB.shape[0]
    tol = delta + 1e-12 * max(1.0, float(dA.max(initial=0)), float(dB.max(initial=0)))
    # compat[a, b, a2, b2]
    compat = np.abs(dA[:, None, :, None] - dB[None, :, None, :]) <= tol
    flat = compat.reshape(p * q, p * q)

    chosen: list[int] = []
    alive = np.ones(p * q, dtype=bool)
    covered_a = np.zeros(p, dtype=bool)
    covered_b = np.zeros(q, dtype=bool)

    def choose(k: int):
        a, b = divmod(k, q)
        saved = (alive.copy(), covered_a[a], covered_b[b])
        chosen.append(k)
        alive[:] &= flat[k]
        covered_a[a] = covered_b[b] = True
        return saved

    def undo(k: int, saved) -> None:
        a, b = divmod(k, q)
        chosen.pop()
        alive[:] = saved[0]
        covered_a[a], covered_b[b] = saved[1], saved[2]

    def search() -> bool:
        grid = alive.reshape(p, q)
        free_a = np.flatnonzero(~covered_a)
        free_b = np.flatnonzero(~covered_b)
        if len(free_a) == 0 and len(free_b) == 0:
            return True
        # most constrained uncovered point first
        side, options = "", None
        for a in free_a:
            opts = [a * q + b for b in np.flatnonzero(grid[a])]
            if options is None or len(opts) < len(options):
                side, options = "a", opts
        for b in free_b:
            opts = [a * q + b for a in np.flatnonzero(grid[:, b])]
            if options is None or len(opts) < len(options):
                side, options = "b", opts
        if not options:
            return False
        # prefer pairs that also cover a fresh point on the other side
        options.sort(key=lambda k: (covered_b[k % q] if side == "a" else covered_a[k // q], k))
        for k in options:
            saved = choose(k)
            if search():
                return True
            undo(k, saved)
        return False

    if fixed is not None:
        choose(fixed[0] * q + fixed[1])
    if search():
        return [divmod(k, q) for k in chosen]
    return None


def _exact_gh(dA, dB, fixed) -> tuple[float, list[tuple[int, int]]]:
    cands = np.unique(np.abs(dA[:, None, :, None] - dB[None, :, None, :]).ravel())
    lo, hi = 0, len(cands) - 1
    best = _feasible(dA, dB, float(cands[hi]), fixed)
    assert best is not None
    while lo < hi:
        mid = (lo + hi) // 2
        sol = _feasible(dA, dB, float(cands[mid]), fixed)
        if sol is None:
            lo = mid + 1
        else:
            hi, best = mid, sol
    return distortion(dA, dB, best), best


def _local_search(dA, dB, fixed, seed: int, restarts: int) -> tuple[float, list[tuple[int, int]]]:
    p, q = dA.shape[0], dB.shape[0]
    rng = np.random.default_rng(seed)

    def greedy(anchor: tuple[int, int], order_a, order_b):
        pairs = [anchor]
        fa = {anchor[0]: anchor[1]}
        gb = {anchor[1]: anchor[0]}
        for a in order_a:
            if a in fa:
                continue
            pa = np.array([x for x, _ in pairs])
            pb = np.array([y for _, y in pairs])
            cost = np.abs(dA[a, pa][None, :] - dB[:, pb]).max(axis=1)
            b = int(np.argmin(cost))
            fa[a] = b
            pairs.append((a, b))
        for b in order_b:
            if b in gb:
                continue
            pa = np.array([x for x, _ in pairs])
            pb = np.array([y for _, y in pairs])
            cost = np.abs(dA[:, pa] - dB[b, pb][None, :]).max(axis=1)
            a = int(np.argmin(cost))
            gb[b] = a
            pairs.append((a, b))
        return fa, gb

    def relation(fa, gb):
        return sorted(set(fa.items()) | {(a, b) for b, a in gb.items()})

    def improve(fa, gb):
        cur = distortion(dA, dB, relation(fa, gb))
        changed = True
        while changed:
            changed = False
            for side, var in [("a", a) for a in range(p)] + [("b", b) for b in range(q)]:
                if fixed is not None and ((side == "a" and var == fixed[0]) or (side == "b" and var == fixed[1])):
                    continue
                rest_f = {k: v for k, v in fa.items() if not (side == "a" and k == var)}
                rest_g = {k: v for k, v in gb.items() if not (side == "b" and k == var)}
                rest = relation(rest_f, rest_g)
                ra = np.array([x for x, _ in rest])
                rb = np.array([y for _, y in rest])
                base = distortion(dA, dB, rest)
                if side == "a":
                    cand = np.abs(dA[var, ra][None, :] - dB[:, rb]).max(axis=1)
                else:
                    cand = np.abs(dA[:, ra] - dB[var, rb][None, :]).max(axis=1)
                val = np.maximum(cand, base)
                k = int(np.argmin(val))
                if val[k] < cur - 1e-15:
                    if side == "a":
                        fa[var] = k
                    else:
                        gb[var] = k
                    cur = float(val[k])
                    changed = True
        return cur, relation(fa, gb)

    anchors = [fixed] if fixed is not None else [(0, b) for b in range(q)]
    best_val, best_rel = math.inf, []
    starts = []
    for anc in anchors:
        order_a = np.argsort(dA[anc[0]], kind="stable")
        order_b = np.argsort(dB[anc[1]], kind="stable")
        starts.append((anc, order_a, order_b))
    for _ in range(restarts):
        anc = anchors[int(rng.integers(len(anchors)))]
        starts.append((anc, rng.permutation(p), rng.permutation(q)))
    for anc, oa, ob in starts:
        fa, gb = greedy(anc, oa, ob)
        val, rel = improve(fa, gb)
        if val < best_val:
            best_val, best_rel = val, rel
    return best_val, best_rel


def gh_distance(A: MetricSpace | np.ndarray, B: MetricSpace | np.ndarray, budget: int = 49,
                basepoints: tuple[int, int] | None = None, seed: int = 0,
                restarts: int = 8) -> GHResult:
    """Half the least distortion of a correspondence between two finite spaces.

    Exact (``method="exact"``) when ``|A| * |B| <= budget``: the optimal
    distortion is one of the finitely many values ``|dA - dB|`` and is found
    by bisection over them with a backtracking feasibility search.  Larger
    inputs get a seeded greedy + local-search correspondence and
    ``method="upper_bound"``.  ``basepoints`` forces the pair
    ``(a0, b0)`` into every correspondence (pointed distance).
    """
    dA = A.dist if isinstance(A, MetricSpace) else np.asarray(A, dtype=float)
    dB = B.dist if isinstance(B, MetricSpace) else np.asarray(B, dtype=float)
    if dA.shape[0] * dB.shape[0] <= budget:
        dis, rel = _exact_gh(dA, dB, basepoints)
        method = "exact"
    else:
        dis, rel = _local_search(dA, dB, basepoints, seed, restarts)
        method = "upper_bound"
    return GHResult(0.5 * dis, method, tuple((int(a), int(b)) for a, b in rel))


# ------------------------------------------------------------------ tangents
@dataclass(frozen=True)
class ScaleStep:
    r_outer: float
    r_inner: float
    gh: float
    method: str
    sizes: tuple[int, int]
    convex: tuple[bool, bool]


@dataclass(frozen=True)
class TangentReport:
    vertex: int
    radii: tuple[float, ...]
    steps: tuple[ScaleStep, ...]
    witnesses: tuple[int, ...]
    legend: str = TANGENT_LEGEND


def tangent_ladder_report(space: MetricSpace, x: int, ladder, budget: int = 49,
                          seed: int = 0) -> TangentReport:
    """Pointed GH distances between consecutive rescaled balls at ``x``.

    ``witnesses[i]`` counts branching witnesses found inside the ball at
    ``ladder.radii[i]`` (capped at one per ball).
    """
    radii = tuple(ladder.radii) if hasattr(ladder, "radii") else tuple(ladder)
    balls = [rescale_ball(space, x, r) for r in radii]
    steps = []
    for A, B in zip(balls, balls[1:]):
        res = gh_distance(A.space, B.space, budget, basepoints=(A.basepoint, B.basepoint), seed=seed)
        steps.append(ScaleStep(A.radius, B.radius, res.value, res.method,
                               (A.space.n, B.space.n), (A.convex, B.convex)))
    wit = tuple(len(detect_branching(b.space, max_witnesses=1)) if b.convex else 0 for b in balls)
    return TangentReport(x, radii, tuple(steps), wit)
