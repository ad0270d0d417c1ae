"""Random instances and brute-force oracles shared by the tests."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from otlab.measure import Measure
from otlab.space import MetricSpace


def random_space(rng: np.random.Generator, n: int, extra: float = 0.3) -> MetricSpace:
    """Connected graph: random spanning tree plus a fraction of extra edges."""
    order = rng.permutation(n)
    edges = {}
    for k in range(1, n):
        u, v = int(order[k]), int(order[rng.integers(k)])
        edges[(min(u, v), max(u, v))] = float(rng.uniform(0.1, 2.0))
    for _ in range(int(extra * n)):
        u, v = (int(x) for x in rng.choice(n, 2, replace=False))
        edges.setdefault((min(u, v), max(u, v)), float(rng.uniform(0.1, 2.0)))
    return MetricSpace(n, [(u, v, w) for (u, v), w in sorted(edges.items())])


def random_measure(rng: np.random.Generator, n: int, k: int | None = None) -> Measure:
    k = int(rng.integers(1, n + 1)) if k is None else min(k, n)
    support = rng.choice(n, k, replace=False)
    m = np.zeros(n)
    m[support] = rng.dirichlet(np.ones(k))
    m /= m.sum()
    return Measure(m)


def random_instance(seed: int, max_n: int = 50, max_support: int | None = None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_n + 1))
    space = random_space(rng, n)
    return space, random_measure(rng, n, max_support), random_measure(rng, n, max_support)


def floyd_warshall(n: int, edges) -> np.ndarray:
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for u, v, w in edges:
        d[u, v] = d[v, u] = min(d[u, v], w)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i, k] + d[k, j] < d[i, j]:
                    d[i, j] = d[i, k] + d[k, j]
    return d


def lp_transport_cost(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Optimal coupling cost from a generic LP solver (HiGHS)."""
    n, m = cost.shape
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = linprog(cost.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def brute_gh(dA: np.ndarray, dB: np.ndarray, basepoints: tuple[int, int] | None = None) -> float:
    """Half the least distortion, by enumerating all map pairs ``f: A -> B``, ``g: B -> A``.

    Every correspondence contains the union of the graphs of some such pair,
    and that union is itself a correspondence, so the minimum over pairs is
    the minimum over correspondences.  With ``basepoints`` both maps must
    send the basepoints to each other.
    """
    nA, nB = len(dA), len(dB)
    fs = np.array(list(itertools.product(range(nB), repeat=nA)), dtype=int).reshape(-1, nA)
    gs = np.array(list(itertools.product(range(nA), repeat=nB)), dtype=int).reshape(-1, nB)
    if basepoints is not None:
        a0, b0 = basepoints
        fs, gs = fs[fs[:, a0] == b0], gs[gs[:, b0] == a0]
    dis_f = np.abs(dA[None] - dB[fs[:, :, None], fs[:, None, :]]).reshape(len(fs), -1).max(axis=1)
    dis_g = np.abs(dB[None] - dA[gs[:, :, None], gs[:, None, :]]).reshape(len(gs), -1).max(axis=1)
    best = np.inf
    for fi in np.argsort(dis_f, kind="stable"):
        if dis_f[fi] >= best:
            break
        f = fs[fi]
        ok = np.flatnonzero(np.maximum(dis_g, dis_f[fi]) < best)
        if len(ok) == 0:
            continue
        g = gs[ok]
        # codistortion |dA(a, g(b)) - dB(f(a), b)|
        cod = np.abs(dA[:, g].transpose(1, 0, 2) - dB[f][None, :, :]).reshape(len(ok), -1).max(axis=1)
        tot = np.maximum(np.maximum(cod, dis_g[ok]), dis_f[fi])
        best = min(best, float(tot.min()))
    return 0.5 * best


def gh_corpus() -> list[np.ndarray]:
    """Ten small metric spaces (distance matrices) with at most five points."""
    from otlab.gallery import build_cycle, build_segment, build_star

    tri = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float)
    skew = MetricSpace(4, [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (0, 3, 3.0)]).dist
    wpath = MetricSpace(5, [(0, 1, 0.3), (1, 2, 1.1), (2, 3, 0.7), (3, 4, 0.2)]).dist
    return [
        np.zeros((1, 1)),
        build_segment(1).dist,
        build_segment(1, 1.3).dist,
        build_segment(2).dist,
        tri,
        build_cycle(4).dist,
        build_star(3).dist,
        skew,
        wpath,
        build_star(4, 0.5).dist,
    ]
