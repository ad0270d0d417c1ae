"""Acceptance criteria 1-10, one test each; every test records a PASS/FAIL line."""
import json
import time

import numpy as np
import pytest

from helpers import brute_gh, gh_corpus, lp_transport_cost, random_instance
from otlab import lab
from otlab.branching import detect_branching, gh_distance, strong_nonbranching_ratio
from otlab.duality import (
    check_cyclical_monotonicity,
    duality_gap,
    slope1st_slack,
    solve,
    verify_potential,
)
from otlab.gallery import (
    build_cycle,
    build_example_space,
    build_grid,
    build_segment,
    build_star,
    build_tripod,
    build_unit_segment,
    example_space_audit,
    lipschitz_constant,
)
from otlab.slopes import slope_report
from otlab.space import MetricSpace, make_geodesic
from otlab.transport import lift_to_geodesic_plan, solve_kantorovich

SUITE_SEEDS = range(100)
SEGMENT = {"gallery": "unit_segment", "params": {"n_vertices": 129}}
SHIFT = dict(space=SEGMENT, mu={"interval": [0.0, 0.5]}, nu={"interval": [0.5, 1.0]},
             params={"resolutions": [17, 33, 65, 129]}, seed=0)


def duality_suite() -> dict:
    rows = []
    t0 = time.perf_counter()
    for seed in SUITE_SEEDS:
        sp, mu, nu = random_instance(seed, max_n=50)
        plan, pp = solve(sp, mu, nu)
        gap = duality_gap(plan, pp)
        slack = min((float(slope1st_slack(pp, g).min()) for g, _ in lift_to_geodesic_plan(plan, sp)),
                    default=0.0)
        rows.append({"seed": seed, "n": sp.n, "cost": plan.cost,
                     "rel_gap": abs(gap) / max(1.0, plan.cost),
                     "feasibility": pp.feasibility_residual(),
                     "concavity": pp.concavity_residual(),
                     "slackness": verify_potential(pp, plan).residual,
                     "slope1st_min": slack,
                     "support": [[int(x), int(y)] for x, y in plan.support]})
    elapsed = time.perf_counter() - t0
    return {"rows": rows, "elapsed": elapsed}


@pytest.fixture(scope="module")
def suite():
    return duality_suite()


def test_criterion_01_duality(suite, record_acceptance):
    rows = suite["rows"]
    lp_bad = 0
    for seed, r in zip(SUITE_SEEDS, rows):
        sp, mu, nu = random_instance(seed, max_n=50)
        a, b = mu.support, nu.support
        ref = lp_transport_cost(sp.dist[np.ix_(a, b)] ** 2, mu.masses[a], nu.masses[b])
        lp_bad += abs(r["cost"] - ref) > 1e-7 * max(1.0, ref)
    worst = {k: max(r[k] for r in rows) for k in ("rel_gap", "feasibility", "concavity", "slackness")}
    ok = (worst["rel_gap"] <= 1e-7 and worst["feasibility"] <= 1e-9 and worst["concavity"] <= 1e-9
          and worst["slackness"] <= 1e-7 and lp_bad == 0 and suite["elapsed"] <= 30.0)
    record_acceptance(1, ok, f"{len(rows)} instances, max rel gap {worst['rel_gap']:.1e}, "
                      f"feas {worst['feasibility']:.1e}, concavity {worst['concavity']:.1e}, "
                      f"slackness {worst['slackness']:.1e}, LP mismatches {lp_bad}, "
                      f"{suite['elapsed']:.1f}s")
    assert ok


def test_criterion_02_cyclical_monotonicity(record_acceptance):
    t0 = time.perf_counter()
    checked = failures = 0
    for seed in range(200, 260):
        sp, mu, nu = random_instance(seed, max_n=40, max_support=10)
        support = solve_kantorovich(sp, mu, nu).support
        assert len(support) <= 20
        res = check_cyclical_monotonicity(support, 4, sp)
        checked += 1
        failures += (not res.passed) or res.partial
    line = MetricSpace(2, [(0, 1, 1.0)])
    swap = check_cyclical_monotonicity([(0, 1), (1, 0)], 4, line)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and not swap.passed and set(swap.violation) == {(0, 1), (1, 0)} and elapsed <= 10
    record_acceptance(2, ok, f"{checked} optimal supports pass cycles <= 4 ({failures} failures); "
                      f"swap rejected with cycle {swap.violation}; {elapsed:.1f}s")
    assert ok


def test_criterion_03_slope1st_bound(suite, record_acceptance):
    worst = min(r["slope1st_min"] for r in suite["rows"])
    bad = sum(r["slope1st_min"] < -1e-7 for r in suite["rows"])
    ok = bad == 0
    record_acceptance(3, ok, f"min slack {worst:.2e} over all support geodesics and aligned t; "
                      f"{bad} violating instances")
    assert ok


def test_criterion_04_example_audit(record_acceptance):
    t0 = time.perf_counter()
    es = build_example_space(4, 4)
    audit = example_space_audit(es)
    sp = es.space
    half = sp.dist[es.base_vertex(0), es.base_vertex(0.5)]
    mids = all(es.f[p[len(p) // 2]] == (k - 1) / 2 ** n for (n, k), p in es.arcs.items())
    lip = lipschitz_constant(sp, es.f)
    elapsed = time.perf_counter() - t0
    ok = (half == 0.75 and mids and all(s == 0.0 for s in audit.base_slopes)
          and abs(lip - 8 / 3) <= 1e-12 and audit.base_path_length == 2.0
          and audit.upper_gradient_fails and audit.variation == 1.0 and audit.slope_integral == 0.0
          and elapsed <= 20)
    record_acceptance(4, ok, f"d(0,1/2)={half}, midpoints exact={mids}, "
                      f"max base slope={max(audit.base_slopes)}, Lip={lip:.15f}, "
                      f"base length={audit.base_path_length}, |f(0)-f(1)|={audit.variation} > "
                      f"{audit.slope_integral}; {elapsed:.1f}s")
    assert ok


def test_criterion_05_slope_chain(record_acceptance):
    spaces = {
        "segment": build_segment(24),
        "unit_segment": build_unit_segment(33),
        "grid": build_grid(6, 5),
        "tripod": build_tripod(6),
        "cycle": build_cycle(12),
        "star": build_star(6),
        "arc_space": build_example_space(3, 4).space,
    }
    rng = np.random.default_rng(5)
    violations = cells = 0
    for sp in spaces.values():
        for _ in range(20):
            f = rng.uniform(-1, 1, sp.n)
            rep = slope_report(f, sp)
            violations += len(rep.chain_violations())
            cells += rep.slope_plus.size
    ok = violations == 0
    record_acceptance(5, ok, f"{violations} violations over {cells} vertex/radius cells "
                      f"({len(spaces)} spaces x 20 functions)")
    assert ok


def test_criterion_06_metric_brenier(record_acceptance):
    t0 = time.perf_counter()
    rep = lab.run(lab.ExperimentConfig(experiment="metric_brenier", **SHIFT))
    elapsed = time.perf_counter() - t0
    per = rep["results"]["per_resolution"]
    errors = [p["error"] for p in per]
    w2 = per[-1]["w2"]
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    ok = (abs(w2 - 0.5) <= 1e-6 and errors[-1] <= 0.1 and decreasing and rep["passed"]
          and elapsed <= 60)
    record_acceptance(6, ok, f"W2={w2:.9f}, errors {['%.4f' % e for e in errors]} "
                      f"(decreasing={decreasing}), invariants={rep['passed']}; {elapsed:.1f}s")
    assert ok


def test_criterion_07_pointwise_quotient(record_acceptance):
    rep = lab.run(lab.ExperimentConfig(experiment="pointwise_diff", **SHIFT))
    cols = rep["tables"]["quotients"]["columns"]
    idx = {c: cols.index(c) for c in cols}
    inside = total = 0.0
    for res in (129,):
        h = 1.0 / (res - 1)
        rows = [r for r in rep["tables"]["quotients"]["rows"] if r[idx["resolution"]] == res]
        first = {}
        for r in rows:
            key = r[idx["geodesic"]]
            if key not in first or r[idx["t"]] < first[key][idx["t"]]:
                first[key] = r
        for r in first.values():
            d, t, q, m = r[idx["distance"]], r[idx["t"]], r[idx["quotient"]], r[idx["mass"]]
            total += m
            if (2 - t) / 2 * d - 1e-7 <= q <= d + 0.5 * h * (1 + 2 * d):
                inside += m
    frac = inside / total
    ok = frac == 1.0 and rep["passed"]
    record_acceptance(7, ok, f"{frac:.0%} of moving mass inside the window at the smallest aligned t "
                      f"(n=129); exact bounds hold={rep['passed']}")
    assert ok


def test_criterion_08_branching(record_acceptance):
    nonbranching = {"segment": build_segment(40), "unit_segment": build_unit_segment(65),
                    "grid": build_grid(4, 4)}
    counts = {k: len(detect_branching(sp, max_witnesses=1000)) for k, sp in nonbranching.items()}
    branching = {"tripod": len(detect_branching(build_tripod(3))),
                 "cycle4": len(detect_branching(build_cycle(4)))}
    tri = build_tripod(64)
    g = make_geodesic(tri, [0] + list(range(1, 65)))
    h = make_geodesic(tri, [0] + list(range(65, 129)))
    tri_ratios = strong_nonbranching_ratio(g, h, depth=6).ratios
    shared = MetricSpace(11, [(i, i + 1, 0.125) for i in range(8)] + [(8, 9, 1.0), (8, 10, 1.0)])
    sg = make_geodesic(shared, list(range(9)) + [9])
    sh = make_geodesic(shared, list(range(9)) + [10])
    shared_ratios = strong_nonbranching_ratio(sg, sh, depth=4).ratios
    clauses = {
        "path/segment zero witnesses": counts["segment"] == 0 and counts["unit_segment"] == 0,
        "grid zero witnesses": counts["grid"] == 0,
        "tripod and 4-cycle witnesses": all(v >= 1 for v in branching.values()),
        "tripod ratio 2": tri_ratios == (2.0,) * 6,
        "shared-edge ratio 0 at depth >= 2": all(r == 0.0 for r in shared_ratios[1:]),
    }
    ok = all(clauses.values())
    failed = [k for k, v in clauses.items() if not v]
    record_acceptance(8, ok, f"witnesses {counts | branching}; tripod ratios {set(tri_ratios)}; "
                      f"shared-edge ratios {shared_ratios[1:]}"
                      + (f"; failing clauses: {failed}" if failed else ""))
    assert ok


def test_criterion_09_gh_oracle(record_acceptance):
    corpus = gh_corpus()
    worst, pairs = 0.0, 0
    for i, A in enumerate(corpus):
        for B in corpus[i:]:
            res = gh_distance(A, B)
            assert res.method == "exact"
            worst = max(worst, abs(res.value - brute_gh(A, B)))
            pairs += 1
    eps = 0.37
    two = gh_distance(np.array([[0, 1.0], [1.0, 0]]), np.array([[0, 1 + eps], [1 + eps, 0]])).value
    ok = worst <= 1e-12 and abs(two - eps / 2) <= 1e-12
    record_acceptance(9, ok, f"{pairs} corpus pairs, max |exact - brute force| = {worst:.1e}; "
                      f"two-point perturbation {two} vs eps/2 = {eps / 2}")
    assert ok


def _criterion_reports() -> dict[str, str]:
    out = {"suite": json.dumps(duality_suite()["rows"], sort_keys=True)}
    for name, cfg in {
        "brenier": lab.ExperimentConfig(experiment="metric_brenier", **SHIFT),
        "pointwise": lab.ExperimentConfig(experiment="pointwise_diff", **SHIFT),
        "audit": lab.ExperimentConfig(experiment="arc_space_audit", params={"depth": 4, "resolution": 4}),
        "branching": lab.ExperimentConfig(experiment="branching_audit",
                                          space={"gallery": "grid", "params": {"w": 15, "h": 15}},
                                          params={"sample_pairs": 5, "exhaustive_limit": 100}, seed=3),
    }.items():
        out[name] = lab.report_json(lab.run(cfg))
    corpus = gh_corpus()
    out["gh"] = json.dumps([gh_distance(A, B).value for A in corpus for B in corpus])
    return out


def test_criterion_10_determinism(record_acceptance):
    first, second = _criterion_reports(), _criterion_reports()
    same = [k for k in first if first[k].encode() == second[k].encode()]
    ok = len(same) == len(first)
    record_acceptance(10, ok, f"{len(same)}/{len(first)} criterion reports byte-identical on rerun")
    assert ok
