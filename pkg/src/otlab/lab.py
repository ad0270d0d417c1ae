"""Experiment runner: configs, runs, invariant checks and report files.

A report is a plain dict::

    {"experiment", "config", "header", "results", "tables", "checks", "passed"}

``tables`` hold long-format rows (one observation per row) and ``checks``
list every asserted invariant.  Checks of kind ``"exact"`` are identities
that hold on any finite instance; a failing one makes ``passed`` false and
the CLI exit nonzero.  Checks of kind ``"resolution"`` compare against
``C * h`` style thresholds and are reported without gating the exit code.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from otlab import gallery
from otlab.branching import detect_branching, strong_nonbranching_ratio, tangent_ladder_report
from otlab.duality import (
    duality_gap,
    potential_quotient_bounds,
    slope1st_slack,
    solve,
    verify_potential,
)
from otlab.measure import (
    Measure,
    MeasureError,
    density_of,
    dirac,
    doubling_constant,
    interpolant_density,
    relative_entropy,
    uniform,
)
from otlab.slopes import ScaleLadder, default_ladder, slope_along_geodesics, slope_report
from otlab.space import MetricSpace, build_space, geodesic_point
from otlab.transport import extract_map, lift_to_geodesic_plan

EXPERIMENTS = ("metric_brenier", "pointwise_diff", "map_extraction", "arc_space_audit",
               "branching_audit", "entropy_profile")

DEFAULT_TOLERANCES = {
    "identity": 1e-7,       # relative, for exact identities
    "feasibility": 1e-9,    # dual feasibility and c-concavity
    "marginal": 1e-9,
    "resolution_C": 0.5,    # constant in C * h thresholds
}

THREADS_ENV = "OTLAB_THREADS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    space: dict = field(default_factory=dict)
    mu: Any = None
    nu: Any = None
    reference: Any = None
    ladder: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output_dir: str = "otlab_out"
    seed: int = 0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; known: {', '.join(EXPERIMENTS)}")
        tol = {**DEFAULT_TOLERANCES, **self.tolerances}
        for k, v in tol.items():
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"tolerance {k!r} must be a positive number, got {v!r}")
        object.__setattr__(self, "tolerances", tol)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {"experiment", "space", "mu", "nu", "reference", "ladder", "tolerances",
                 "params", "output_dir", "seed"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "experiment" not in data:
            raise ConfigError("config needs an 'experiment' name")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "space": self.space, "mu": self.mu, "nu": self.nu,
                "reference": self.reference, "ladder": self.ladder, "tolerances": self.tolerances,
                "params": self.params, "output_dir": self.output_dir, "seed": self.seed}


# ------------------------------------------------------------------ inputs
def resolve_measure(spec, space: MetricSpace) -> Measure:
    """Measure from a spec.

    Accepted forms: ``{"masses": [...]}``, ``{"dirac": v}``,
    ``{"uniform": [v, ...]}`` or ``{"uniform": "all"}``, and
    ``{"interval": [a, b]}``: uniform on vertices whose normalized distance
    ``d(0, v) / diam`` lies in ``[a, b]`` (meant for segments).
    """
    n = space.n
    if spec is None:
        raise ConfigError("measure spec missing")
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError(f"measure spec must be a one-key object, got {spec!r}")
    (kind, arg), = spec.items()
    if kind == "masses":
        mu = Measure(np.asarray(arg, dtype=float))
        if len(mu) != n:
            raise ConfigError(f"measure has {len(mu)} masses, space has {n} vertices")
    elif kind == "dirac":
        mu = dirac(n, int(arg))
    elif kind == "uniform":
        mu = uniform(n, None if arg == "all" else [int(v) for v in arg])
    elif kind == "interval":
        a, b = (float(x) for x in arg)
        x = space.dist[0] / (space.diameter or 1.0)
        sel = np.flatnonzero((x >= a - 1e-12) & (x <= b + 1e-12))
        if len(sel) == 0:
            raise ConfigError(f"interval {arg} holds no vertex")
        mu = uniform(n, sel)
    else:
        raise ConfigError(f"unknown measure kind {kind!r}")
    if not mu.is_probability():
        raise ConfigError(f"measure {spec!r} is not a probability measure (total {mu.total})")
    return mu


def _reference(cfg: ExperimentConfig, space: MetricSpace) -> Measure:
    return uniform(space.n) if cfg.reference is None else resolve_measure(cfg.reference, space)


def _ladder(cfg: ExperimentConfig, space: MetricSpace) -> ScaleLadder:
    if "radii" in cfg.ladder:
        return ScaleLadder(tuple(cfg.ladder["radii"]), cfg.ladder.get("hop_horizon", 4))
    return default_ladder(space, cfg.ladder.get("levels", 8), cfg.ladder.get("hop_horizon", 4))


def _resolved_space(cfg: ExperimentConfig, resolution: int | None) -> dict:
    if resolution is None:
        return cfg.space
    if "gallery" not in cfg.space:
        raise ConfigError("'resolutions' needs a gallery space spec")
    key = cfg.params.get("resolution_key", "n_vertices")
    return {**cfg.space, "params": {**cfg.space.get("params", {}), key: int(resolution)}}


def workers() -> int:
    """Worker count from ``OTLAB_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return k


def _map_ordered(fn: Callable, items: list) -> list:
    """``map`` that fans out over processes when ``OTLAB_THREADS > 1``; order is kept."""
    k = min(workers(), len(items))
    if k <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))


def _check(name: str, kind: str, value: float, threshold: float, passed: bool) -> dict:
    return {"name": name, "kind": kind, "value": float(value), "threshold": float(threshold),
            "passed": bool(passed)}


def _report(cfg: ExperimentConfig, header: dict, results: dict, tables: dict, checks: list) -> dict:
    passed = all(c["passed"] for c in checks if c["kind"] == "exact")
    return {"experiment": cfg.experiment, "config": cfg.to_dict(), "header": header,
            "results": results, "tables": tables, "checks": checks, "passed": passed}


# ------------------------------------------------------------------ transport core
def _transport_instance(cfg: ExperimentConfig, space: MetricSpace) -> dict:
    """Solve, lift and run the invariants every transport experiment re-asserts."""
    tol = cfg.tolerances
    mu, nu = resolve_measure(cfg.mu, space), resolve_measure(cfg.nu, space)
    plan, pp = solve(space, mu, nu)
    gplan = lift_to_geodesic_plan(plan, space)
    cost = plan.cost
    gap = duality_gap(plan, pp)
    slack = verify_potential(pp, plan)
    s1 = min((float(slope1st_slack(pp, g).min()) for g, _ in gplan), default=0.0)
    ladder = _ladder(cfg, space)
    sources = sorted({int(x) for x in plan.xs})
    rep = slope_report(pp.phi, space, ladder, vertices=sources)
    chain = rep.chain_violations()
    checks = [
        _check("marginal_conservation", "exact", plan.marginal_error(), tol["marginal"],
               plan.marginal_error() <= tol["marginal"]),
        _check("duality_gap_relative", "exact", abs(gap) / max(1.0, abs(cost)), tol["identity"],
               abs(gap) <= tol["identity"] * max(1.0, abs(cost))),
        _check("dual_feasibility", "exact", pp.feasibility_residual(), tol["feasibility"],
               pp.feasibility_residual() <= tol["feasibility"]),
        _check("c_concavity", "exact", pp.concavity_residual(), tol["feasibility"],
               pp.concavity_residual() <= tol["feasibility"]),
        _check("complementary_slackness", "exact", slack.residual, tol["identity"], slack.passed),
        _check("slope1st_bound", "exact", s1, -tol["identity"], s1 >= -tol["identity"]),
        _check("slope_chain", "exact", len(chain), 0, not chain),
    ]
    return {"mu": mu, "nu": nu, "plan": plan, "pp": pp, "gplan": gplan, "ladder": ladder,
            "cost": cost, "checks": checks, "slopes": rep}


def _resolutions(cfg: ExperimentConfig) -> list:
    res = cfg.params.get("resolutions")
    return [None] if res is None else [int(r) for r in res]


def _tag(checks: list, resolution) -> list:
    if resolution is None:
        return checks
    return [{**c, "name": f"{c['name']}[{resolution}]"} for c in checks]


# ------------------------------------------------------------------ metric Brenier
def _entropy_rows(gplan, m: Measure, times) -> tuple[list, float]:
    rows, worst = [], 0.0
    for t in times:
        dens = interpolant_density(gplan, t, m)
        try:
            h = relative_entropy(dens.density)
        except MeasureError:
            h = float("nan")
        worst = max(worst, dens.max_snap_error)
        rows.append([float(t), h, dens.max_snap_error, dens.snapped_mass])
    return rows, worst


def _brenier_one(args) -> dict:
    cfg, resolution = args
    space = build_space(_resolved_space(cfg, resolution))
    inst = _transport_instance(cfg, space)
    m = _reference(cfg, space)
    ladder = inst["ladder"]
    slope_at = {}
    rows = []
    err = 0.0
    for g, q in inst["gplan"]:
        x = g.start
        if x not in slope_at:
            slope_at[x] = float(slope_along_geodesics(inst["pp"].phi, x, ladder, space).values[-1])
        e = abs(slope_at[x] - g.length)
        err += q * e
        rows.append([resolution or space.n, int(x), int(g.end), float(q), g.length, slope_at[x], e])
    times = cfg.params.get("times", [k / 8 for k in range(9)])
    ent, snap = _entropy_rows(inst["gplan"], m, times)
    ent = [[resolution or space.n] + r for r in ent]
    dens0 = density_of(inst["mu"], m)
    return {"n": space.n, "h": space.max_edge, "w2": math.sqrt(max(inst["cost"], 0.0)),
            "cost": inst["cost"], "error": err, "rows": rows, "entropy": ent,
            "absolutely_continuous": dens0.absolutely_continuous,
            "entropy_finite": all(math.isfinite(r[2]) for r in ent),
            "max_snap_error": snap, "checks": _tag(inst["checks"], resolution),
            "witnesses": len(detect_branching(space, sample_pairs=cfg.params.get("branch_samples", 64),
                                              seed=cfg.seed, max_witnesses=4))
            if cfg.params.get("branching", False) else None}


def run_metric_brenier(cfg: ExperimentConfig) -> dict:
    """Headline slope of the potential at plan sources against transport distance.

    Reports the mass-weighted L1 error ``sum q |slope_g phi(x) - d(x, y)|``
    per resolution, the entropy profile along the interpolation and the
    hypothesis flags (absolute continuity of ``mu`` and finite entropy).
    """
    outs = _map_ordered(_brenier_one, [(cfg, r) for r in _resolutions(cfg)])
    checks = [c for o in outs for c in o["checks"]]
    errors = [o["error"] for o in outs]
    if len(outs) > 1:
        mono = all(b < a for a, b in zip(errors, errors[1:]))
        checks.append(_check("error_decreasing", "resolution", float(mono), 1.0, mono))
    bound = cfg.params.get("error_bound")
    if bound is not None:
        checks.append(_check("error_bound", "resolution", errors[-1], bound, errors[-1] <= bound))
    header = {"tolerances": cfg.tolerances, "C": cfg.tolerances["resolution_C"],
              "h": [o["h"] for o in outs], "radius": "smallest ladder radius"}
    results = {"per_resolution": [{k: o[k] for k in ("n", "h", "w2", "cost", "error",
                                                     "absolutely_continuous", "entropy_finite",
                                                     "max_snap_error", "witnesses")}
                                  for o in outs]}
    tables = {
        "brenier": {"columns": ["resolution", "source", "target", "mass", "distance",
                                "slope_geodesics", "abs_error"],
                    "rows": [r for o in outs for r in o["rows"]]},
        "entropy": {"columns": ["resolution", "t", "relative_entropy", "max_snap_error",
                                "snapped_mass"],
                    "rows": [r for o in outs for r in o["entropy"]]},
    }
    return _report(cfg, header, results, tables, checks)


# ------------------------------------------------------------------ pointwise quotient
def _pointwise_one(args) -> dict:
    cfg, resolution = args
    tol = cfg.tolerances
    C = tol["resolution_C"]
    space = build_space(_resolved_space(cfg, resolution))
    inst = _transport_instance(cfg, space)
    m = _reference(cfg, space)
    h = space.max_edge
    rows = []
    low_bad = up_bad = 0
    inside, moving = 0.0, 0.0
    for i, (g, q) in enumerate(inst["gplan"]):
        if len(g) < 2:
            continue
        moving += q
        for j, t in enumerate(g.times[1:], start=1):
            b = potential_quotient_bounds(inst["pp"], g, t)
            low_bad += b.quotient < b.lower - tol["identity"]
            up_bad += b.quotient > b.upper + tol["identity"]
            rows.append([resolution or space.n, i, int(g.start), int(g.end), float(q), float(t),
                         b.quotient, b.lower, b.upper, g.length])
            if j == 1:
                hi = g.length + C * h * (1 + 2 * g.length)
                if b.lower - tol["identity"] <= b.quotient <= hi:
                    inside += q
    frac = inside / moving if moving > 0 else 1.0
    checks = inst["checks"] + [
        _check("quotient_lower_bound", "exact", low_bad, 0, low_bad == 0),
        _check("quotient_upper_bound", "exact", up_bad, 0, up_bad == 0),
        _check("smallest_t_window_mass", "resolution", frac, 1.0, frac >= 1.0 - 1e-12),
    ]
    return {"n": space.n, "h": h, "doubling": doubling_constant(space, m),
            "window_mass": frac, "rows": rows, "checks": _tag(checks, resolution)}


def run_pointwise_diff(cfg: ExperimentConfig) -> dict:
    """Difference quotients of the potential along support geodesics.

    For every aligned ``t`` the table holds the quotient
    ``(phi(g_0) - phi(g_t)) / d(g_0, g_t)``, the exact lower bound
    ``(2 - t)/2 d(g_0, g_1)`` and the c-concavity upper bound.  At the
    smallest aligned time the quotient is also compared with the window
    ``[lower, d + C h (1 + 2 d)]``.
    """
    outs = _map_ordered(_pointwise_one, [(cfg, r) for r in _resolutions(cfg)])
    header = {"tolerances": cfg.tolerances, "C": cfg.tolerances["resolution_C"],
              "h": [o["h"] for o in outs],
              "window": "[(2 - t)/2 d - tol, d + C h (1 + 2 d)] at the smallest aligned t"}
    results = {"per_resolution": [{k: o[k] for k in ("n", "h", "doubling", "window_mass")} for o in outs]}
    tables = {"quotients": {"columns": ["resolution", "geodesic", "source", "target", "mass", "t",
                                        "quotient", "lower", "upper", "distance"],
                            "rows": [r for o in outs for r in o["rows"]]}}
    return _report(cfg, header, results, tables, [c for o in outs for c in o["checks"]])


# ------------------------------------------------------------------ map extraction
def _map_one(args) -> dict:
    cfg, resolution = args
    space = build_space(_resolved_space(cfg, resolution))
    inst = _transport_instance(cfg, space)
    tols = cfg.params.get("map_tolerances", [0.0, 0.01, 0.1])
    rows = []
    for tol in tols:
        r = extract_map(inst["plan"], tol)
        rows.append([resolution or space.n, float(tol), r.split_mass_fraction, len(r.split),
                     bool(r.is_map)])
    wit = detect_branching(space, seed=cfg.seed, max_witnesses=cfg.params.get("max_witnesses", 4))
    return {"n": space.n, "split": rows[0][2], "rows": rows,
            "plan": [[resolution or space.n, int(x), int(y), float(q)] for x, y, q in inst["plan"]],
            "witnesses": [_witness_dict(w) for w in wit],
            "checks": _tag(inst["checks"], resolution)}


def run_map_extraction(cfg: ExperimentConfig) -> dict:
    """Split mass of the optimal plan across tolerances and resolutions."""
    outs = _map_ordered(_map_one, [(cfg, r) for r in _resolutions(cfg)])
    checks = [c for o in outs for c in o["checks"]]
    splits = [o["split"] for o in outs]
    if len(outs) > 1:
        mono = all(b <= a + 1e-12 for a, b in zip(splits, splits[1:]))
        checks.append(_check("split_nonincreasing", "resolution", float(mono), 1.0, mono))
        worst = max(s - 2.0 / (o["n"] - 1) for s, o in zip(splits, outs))
        checks.append(_check("split_below_2_over_n", "resolution", worst, 0.0, worst <= 1e-12))
    results = {"per_resolution": [{"n": o["n"], "split_mass_fraction": o["split"],
                                   "witnesses": o["witnesses"]} for o in outs]}
    tables = {
        "splits": {"columns": ["resolution", "tol", "split_mass_fraction", "split_sources", "is_map"],
                   "rows": [r for o in outs for r in o["rows"]]},
        "plan": {"columns": ["resolution", "source", "target", "mass"],
                 "rows": [r for o in outs for r in o["plan"]]},
    }
    return _report(cfg, {"tolerances": cfg.tolerances}, results, tables, checks)


# ------------------------------------------------------------------ entropy profile
def run_entropy_profile(cfg: ExperimentConfig) -> dict:
    """Relative entropy of the displacement interpolation on a time grid."""
    space = build_space(cfg.space)
    inst = _transport_instance(cfg, space)
    m = _reference(cfg, space)
    times = cfg.params.get("times", [k / 8 for k in range(9)])
    rows, snap = _entropy_rows(inst["gplan"], m, times)
    results = {"w2": math.sqrt(max(inst["cost"], 0.0)), "max_snap_error": snap,
               "entropy_finite": all(math.isfinite(r[1]) for r in rows)}
    tables = {"entropy": {"columns": ["t", "relative_entropy", "max_snap_error", "snapped_mass"],
                          "rows": rows}}
    return _report(cfg, {"tolerances": cfg.tolerances, "snap": "nearest path vertex"},
                   results, tables, inst["checks"])


# ------------------------------------------------------------------ audits
def run_arc_space_audit(cfg: ExperimentConfig) -> dict:
    depth = int(cfg.params.get("depth", 4))
    res = int(cfg.params.get("resolution", 4))
    es = gallery.build_example_space(depth, res)
    audit = gallery.example_space_audit(es)
    sp = es.space
    checks = [
        _check("nbound_arcs", "exact", len(audit.nbound_failures), 0, not audit.nbound_failures),
        _check("base_edges_off_geodesics", "exact", len(audit.base_edges_on_geodesics), 0,
               not audit.base_edges_on_geodesics),
        _check("d(0,1/2)", "exact", sp.dist[es.base_vertex(0), es.base_vertex(0.5)], 0.75,
               sp.dist[es.base_vertex(0), es.base_vertex(0.5)] == 0.75),
        _check("arc_midpoints", "exact", audit.midpoint_errors, 0.0, audit.midpoint_errors == 0.0),
        _check("lipschitz", "exact", audit.lipschitz, audit.lipschitz_expected,
               abs(audit.lipschitz - audit.lipschitz_expected) <= 1e-12),
        _check("base_slope_zero", "exact", max(audit.base_slopes), 0.0,
               all(s == 0.0 for s in audit.base_slopes)),
        _check("base_path_length", "exact", audit.base_path_length, 2.0,
               abs(audit.base_path_length - 2.0) <= 1e-12),
        _check("upper_gradient_fails", "exact", audit.variation - audit.slope_integral, 0.0,
               audit.upper_gradient_fails),
    ]
    rows = [[int(v), es.coordinate(v), s] for v, s in zip(es.base_vertices, audit.base_slopes)]
    tables = {"base_slopes": {"columns": ["vertex", "x", "slope_geodesics"], "rows": rows}}
    return _report(cfg, {"depth": depth, "resolution": res}, audit.to_dict(), tables, checks)


def _witness_dict(w) -> dict:
    return {"kind": w.kind, "g": list(w.g.vertices), "h": list(w.h.vertices),
            "agree_time": w.agree_time, "split_times": list(w.split_times),
            "ratios": list(w.ratio_ladder)}


def run_branching_audit(cfg: ExperimentConfig) -> dict:
    """Branching witnesses, their ratio ladders and an optional tangent ladder.

    ``params.expect_witnesses`` (bool) turns the presence or absence of
    witnesses into a gating check.
    """
    space = build_space(cfg.space)
    p = cfg.params
    wit = detect_branching(space, sample_pairs=p.get("sample_pairs"), seed=cfg.seed,
                           max_witnesses=p.get("max_witnesses", 8),
                           exhaustive_limit=p.get("exhaustive_limit", 200))
    results = {"n": space.n, "witnesses": [_witness_dict(w) for w in wit]}
    rows = [[i, w.kind, 2.0 ** -(k + 1), "" if r is None else r] for i, w in enumerate(wit)
            for k, r in enumerate(w.ratio_ladder)]
    tables = {"ratios": {"columns": ["witness", "kind", "t", "ratio"], "rows": rows}}
    checks = []
    if "expect_witnesses" in p:
        want = bool(p["expect_witnesses"])
        checks.append(_check("witnesses_present" if want else "no_witnesses", "exact",
                             len(wit), 1 if want else 0, bool(wit) == want))
    if "basepoint" in p:
        tl = tangent_ladder_report(space, int(p["basepoint"]), _ladder(cfg, space),
                                   budget=p.get("gh_budget", 49), seed=cfg.seed)
        results["tangent"] = {"legend": tl.legend, "witnesses": list(tl.witnesses)}
        tables["tangent"] = {"columns": ["r_outer", "r_inner", "gh", "method"],
                             "rows": [[s.r_outer, s.r_inner, s.gh, s.method] for s in tl.steps]}
    if "ratio_pair" in p:
        from otlab.space import make_geodesic
        a, b = p["ratio_pair"]
        rl = strong_nonbranching_ratio(make_geodesic(space, a), make_geodesic(space, b),
                                       depth=p.get("depth", 6))
        results["ratio_pair"] = {"times": list(rl.times), "ratios": list(rl.ratios),
                                 "verdict": rl.verdict}
    return _report(cfg, {"exhaustive_limit": p.get("exhaustive_limit", 200)}, results, tables, checks)


RUNNERS = {
    "metric_brenier": run_metric_brenier,
    "pointwise_diff": run_pointwise_diff,
    "map_extraction": run_map_extraction,
    "entropy_profile": run_entropy_profile,
    "arc_space_audit": run_arc_space_audit,
    "branching_audit": run_branching_audit,
}


def run(cfg: ExperimentConfig) -> dict:
    return RUNNERS[cfg.experiment](cfg)


# ------------------------------------------------------------------ output
def _clean(x):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def report_schema() -> dict:
    text = resources.files("otlab").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(report: dict) -> None:
    import jsonschema

    jsonschema.validate(_clean(report), report_schema())


def report_json(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def table_csv(table: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table["columns"])
    for row in _clean(table["rows"]):
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def checks_csv(report: dict) -> str:
    cols = ["name", "kind", "value", "threshold", "passed"]
    return table_csv({"columns": cols, "rows": [[c[k] for k in cols] for c in report["checks"]]})


def load_table_csv(path: str | os.PathLike) -> dict:
    """Read a table written by :func:`emit_report`; numbers and booleans are parsed back."""
    def parse(s: str):
        if s in ("True", "False"):
            return s == "True"
        for conv in (int, float):
            try:
                return conv(s)
            except ValueError:
                pass
        return s

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return {"columns": rows[0], "rows": [[parse(v) for v in r] for r in rows[1:]]}


def emit_report(report: dict, out_dir: str | os.PathLike, fmt: str = "json") -> list[Path]:
    """Write ``report.json`` or one long-format CSV per table plus ``checks.csv``."""
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown report format {fmt!r}")
    out = Path(out_dir)
    files: dict[str, str] = {}
    if fmt == "json":
        validate_report(report)
        files["report.json"] = report_json(report)
    else:
        for name in sorted(report["tables"]):
            files[f"{name}.csv"] = table_csv(report["tables"][name])
        files["checks.csv"] = checks_csv(report)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            path = out / name
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return written
