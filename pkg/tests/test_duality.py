import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from helpers import random_instance
from otlab.duality import (
    PotentialPair,
    c_transform,
    check_cyclical_monotonicity,
    duality_gap,
    pair_from_phi,
    potential_quotient_bounds,
    slope1st_slack,
    solve,
    solve_dual,
    verify_potential,
)
from otlab.gallery import build_segment, build_unit_segment
from otlab.measure import Measure, dirac, uniform
from otlab.space import MetricSpace, first_geodesic
from otlab.transport import lift_to_geodesic_plan, make_plan, solve_kantorovich

TWO = MetricSpace(2, [(0, 1, 1.0)])


def test_c_transform_examples():
    sp = build_segment(4)
    assert c_transform(np.zeros(5), sp).tolist() == [0.0] * 5
    assert c_transform(np.array([0.0, 1.0]), TWO).tolist() == [-0.5, -1.0]
    with pytest.raises(ValueError):
        c_transform(np.full(2, -np.inf), TWO)
    assert c_transform(np.array([0.0, -np.inf]), TWO).tolist() == [0.0, 0.5]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_triple_transform_is_single(seed):
    sp, _, _ = random_instance(seed, max_n=20)
    phi = np.random.default_rng(seed).normal(size=sp.n)
    pc = c_transform(phi, sp)
    np.testing.assert_allclose(c_transform(c_transform(pc, sp), sp), pc, atol=1e-12)


def test_two_point_dual():
    mu, nu = dirac(2, 0), dirac(2, 1)
    pp = solve_dual(TWO, mu, nu)
    assert pp.dual_value == pytest.approx(0.5, abs=1e-15)
    plan = solve_kantorovich(TWO, mu, nu)
    assert duality_gap(plan, pp) == pytest.approx(0.0, abs=1e-15)
    assert verify_potential(pp, plan).residual == pytest.approx(0.0, abs=1e-15)
    g = first_geodesic(TWO, 0, 1)
    b = potential_quotient_bounds(pp, g, 1.0)
    assert b.quotient == pytest.approx(0.5) and b.lower == 0.5


def test_equal_marginals_dual_is_zero():
    sp = build_segment(5)
    mu = uniform(6)
    plan, pp = solve(sp, mu, mu)
    assert plan.cost == 0.0 and abs(pp.dual_value) <= 1e-15
    zero = pair_from_phi(np.zeros(6), sp, mu, mu)
    assert zero.dual_value == 0.0 and verify_potential(zero, plan).passed


def test_zero_potential_gap_is_cost():
    sp = build_segment(3)
    mu, nu = dirac(4, 0), dirac(4, 3)
    plan = solve_kantorovich(sp, mu, nu)
    zero = PotentialPair(np.zeros(4), np.zeros(4), 0.0, sp)
    assert duality_gap(plan, zero) == plan.cost


def test_suboptimal_plan_has_positive_gap():
    sp = MetricSpace(2, [(0, 1, 1.0)])
    mu = nu = uniform(2)
    swap = make_plan(sp, [(0, 1, 0.5), (1, 0, 0.5)], mu, nu)
    _, pp = solve(sp, mu, nu)
    assert duality_gap(swap, pp) > 0.5


def test_perturbed_potential_is_caught():
    sp, mu, nu = random_instance(21, max_n=15)
    plan, pp = solve(sp, mu, nu)
    x = int(plan.xs[0])
    phi = pp.phi.copy()
    phi[x] += 0.1
    bad = PotentialPair(phi, pp.phic, pp.dual_value, sp)
    rep = verify_potential(bad, plan)
    assert not rep.passed and rep.witness[0] == x


def test_shift_potential_is_affine_and_matches_lp_dual():
    # 9-vertex path, uniform on the first four shifted by four
    n, s = 9, 4
    sp = build_segment(n - 1)
    mu, nu = uniform(n, range(4)), uniform(n, range(4, 8))
    plan, pp = solve(sp, mu, nu)
    # the affine candidate -s x on the support is an optimal potential too
    phi0 = np.full(n, -np.inf)
    phi0[:4] = -s * np.arange(4.0)
    affine = pair_from_phi(phi0, sp, mu, nu)
    np.testing.assert_allclose(np.diff(affine.phi[:4]), -s, atol=1e-12)
    assert affine.feasibility_residual() <= 1e-12 and verify_potential(affine, plan).passed
    assert affine.dual_value == pytest.approx(pp.dual_value, abs=1e-12)
    # dual LP: max sum a phi + sum b psi, phi_i + psi_j <= d^2/2
    rows, cols = mu.support, nu.support
    c = 0.5 * sp.dist[np.ix_(rows, cols)] ** 2
    A = np.zeros((len(rows) * len(cols), len(rows) + len(cols)))
    for i in range(len(rows)):
        for j in range(len(cols)):
            A[i * len(cols) + j, i] = A[i * len(cols) + j, len(rows) + j] = 1
    obj = -np.concatenate([mu.masses[rows], nu.masses[cols]])
    res = linprog(obj, A_ub=A, b_ub=c.ravel(), bounds=(None, None), method="highs")
    assert pp.dual_value == pytest.approx(-res.fun, abs=1e-9)
    assert plan.cost == pytest.approx(2 * -res.fun, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_solve_invariants(seed):
    sp, mu, nu = random_instance(seed, max_n=30)
    plan, pp = solve(sp, mu, nu)
    assert pp.feasibility_residual() <= 1e-9
    assert pp.concavity_residual() <= 1e-9
    assert abs(duality_gap(plan, pp)) <= 1e-7 * max(1.0, plan.cost)
    assert verify_potential(pp, plan).passed
    for g, _ in lift_to_geodesic_plan(plan, sp):
        assert slope1st_slack(pp, g).min() >= -1e-7
        for t in g.times[1:]:
            b = potential_quotient_bounds(pp, g, t)
            assert b.lower - 1e-7 <= b.quotient <= b.upper + 1e-7
            assert b.ascent_excess <= 1e-7


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_dual_not_above_primal_for_any_feasible_pair(seed):
    sp, mu, nu = random_instance(seed, max_n=15)
    phi = np.random.default_rng(seed).normal(size=sp.n)
    pp = pair_from_phi(phi, sp, mu, nu)
    assert pp.feasibility_residual() <= 1e-9
    assert duality_gap(solve_kantorovich(sp, mu, nu), pp) >= -1e-9


def test_cyclical_examples():
    sp = build_segment(1)
    assert check_cyclical_monotonicity([(0, 0), (1, 1)], 4, sp).passed
    res = check_cyclical_monotonicity([(0, 1), (1, 0)], 4, sp)
    assert not res.passed and set(res.violation) == {(0, 1), (1, 0)} and res.excess == 2.0
    with pytest.raises(ValueError):
        check_cyclical_monotonicity([(0, 0)], 1, sp)


def test_cyclical_partial_flag():
    sp = build_unit_segment(30)
    support = [(i, i) for i in range(30)]
    res = check_cyclical_monotonicity(support, 4, sp, budget=1000)
    assert res.passed and res.partial and res.cycles_checked == 1000


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_optimal_support_cyclically_monotone(seed):
    sp, mu, nu = random_instance(seed, max_n=10)
    plan = solve_kantorovich(sp, mu, nu)
    res = check_cyclical_monotonicity(plan.support, 4, sp)
    assert res.passed and not res.partial


def test_potentials_csv():
    _, pp = solve(TWO, dirac(2, 0), dirac(2, 1))
    lines = pp.to_csv().splitlines()
    assert lines[0] == "vertex,phi,phic" and len(lines) == 3
