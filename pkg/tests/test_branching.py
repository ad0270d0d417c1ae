import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import brute_gh, gh_corpus, random_space
from otlab.branching import (
    TANGENT_LEGEND,
    detect_branching,
    gh_distance,
    rescale,
    rescale_ball,
    strong_nonbranching_ratio,
    tangent_ladder_report,
)
from otlab.gallery import build_cycle, build_grid, build_segment, build_tripod, build_unit_segment
from otlab.slopes import ScaleLadder
from otlab.space import MetricSpace, make_geodesic


def test_path_has_no_witness():
    assert detect_branching(build_segment(12)) == []


def test_tripod_witness_splits_after_centre():
    sp = build_tripod(1)
    wit = detect_branching(sp)
    assert wit and all(w.kind == "branch" for w in wit)
    w = wit[0]
    assert w.g.vertices[:2] == w.h.vertices[:2] and w.g.vertices[1] == 0
    assert w.agree_time == 0.5 and w.split_times == (1.0,)


def test_four_cycle_witness():
    wit = detect_branching(build_cycle(4))
    w = next(w for w in wit if {w.g.vertices, w.h.vertices} == {(0, 1, 2), (0, 3, 2)})
    assert w.kind == "nonunique" and 0.5 in w.split_times


def test_grid_branches():
    # on the l1 grid, (0,0)->(2,0) and (0,0)->(1,1) pass through (1,0) at t = 1/2
    sp = build_grid(3, 3)
    w_ids = {(w.g.vertices, w.h.vertices) for w in detect_branching(sp, max_witnesses=100)}
    assert ((0, 1, 2), (0, 1, 4)) in w_ids


def test_sampled_mode_is_seeded():
    sp = build_grid(15, 15)
    a = detect_branching(sp, sample_pairs=3, seed=4, exhaustive_limit=10, max_witnesses=2)
    b = detect_branching(sp, sample_pairs=3, seed=4, exhaustive_limit=10, max_witnesses=2)
    assert [(w.g.vertices, w.h.vertices) for w in a] == [(w.g.vertices, w.h.vertices) for w in b]


def test_tripod_ratio_is_two_at_every_depth():
    sp = build_tripod(64)
    g, h = make_geodesic(sp, [0] + list(range(1, 65))), make_geodesic(sp, [0] + list(range(65, 129)))
    rl = strong_nonbranching_ratio(g, h, depth=6)
    assert rl.ratios == (2.0,) * 6 and rl.verdict == "bounded"


def test_shared_first_edge_ratio_vanishes():
    sp = MetricSpace(11, [(i, i + 1, 0.125) for i in range(8)] + [(8, 9, 1.0), (8, 10, 1.0)])
    g = make_geodesic(sp, list(range(9)) + [9])
    h = make_geodesic(sp, list(range(9)) + [10])
    rl = strong_nonbranching_ratio(g, h, depth=4)
    assert rl.ratios[1:] == (0.0, 0.0, 0.0) and rl.verdict == "decaying"


def test_ratio_preconditions():
    sp = build_cycle(4)
    with pytest.raises(ValueError):
        strong_nonbranching_ratio(make_geodesic(sp, [0, 1]), make_geodesic(sp, [1, 2]))
    with pytest.raises(ValueError):
        strong_nonbranching_ratio(make_geodesic(sp, [0, 1, 2]), make_geodesic(sp, [0, 3, 2]))


def test_rescale_ball_examples():
    sp = build_segment(10)
    tiny = rescale_ball(sp, 5, 0.5)
    assert tiny.space.n == 1
    pt = rescale_ball(sp, 5, 2.0)
    assert pt.space.n == 5 and pt.source_vertices == (3, 4, 5, 6, 7) and pt.convex
    assert sorted(pt.space.dist[pt.basepoint].tolist()) == [0.0, 0.5, 0.5, 1.0, 1.0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.3, 3.0))
def test_rescale_round_trip(seed, r):
    sp = random_space(np.random.default_rng(seed), 15, extra=0.5)
    pt = rescale_ball(sp, 0, r)
    back = rescale(pt.space, r)
    v = list(pt.source_vertices)
    # dividing then multiplying by r is exact up to one rounding step
    np.testing.assert_allclose(back.dist, sp.dist[np.ix_(v, v)], rtol=2.3e-16, atol=0)


def test_gh_examples():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    for eps in (0.3, 0.01, 1.0):
        B = np.array([[0.0, 1 + eps], [1 + eps, 0.0]])
        assert gh_distance(A, B).value == pytest.approx(eps / 2, abs=1e-15)
    one = np.zeros((1, 1))
    D = 1.7
    assert gh_distance(one, np.array([[0.0, D], [D, 0.0]])).value == D / 2
    sp = build_cycle(5)
    res = gh_distance(sp, sp)
    assert res.value == 0.0 and res.method == "exact"


def test_gh_matches_brute_force_on_corpus():
    corpus = gh_corpus()
    for i, A in enumerate(corpus):
        for B in corpus[i:]:
            res = gh_distance(A, B)
            assert res.method == "exact"
            assert abs(res.value - brute_gh(A, B)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 5))
def test_gh_properties(seed, na, nb):
    rng = np.random.default_rng(seed)
    A = random_space(rng, na).dist
    B = random_space(rng, nb).dist
    ab, ba = gh_distance(A, B).value, gh_distance(B, A).value
    assert ab == ba
    assert ab >= 0.5 * abs(A.max() - B.max()) - 1e-12
    assert ab <= 0.5 * max(A.max(), B.max()) + 1e-12
    assert abs(ab - brute_gh(A, B)) <= 1e-12


def test_gh_upper_bound_mode():
    A = build_unit_segment(12)
    B = build_unit_segment(9)
    res = gh_distance(A, B)
    assert res.method == "upper_bound"
    assert 0.5 * abs(A.diameter - B.diameter) <= res.value <= 0.5


def test_tangent_ladder_on_fine_path():
    sp = build_unit_segment(257)
    rep = tangent_ladder_report(sp, 128, ScaleLadder((0.25, 0.125, 0.0625)))
    assert rep.legend == TANGENT_LEGEND
    assert all(s.gh <= 0.1 for s in rep.steps)
    assert rep.witnesses == (0, 0, 0)


def test_tangent_ladder_tripod_centre():
    sp = build_tripod(8)
    rep = tangent_ladder_report(sp, 0, ScaleLadder((2.0, 1.0)))
    assert all(w >= 1 for w in rep.witnesses)
    # balls of radius 2 and 1 are unit tripods with two and one edges per leg;
    # the finer one is not isometric to the coarser, so the distance is the
    # pointed brute-force value rather than 0
    A, B = rescale_ball(sp, 0, 2.0), rescale_ball(sp, 0, 1.0)
    assert rep.steps[0].method == "exact"
    assert rep.steps[0].gh == brute_gh(A.space.dist, B.space.dist, (A.basepoint, B.basepoint))


def test_tangent_ladder_leaf_has_no_witness():
    sp = build_tripod(8)
    rep = tangent_ladder_report(sp, 8, ScaleLadder((4.0, 2.0, 1.0)))
    assert rep.witnesses == (0, 0, 0)
