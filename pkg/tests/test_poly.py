import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcpoly import (
    AffineMinorant,
    Box,
    EpigraphPoly,
    enumerate_vertices_bruteforce,
    init_epigraph,
    intersect_halfspace,
    max_over_box_vertices,
)
from dcpoly.oracles import registry_build

from _support import lifted, minorant, quadratic_1d, random_instance, same_vertex_set


def pts(poly):
    return {tuple(np.round(row, 12)) for row in lifted(poly.vertices)}


def as_set(rows):
    return {tuple(float(v) for v in r) for r in rows}


# ---------------------------------------------------------------- Box


def test_box_rejects_degenerate_and_empty():
    with pytest.raises(ValueError):
        Box([0.0], [0.0])
    with pytest.raises(ValueError):
        Box([1.0, 0.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        Box([], [])
    with pytest.raises(ValueError):
        Box([0.0], [np.inf])


def test_box_corners_are_lexicographic():
    corners = Box([0, 0], [1, 2]).corners()
    assert corners.tolist() == [[0, 0], [0, 2], [1, 0], [1, 2]]


def test_box_is_immutable():
    b = Box([0.0], [1.0])
    with pytest.raises(ValueError):
        b.lower[0] = 5.0


# ---------------------------------------------------------------- AffineMinorant


def test_minorant_from_subgradient_is_exact_at_anchor():
    s = AffineMinorant.from_subgradient(4.0, [2.0, -1.0], [1.0, 3.0])
    assert s.evaluate([1.0, 3.0]) == pytest.approx(4.0, abs=1e-15)
    assert s.evaluate(np.array([[1.0, 3.0], [0.0, 0.0]])).tolist() == pytest.approx([4.0, 5.0])


def test_minorant_normal_never_cuts_the_upward_ray():
    s = minorant([3.0, -2.0], 1.0)
    assert s.normal()[-1] == 1.0


def test_minorant_dict_roundtrip():
    s = AffineMinorant.from_subgradient(1.5, [0.5], [2.0])
    assert AffineMinorant.from_dict(json.loads(json.dumps(s.to_dict()))).to_dict() == s.to_dict()


# ---------------------------------------------------------------- init_epigraph


def test_init_parabola_tangent_lifts_interval_ends():
    poly = init_epigraph(Box([-1], [1]), minorant([0.0], 0.0))
    assert pts(poly) == {(-1.0, 0.0), (1.0, 0.0)}
    assert len(poly.minorants) == 1


def test_init_ex4_cut_lifts_four_corners():
    cut = AffineMinorant.from_subgradient(0.25, [0.5, 0.5], [0.5, 0.5])
    poly = init_epigraph(Box([-2, -3], [3, 4]), cut)
    got = {tuple(r) for r in np.round(lifted(poly.vertices), 12)}
    assert got == {(-2.0, -3.0, -2.75), (-2.0, 4.0, 0.75), (3.0, -3.0, -0.25), (3.0, 4.0, 3.25)}


def test_init_unit_cube_constant_cut():
    poly = init_epigraph(Box(np.zeros(3), np.ones(3)), minorant([0, 0, 0], 0.0))
    assert len(poly) == 8
    assert all(v.height == 0.0 for v in poly.vertices)


def test_init_dimension_mismatch():
    with pytest.raises(ValueError):
        init_epigraph(Box([0, 0], [1, 1]), minorant([1.0], 0.0))


# ---------------------------------------------------------------- intersect_halfspace


def test_plane_cut_on_square():
    poly = init_epigraph(Box([-1, -1], [1, 1]), minorant([0, 0], 0.0))
    out = intersect_halfspace(poly, minorant([1, 1], -1.0))
    expect = {(-1, -1, 0), (1, -1, 0), (-1, 1, 0), (1, 0, 0), (0, 1, 0), (1, 1, 1)}
    assert pts(out) == as_set(expect)
    # non-mutating
    assert len(poly) == 4


def test_kink_in_one_dimension():
    poly = init_epigraph(Box([-1], [1]), minorant([0.0], 0.0))
    out = intersect_halfspace(poly, minorant([2.0], -1.0))
    assert pts(out) == as_set([(-1, 0), (0.5, 0), (1, 1)])


def test_dominated_cut_leaves_vertices_unchanged():
    poly = init_epigraph(Box([-1], [1]), minorant([0.0], 0.0))
    out = intersect_halfspace(poly, minorant([0.0], -10.0))
    assert pts(out) == pts(poly)
    assert len(out.minorants) == 2


def test_cut_through_existing_vertex_merges():
    poly = init_epigraph(Box([-1], [1]), minorant([0.0], 0.0))
    poly.add_cut(minorant([1.0], 0.0))  # kink at 0
    before = len(poly)
    poly.add_cut(minorant([-1.0], 0.0))  # second kink at the same point
    assert len(poly) == before
    assert pts(poly) == as_set([(-1, 1), (0, 0), (1, 1)])


def test_update_reports_removed_and_added():
    poly = init_epigraph(Box([-1], [1]), minorant([0.0], 0.0))
    ids = set(poly.vertex_ids())
    upd = poly.add_cut(minorant([2.0], -1.0))
    assert set(upd.removed) <= ids
    assert set(poly.vertex_ids()) == (ids - set(upd.removed)) | set(upd.added)


def test_seeded_and_unseeded_cuts_agree():
    rng = np.random.default_rng(5)
    box = Box([-1, -1], [1, 1])
    a = init_epigraph(box, minorant([0, 0], 0.0))
    b = init_epigraph(box, minorant([0, 0], 0.0))
    for _ in range(30):
        x = rng.uniform(-1, 1, 2)
        cut = AffineMinorant.from_subgradient(float(x @ x), 2 * x, x)
        seed = min(a.vertex_ids(), key=lambda v: a.height(v) - cut.evaluate(a.point(v)))
        a.add_cut(cut, seed=seed)
        b.add_cut(cut)
    assert same_vertex_set(a.vertices, b.vertices, tol=1e-12)


# ---------------------------------------------------------------- brute force


def test_bruteforce_square_example():
    vs = enumerate_vertices_bruteforce(Box([-1, -1], [1, 1]), [minorant([0, 0], 0.0), minorant([1, 1], -1.0)])
    assert pts_from(vs) == as_set([(-1, -1, 0), (1, -1, 0), (-1, 1, 0), (1, 0, 0), (0, 1, 0), (1, 1, 1)])


def test_bruteforce_single_cut_interval():
    vs = enumerate_vertices_bruteforce(Box([-1], [1]), [minorant([0.0], 0.0)])
    assert pts_from(vs) == as_set([(-1, 0), (1, 0)])


def test_bruteforce_tent():
    vs = enumerate_vertices_bruteforce(Box([0], [1]), [minorant([1.0], 0.0), minorant([-1.0], 1.0)])
    assert pts_from(vs) == as_set([(0, 1), (1, 1), (0.5, 0.5)])


def pts_from(vs):
    return {tuple(np.round(np.append(v.point, v.height), 12)) for v in vs}


def test_incremental_matches_bruteforce_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        box, cuts = random_instance(rng)
        poly = EpigraphPoly(box, cuts[0])
        for c in cuts[1:]:
            poly.add_cut(c)
        assert same_vertex_set(poly.vertices, enumerate_vertices_bruteforce(box, cuts))


def test_incremental_matches_bruteforce_on_degenerate_integer_cuts():
    # integer data makes many cuts pass exactly through existing vertices
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(1, 4))
        box = Box(-np.ones(n), np.ones(n))
        cuts = [minorant(rng.integers(-2, 3, size=n), float(rng.integers(-2, 2))) for _ in range(int(rng.integers(1, 9)))]
        poly = EpigraphPoly(box, cuts[0])
        for c in cuts[1:]:
            poly.add_cut(c)
        assert same_vertex_set(poly.vertices, enumerate_vertices_bruteforce(box, cuts))


# ---------------------------------------------------------------- invariants

cut_lists = st.integers(1, 3).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(
            st.tuples(st.lists(st.floats(-5, 5), min_size=n, max_size=n), st.floats(-5, 5)),
            min_size=1, max_size=10,
        ),
    )
)


@settings(max_examples=150, deadline=None)
@given(cut_lists)
def test_engine_invariants(data):
    n, raw = data
    box = Box(-np.ones(n), 2 * np.ones(n))
    cuts = [minorant(c, b) for c, b in raw]
    poly = EpigraphPoly(box, cuts[0])
    for k, c in enumerate(cuts[1:], start=2):
        poly.add_cut(c)
        P, T = (lifted(poly.vertices)[:, :n], lifted(poly.vertices)[:, n])
        G = np.array([m.gradient for m in cuts[:k]])
        o = np.array([m.offset for m in cuts[:k]])
        vals = P @ G.T + o
        scale = 1e-9 * (1 + np.abs(T))
        # nesting: every vertex satisfies every halfspace so far
        assert np.all(vals.max(axis=1) - T <= scale)
        # height consistency: height = g^k(point)
        assert np.all(np.abs(vals.max(axis=1) - T) <= scale)
        # ray preservation
        for mu in (1.0, 10.0):
            assert np.all(vals.max(axis=1) <= T + mu)
        # box confinement
        assert np.all(P >= box.lower - 1e-9) and np.all(P <= box.upper + 1e-9)


@settings(max_examples=60, deadline=None)
@given(cut_lists)
def test_active_sets_certify_vertices(data):
    n, raw = data
    box = Box(-np.ones(n), np.ones(n))
    cuts = [minorant(c, b) for c, b in raw]
    poly = EpigraphPoly(box, cuts[0])
    for c in cuts[1:]:
        poly.add_cut(c)
    for v in poly.vertices:
        assert len(v.active_set) >= n + 1
        rows = []
        for cid in v.active_set:
            if cid >= 0:
                rows.append(cuts[cid].normal())
            else:
                i, upper = (-cid - 1) // 2, (-cid - 1) % 2
                e = np.zeros(n + 1)
                e[i] = -1.0 if upper else 1.0
                rows.append(e)
        assert np.linalg.matrix_rank(np.array(rows)) == n + 1


def test_evaluate_matches_max_of_minorants():
    rng = np.random.default_rng(3)
    box, cuts = random_instance(rng)
    poly = EpigraphPoly(box, cuts[0])
    for c in cuts[1:]:
        poly.add_cut(c)
    X = box.sample(rng, 50)
    expect = np.max([c.evaluate(X) for c in cuts], axis=0)
    assert np.allclose(poly.evaluate(X), expect)
    assert poly.evaluate(X[0]) == pytest.approx(expect[0])


# ---------------------------------------------------------------- serialization


def test_json_document_shape_and_replay():
    poly = init_epigraph(Box([-1, -1], [1, 1]), minorant([0, 0], 0.0))
    poly.add_cut(minorant([1, 1], -1.0))
    doc = json.loads(poly.to_json())
    assert set(doc) == {"n", "box", "minorants", "vertices"}
    assert doc["box"] == {"lower": [-1.0, -1.0], "upper": [1.0, 1.0]}
    assert set(doc["minorants"][0]) == {"gradient", "offset", "anchor"}
    assert set(doc["vertices"][0]) == {"point", "height"}
    back = EpigraphPoly.from_dict(doc)
    assert back.to_json() == poly.to_json()


def test_copy_is_independent():
    poly = init_epigraph(Box([-1], [1]), minorant([0.0], 0.0))
    dup = poly.copy()
    dup.add_cut(minorant([2.0], -1.0))
    assert len(poly) == 2 and len(dup) == 3


# ---------------------------------------------------------------- max_over_box_vertices


def test_max_over_corners_ex4():
    g = registry_build("ex4").g
    assert max_over_box_vertices(Box([-2, -3], [3, 4]), g) == pytest.approx(12.25)


def test_max_over_corners_constant_and_parabola():
    assert max_over_box_vertices(Box([0, 0], [1, 1]), lambda x: 5.0) == 5.0
    assert max_over_box_vertices(Box([-1], [1]), quadratic_1d()) == 1.0


def test_max_over_corners_guard():
    with pytest.raises(ValueError):
        max_over_box_vertices(Box(np.zeros(21), np.ones(21)), lambda x: 0.0)


def test_max_over_corners_propagates_oracle_failure():
    def boom(x):
        raise ArithmeticError("bad corner")

    with pytest.raises(ArithmeticError):
        max_over_box_vertices(Box([0], [1]), boom)
