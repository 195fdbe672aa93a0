import math

import pytest
from hypothesis import given, settings, strategies as st

from oracles import mst_length_scipy, weiszfeld
from sdwise.controller.steiner import fermat_point, mst_length, nearest_node, steiner_tree

coord = st.integers(-1000, 1000).map(lambda v: v / 10)  # 0.1 m grid, no near-duplicates
points = st.lists(st.tuples(coord, coord), min_size=2, max_size=9, unique=True)


def test_collinear_terminals_need_no_steiner_point():
    t = steiner_tree([(0, 0), (1, 0), (2, 0)])
    assert t.length == pytest.approx(2.0)
    assert t.steiner_points == []


def test_equilateral_triangle():
    t = steiner_tree([(0, 0), (1, 0), (0.5, math.sqrt(3) / 2)])
    assert t.length == pytest.approx(math.sqrt(3), abs=1e-6)
    assert len(t.steiner_points) == 1


def test_unit_square():
    t = steiner_tree([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert t.length == pytest.approx(1 + math.sqrt(3), abs=1e-6)
    assert len(t.steiner_points) == 2


def test_obtuse_triangle_keeps_vertex():
    a, b, c = (0, 0), (10, 0), (5, 1)
    assert fermat_point(a, b, c) == (5.0, 1.0)


def test_single_terminal_rejected():
    with pytest.raises(ValueError):
        steiner_tree([(1, 1), (1, 1)])


def test_tree_spans_every_terminal():
    t = steiner_tree([(0, 0), (4, 0), (2, 3), (7, 5), (1, 6)])
    adj = t.adjacency()
    seen, stack = {0}, [0]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    assert seen == set(range(len(t.vertices)))
    assert len(t.edges) == len(t.vertices) - 1


@settings(max_examples=80, deadline=None)
@given(points)
def test_never_longer_than_mst(pts):
    t = steiner_tree(pts)
    mst = mst_length_scipy(pts)
    assert mst_length(pts) == pytest.approx(mst, rel=1e-9, abs=1e-9)
    assert t.length <= mst + 1e-6
    assert t.length >= math.sqrt(3) / 2 * mst - 1e-6


@settings(max_examples=80)
@given(st.tuples(coord, coord), st.tuples(coord, coord), st.tuples(coord, coord))
def test_fermat_point_minimizes_total_distance(a, b, c):
    if min(math.dist(a, b), math.dist(b, c), math.dist(a, c)) < 1e-3:
        return
    f = fermat_point(a, b, c)
    w = weiszfeld([a, b, c])

    def total(p):
        return sum(math.dist(p, q) for q in (a, b, c))

    assert total(f) <= total(w) + 1e-6 * max(1.0, total(w))


def test_nearest_node_ties_to_lower_id():
    coords = {4: (1, 0), 2: (-1, 0), 9: (5, 5)}
    assert nearest_node((0, 0), coords) == 2
    assert nearest_node((4.9, 5), coords) == 9
    with pytest.raises(ValueError):
        nearest_node((0, 0), {})
