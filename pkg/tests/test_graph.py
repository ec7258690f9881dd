import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opinionmax.graph import (
    Graph,
    GraphFormatError,
    in_neighbors,
    load_edge_list,
    out_neighbors,
    write_edge_list,
    write_ids,
)


def _write(tmp_path, text, name="g.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_two_cycle_directed(tmp_path):
    g = load_edge_list(_write(tmp_path, "0 1\n1 0\n"), directed=True)
    assert (g.n, g.m) == (2, 2)
    assert out_neighbors(g, 0).tolist() == [1]
    assert in_neighbors(g, 0).tolist() == [1]


def test_undirected_edge_materialized_both_ways(tmp_path):
    g = load_edge_list(_write(tmp_path, "0 1\n"), directed=False)
    assert (g.n, g.m) == (2, 2)
    for v in range(2):
        assert g.out_neighbors(v).tolist() == g.in_neighbors(v).tolist()


def test_comments_tabs_duplicates_and_labels(tmp_path):
    text = "# header\n% other comment\n10\t20\n10 20\n20 30 extra\n\n"
    g = load_edge_list(_write(tmp_path, text), directed=True)
    assert g.n == 3
    assert g.labels.tolist() == [10, 20, 30]
    assert g.out_neighbors(0).tolist() == [1]
    # 30 is dangling and gets a self-loop
    assert g.out_neighbors(2).tolist() == [2]
    assert g.self_looped.tolist() == [2]
    assert g.m == 3


def test_self_loops_preserved(tmp_path):
    g = load_edge_list(_write(tmp_path, "0 0\n0 1\n1 0\n"), directed=True)
    assert g.out_neighbors(0).tolist() == [0, 1]
    assert g.self_looped.size == 0


def test_self_loop_only_node():
    g = Graph.from_edges([], [], n=1)
    assert g.out_neighbors(0).tolist() == [0]


def test_star_and_chain():
    star = Graph.from_edges([0, 0, 0], [1, 2, 3], directed=True)
    assert star.out_neighbors(0).tolist() == [1, 2, 3]
    chain = Graph.from_edges([0, 1], [1, 2], directed=True, fix_dangling=False)
    assert chain.in_neighbors(2).tolist() == [1]
    # with the dangling fix the sink also points at itself
    chain = Graph.from_edges([0, 1], [1, 2], directed=True)
    assert chain.in_neighbors(2).tolist() == [1, 2]


def test_malformed_line_reports_line_number(tmp_path):
    with pytest.raises(GraphFormatError, match=":2:"):
        load_edge_list(_write(tmp_path, "0 1\n0 x\n"))
    with pytest.raises(GraphFormatError, match=":1:"):
        load_edge_list(_write(tmp_path, "7\n"))


def test_empty_and_missing(tmp_path):
    with pytest.raises(GraphFormatError):
        load_edge_list(_write(tmp_path, "# nothing\n"))
    with pytest.raises(FileNotFoundError):
        load_edge_list(tmp_path / "absent.txt")


def test_out_of_range_query():
    g = Graph.from_edges([0], [1])
    with pytest.raises(IndexError):
        g.out_neighbors(2)
    with pytest.raises(IndexError):
        g.in_neighbors(-1)


def test_arrays_are_immutable():
    g = Graph.from_edges([0], [1])
    with pytest.raises(ValueError):
        g.out_idx[0] = 0


def test_write_ids(tmp_path):
    g = load_edge_list(_write(tmp_path, "5 9\n"))
    write_ids(g, tmp_path / "g.ids")
    assert (tmp_path / "g.ids").read_text().split() == ["5", "9"]


edges = st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), min_size=1, max_size=60)


def _adjacency(g):
    return [g.out_neighbors(v).tolist() for v in range(g.n)]


@settings(max_examples=60, deadline=None)
@given(edges, st.booleans())
def test_structural_invariants(pairs, directed):
    src, dst = zip(*pairs)
    g = Graph.from_edges(src, dst, directed=directed)
    assert g.out_deg.sum() == g.in_deg.sum() == g.m
    assert g.out_deg.min() >= 1
    arcs = set(zip(*map(np.ndarray.tolist, g.arcs())))
    for v in range(g.n):
        for u in g.in_neighbors(v):
            assert (int(u), v) in arcs
    assert len(arcs) == g.m
    if not directed:
        assert all((v, u) in arcs for u, v in arcs)


@settings(max_examples=40, deadline=None)
@given(edges, st.booleans())
def test_round_trip(tmp_path_factory, pairs, directed):
    src, dst = zip(*pairs)
    g = Graph.from_edges(src, dst, directed=directed)
    path = tmp_path_factory.mktemp("rt") / "g.txt"
    write_edge_list(g, path)
    g2 = load_edge_list(path, directed=directed)
    assert g2.n == g.n and g2.m == g.m
    assert _adjacency(g2) == _adjacency(g)
