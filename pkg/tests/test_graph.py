import json

import pytest
from hypothesis import given, strategies as st

from graph2seq.errors import ContractError
from graph2seq.graph import (EdgeDirection, from_json_dict, make_graph,
                             neighbourhood, read_jsonl, to_json_dict,
                             validate_graph, write_jsonl)


def fig_style_graph():
    # 6 entity-style nodes joined by 5 labeled edges (book-series shape)
    labels = ["Above the Veil", "Aenir", "Castle", "Australians",
              "Into Battle", "The Violet Keystone"]
    edges = [(0, "precededBy", 1), (1, "precededBy", 2), (0, "country", 3),
             (0, "followedBy", 4), (4, "followedBy", 5)]
    return make_graph(labels, edges, graph_id="fig")


def test_empty_graph_is_a_violation():
    g = make_graph([], [])
    assert "empty graph" in validate_graph(g)


def test_edge_out_of_range():
    g = make_graph(["a", "b"], [(0, "r", 5)])
    assert any("dst" in v and "out of range" in v for v in validate_graph(g))


def test_valid_graph_passes():
    assert validate_graph(fig_style_graph()) == []


def test_validate_reports_empty_labels_and_bad_features():
    g = make_graph(["a", ""], [(0, "", 1)], features=[["ok=1"], ["broken"]])
    violations = validate_graph(g)
    assert any("empty label" in v for v in violations)
    assert any("malformed feature" in v for v in violations)
    assert any("edge 0" in v for v in violations)


def test_neighbourhood_isolated_node():
    g = make_graph(["x"], [])
    assert neighbourhood(g, 0) == [(0, "self", EdgeDirection.LOOP)]


def test_neighbourhood_orders_loop_out_in():
    g = fig_style_graph()
    entries = neighbourhood(g, 1)  # Aenir
    assert entries[0] == (1, "self", EdgeDirection.LOOP)
    assert entries[1] == (2, "precededBy", EdgeDirection.OUT)
    assert entries[2] == (0, "precededBy", EdgeDirection.IN)


def test_neighbourhood_parallel_edges():
    g = make_graph(["a", "b"], [(0, "r", 1), (0, "r", 1)])
    out_entries = [e for e in neighbourhood(g, 0) if e[2] is EdgeDirection.OUT]
    assert len(out_entries) == 2


def test_neighbourhood_index_out_of_range():
    with pytest.raises(ContractError):
        neighbourhood(make_graph(["a"], []), 3)


def test_genuine_self_edge_distinct_from_synthetic_loop():
    g = make_graph(["a"], [(0, "cycle", 0)])
    entries = neighbourhood(g, 0)
    directions = [d for _, _, d in entries]
    assert directions == [EdgeDirection.LOOP, EdgeDirection.OUT, EdgeDirection.IN]


@given(st.integers(2, 8), st.data())
def test_neighbourhood_size_is_degree_plus_one(n, data):
    edges = data.draw(st.lists(
        st.tuples(st.integers(0, n - 1), st.just("r"), st.integers(0, n - 1)),
        max_size=12))
    g = make_graph([f"v{i}" for i in range(n)], edges)
    for v in range(n):
        assert len(neighbourhood(g, v)) == g.in_degree(v) + g.out_degree(v) + 1


def test_jsonl_roundtrip(tmp_path):
    g = make_graph(["a b", "c"], [(0, "r", 1)], graph_id="ex-1",
                   features=[["num=sg"], []], target=["hello", "world"])
    path = tmp_path / "data.jsonl"
    write_jsonl([g], path)
    (back,) = read_jsonl(path)
    assert back == g
    assert back.target == g.target


def test_json_dict_roundtrip_is_identity():
    g = fig_style_graph()
    assert from_json_dict(json.loads(json.dumps(to_json_dict(g)))) == g
