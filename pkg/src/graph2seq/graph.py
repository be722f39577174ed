"""Immutable directed labeled graphs with validation and neighbourhood queries."""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Tuple

from .errors import ContractError, DataError

SELF_LOOP_LABEL = "self"


class EdgeDirection(Enum):
    IN = "in"
    OUT = "out"
    LOOP = "loop"


@dataclass(frozen=True)
class Node:
    index: int
    label: str
    features: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    label: str


@dataclass(frozen=True)
class LabeledGraph:
    """Directed graph with string-labeled nodes and edges.

    Node identity is its position in ``nodes``; edges reference those
    positions. Instances are immutable and safe to share across workers.
    """

    nodes: Tuple[Node, ...]
    edges: Tuple[Edge, ...]
    id: str = ""
    target: Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "target", tuple(self.target))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node_labels(self) -> List[str]:
        return [n.label for n in self.nodes]

    def in_degree(self, v: int) -> int:
        return sum(1 for e in self.edges if e.dst == v)

    def out_degree(self, v: int) -> int:
        return sum(1 for e in self.edges if e.src == v)


def make_graph(labels: Iterable[str], edges: Iterable[Tuple[int, str, int]],
               graph_id: str = "", features: Optional[List[List[str]]] = None,
               target: Iterable[str] = ()) -> LabeledGraph:
    """Convenience constructor: edges given as (src, label, dst) triples."""
    labels = list(labels)
    feats = features or [[] for _ in labels]
    nodes = tuple(Node(i, lab, tuple(f)) for i, (lab, f) in enumerate(zip(labels, feats)))
    es = tuple(Edge(s, d, lab) for (s, lab, d) in edges)
    return LabeledGraph(nodes, es, graph_id, tuple(target))


def validate_graph(g: LabeledGraph) -> List[str]:
    """Check all LabeledGraph invariants.

    Returns an empty list when the graph is valid; otherwise a list of
    human-readable violation strings naming the offending node or edge.
    Violations are data, not failures: this never raises.
    """
    violations = []
    if g.n_nodes == 0:
        violations.append("empty graph")
    for i, node in enumerate(g.nodes):
        if node.index != i:
            violations.append(f"node {i}: index field {node.index} != position {i}")
        if not node.label:
            violations.append(f"node {i}: empty label")
        for feat in node.features:
            if "=" not in feat or not feat.split("=", 1)[0] or not feat.split("=", 1)[1]:
                violations.append(f"node {i}: malformed feature {feat!r}")
    for k, e in enumerate(g.edges):
        if not (0 <= e.src < g.n_nodes):
            violations.append(f"edge {k}: src {e.src} out of range")
        if not (0 <= e.dst < g.n_nodes):
            violations.append(f"edge {k}: dst {e.dst} out of range")
        if not e.label:
            violations.append(f"edge {k}: empty label")
    return violations


def require_valid(g: LabeledGraph) -> LabeledGraph:
    violations = validate_graph(g)
    if violations:
        raise DataError("invalid graph %r: %s" % (g.id, "; ".join(violations)))
    return g


def neighbourhood(g: LabeledGraph, v: int) -> List[Tuple[int, str, EdgeDirection]]:
    """All (neighbour, label, direction) entries contributing to node v.

    Always includes exactly one synthetic (v, "self", LOOP) entry; genuine
    self-edges in the data are reported separately as in+out entries.
    Order is deterministic: loop first, then outgoing edges in insertion
    order, then incoming edges in insertion order.
    """
    if not (0 <= v < g.n_nodes):
        raise ContractError(f"node index {v} out of range for graph with {g.n_nodes} nodes")
    entries = [(v, SELF_LOOP_LABEL, EdgeDirection.LOOP)]
    for e in g.edges:
        if e.src == v:
            entries.append((e.dst, e.label, EdgeDirection.OUT))
    for e in g.edges:
        if e.dst == v:
            entries.append((e.src, e.label, EdgeDirection.IN))
    return entries


def to_json_dict(g: LabeledGraph) -> dict:
    return {
        "id": g.id,
        "nodes": [{"label": n.label, "features": list(n.features)} for n in g.nodes],
        "edges": [{"src": e.src, "dst": e.dst, "label": e.label} for e in g.edges],
        "target": list(g.target),
    }


def from_json_dict(d: dict) -> LabeledGraph:
    try:
        nodes = tuple(
            Node(i, nd["label"], tuple(nd.get("features", [])))
            for i, nd in enumerate(d["nodes"])
        )
        edges = tuple(Edge(ed["src"], ed["dst"], ed["label"]) for ed in d.get("edges", []))
        return LabeledGraph(nodes, edges, d.get("id", ""), tuple(d.get("target", [])))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed graph record: {exc}") from exc


def write_jsonl(graphs: Iterable[LabeledGraph], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps(to_json_dict(g), ensure_ascii=False) + "\n")


def read_jsonl(path) -> List[LabeledGraph]:
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                graphs.append(from_json_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return graphs
