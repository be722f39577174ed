"""Dataset construction: RDF reification, SR11 dependency records,
delexicalisation/anonymisation, multi-word entity splitting, target
filtering and the depth-first linearisation used by the sequential baseline.
"""

import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, DataError
from .graph import Edge, LabeledGraph, Node, make_graph

RELATION_KIND = "kind=relation"
NE_EDGE_LABEL = "NE"
SUBJECT_EDGE_LABEL = "A0"
OBJECT_EDGE_LABEL = "A1"

# Published corpus statistics; the loader reports deviations as warnings,
# never as hard failures.
EXPECTED_DATASET_STATS = {
    "webnlg": {"train": 18102, "dev": 871, "test": 971, "relations": 373},
    "sr11": {"train": 39279, "dev": 1034, "test": 2398, "relations": 117},
}


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str

    def __post_init__(self):
        if not (self.subject and self.relation and self.object):
            raise DataError(f"triple with empty field: {self!r}")


@dataclass
class DatasetSplit:
    name: str
    examples: List[LabeledGraph] = field(default_factory=list)

    def __len__(self):
        return len(self.examples)


def reify(triples: Sequence[Triple], graph_id: str = "",
          target: Sequence[str] = ()) -> LabeledGraph:
    """Turn RDF triples into a graph with one fresh relation node per triple.

    Each triple (s, r, o) contributes a new relation node (never shared,
    even for repeated relation names) with an A0 edge to the subject entity
    and an A1 edge to the object entity. Entity nodes are shared across
    triples and ordered by first appearance.
    """
    entity_ids: Dict[str, int] = {}
    nodes: List[Node] = []
    edges: List[Edge] = []

    def entity(label: str) -> int:
        if label not in entity_ids:
            entity_ids[label] = len(nodes)
            nodes.append(Node(len(nodes), label))
        return entity_ids[label]

    pending = []
    for t in triples:
        pending.append((entity(t.subject), t.relation, entity(t.object)))
    for subj_id, relation, obj_id in pending:
        rel_id = len(nodes)
        nodes.append(Node(rel_id, relation, (RELATION_KIND,)))
        edges.append(Edge(rel_id, subj_id, SUBJECT_EDGE_LABEL))
        edges.append(Edge(rel_id, obj_id, OBJECT_EDGE_LABEL))
    return LabeledGraph(tuple(nodes), tuple(edges), graph_id, tuple(target))


def is_relation_node(node: Node) -> bool:
    return RELATION_KIND in node.features


def split_multiword_entities(g: LabeledGraph) -> LabeledGraph:
    """Split each multi-word entity node into a chain of single-word nodes.

    Words are linked head-to-tail with NE-labeled edges; edges incident to
    the original node re-attach to the first word. Relation nodes are left
    intact.
    """
    new_nodes: List[Node] = []
    new_edges: List[Edge] = []
    head_of: Dict[int, int] = {}
    for node in g.nodes:
        words = node.label.split()
        if is_relation_node(node) or len(words) <= 1:
            head_of[node.index] = len(new_nodes)
            new_nodes.append(Node(len(new_nodes), node.label, node.features))
            continue
        head_of[node.index] = len(new_nodes)
        word_ids = []
        for w in words:
            word_ids.append(len(new_nodes))
            new_nodes.append(Node(len(new_nodes), w, node.features))
        for a, b in zip(word_ids, word_ids[1:]):
            new_edges.append(Edge(a, b, NE_EDGE_LABEL))
    for e in g.edges:
        new_edges.append(Edge(head_of[e.src], head_of[e.dst], e.label))
    return LabeledGraph(tuple(new_nodes), tuple(new_edges), g.id, g.target)


def delexicalise(triples: Sequence[Triple], target: Sequence[str],
                 category_map: Dict[str, str]) -> Tuple[List[Triple], List[str], Dict[str, str]]:
    """Replace mapped entity strings with category placeholders.

    Substitution is exact-string: full subject/object fields and
    contiguous token runs in the target. Returns the rewritten triples and
    target plus the relex table (placeholder -> original surface string)
    for post-generation restoration.
    """
    used: Dict[str, str] = {}
    relex: Dict[str, str] = {}
    present = {t.subject for t in triples} | {t.object for t in triples}
    for entity, placeholder in category_map.items():
        if entity not in present:
            continue
        if placeholder in used and used[placeholder] != entity:
            raise DataError(
                f"placeholder collision: {placeholder!r} assigned to both "
                f"{used[placeholder]!r} and {entity!r}")
        used[placeholder] = entity
        relex[placeholder] = entity

    def sub_field(s: str) -> str:
        return category_map.get(s, s)

    new_triples = [Triple(sub_field(t.subject), t.relation, sub_field(t.object))
                   for t in triples]
    new_target = list(target)
    # Longer entities first so nested mentions resolve to the longest match.
    for entity in sorted(category_map, key=lambda e: -len(e.split())):
        if entity not in present:
            continue
        ent_toks = entity.split()
        placeholder = category_map[entity]
        out: List[str] = []
        i = 0
        while i < len(new_target):
            if new_target[i:i + len(ent_toks)] == ent_toks:
                out.append(placeholder)
                i += len(ent_toks)
            else:
                out.append(new_target[i])
                i += 1
        new_target = out
    return new_triples, new_target, relex


def relexicalise(tokens: Sequence[str], relex: Dict[str, str]) -> List[str]:
    """Substitute placeholders back to surface strings (inverse of delexicalise)."""
    out: List[str] = []
    for tok in tokens:
        if tok in relex:
            out.extend(relex[tok].split())
        else:
            out.append(tok)
    return out


def anonymise_sr(g: LabeledGraph, types: Dict[int, str]) -> LabeledGraph:
    """Rename typed entity nodes to TYPE_k placeholders.

    Indices count distinct entities (by original label) per type in
    node-index order, starting at 0; repeated mentions of the same entity
    share a placeholder.
    """
    counters: Dict[str, int] = defaultdict(int)
    assigned: Dict[Tuple[str, str], str] = {}
    nodes = []
    for node in g.nodes:
        if node.index in types:
            tag = types[node.index]
            key = (tag, node.label)
            if key not in assigned:
                assigned[key] = f"{tag}_{counters[tag]}"
                counters[tag] += 1
            nodes.append(Node(node.index, assigned[key], node.features))
        else:
            nodes.append(node)
    return LabeledGraph(tuple(nodes), g.edges, g.id, g.target)


_TUPLE_RE = re.compile(r"\(([^()]*)\)")


def parse_sr11(record: str, graph_id: str = "",
               target: Sequence[str] = ()) -> LabeledGraph:
    """Parse a dependency record of (parent label child) tuples into a graph.

    One node per distinct lemma string (the SROOT pseudo-parent included),
    one parent->child edge per tuple. Lines of the form
    ``lemma<TAB>feat=val,feat=val`` attach feature lists to nodes.
    """
    node_ids: Dict[str, int] = {}
    labels: List[str] = []
    feats: Dict[str, List[str]] = defaultdict(list)
    edges: List[Tuple[int, str, int]] = []

    def node(lemma: str) -> int:
        if lemma not in node_ids:
            node_ids[lemma] = len(labels)
            labels.append(lemma)
        return node_ids[lemma]

    n_tuples = 0
    for lineno, line in enumerate(record.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "\t" in line and "(" not in stripped:
            lemma, _, featstr = stripped.partition("\t")
            feats[lemma.strip()].extend(
                f.strip() for f in featstr.split(",") if f.strip())
            continue
        consumed = False
        for m in _TUPLE_RE.finditer(stripped):
            consumed = True
            fields = m.group(1).split()
            if len(fields) != 3:
                raise DataError(
                    f"line {lineno}: tuple {m.group(0)!r} has {len(fields)} fields, expected 3")
            parent, label, child = fields
            edges.append((node(parent), label, node(child)))
            n_tuples += 1
        if not consumed:
            raise DataError(f"line {lineno}: expected (parent label child) tuples, got {stripped!r}")
    if n_tuples == 0:
        raise DataError("no tuples in dependency record")
    for lemma in feats:
        if lemma not in node_ids:
            raise DataError(f"feature line for unknown node {lemma!r}")
    features = [list(feats.get(lab, [])) for lab in labels]
    return make_graph(labels, edges, graph_id, features, target)


def linearise(g: LabeledGraph, rng_seed: int, emit_edge_labels: bool = True) -> List[str]:
    """Flatten a graph to tokens by depth-first traversal.

    Roots (no incoming edge; node 0 when none exists) are traversed in
    index order, siblings in an order drawn from ``rng_seed``. A node
    already visited is re-emitted but not re-expanded, so nodes reached by
    cycles or multiple parents repeat. Nodes unreachable from any root
    start their own traversal afterwards.
    """
    if g.n_nodes == 0:
        raise ContractError("cannot linearise an empty graph")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    children: Dict[int, List[Tuple[str, int]]] = defaultdict(list)
    indeg = [0] * g.n_nodes
    for e in g.edges:
        children[e.src].append((e.label, e.dst))
        indeg[e.dst] += 1
    roots = [v for v in range(g.n_nodes) if indeg[v] == 0] or [0]

    tokens: List[str] = []
    visited = set()

    def expand(v: int) -> None:
        kids = children[v]
        for i in rng.permutation(len(kids)):
            label, child = kids[i]
            if emit_edge_labels:
                tokens.append(label)
            tokens.append(g.nodes[child].label)
            if child not in visited:
                visited.add(child)
                expand(child)

    for start in roots + [v for v in range(g.n_nodes)]:
        if start in visited:
            continue
        tokens.append(g.nodes[start].label)
        visited.add(start)
        expand(start)
    return tokens


def filter_long_targets(split: DatasetSplit, max_len: int = 50) -> DatasetSplit:
    """Drop examples whose target exceeds ``max_len`` tokens (boundary kept)."""
    kept = [g for g in split.examples if len(g.target) <= max_len]
    return DatasetSplit(split.name, kept)


def check_dataset_stats(task: str, split_name: str, n_examples: int,
                        n_relations: Optional[int] = None) -> List[str]:
    """Compare counts against the published corpus statistics; returns warnings."""
    expected = EXPECTED_DATASET_STATS.get(task, {})
    warnings = []
    if split_name in expected and n_examples != expected[split_name]:
        warnings.append(
            f"{task} {split_name}: {n_examples} examples, expected {expected[split_name]}")
    if n_relations is not None and "relations" in expected and n_relations != expected["relations"]:
        warnings.append(
            f"{task}: {n_relations} distinct relations, expected {expected['relations']}")
    return warnings


# -- text file formats --------------------------------------------------

def parse_triple_blocks(text: str, id_prefix: str = "ex") -> List[Tuple[str, List[Triple], List[str]]]:
    """Parse the triple text format: blank-line separated blocks of
    ``subject | relation | object`` lines with a ``# text:`` target line.
    """
    examples = []
    block_lines: List[Tuple[int, str]] = []

    def flush(end_lineno: int) -> None:
        if not block_lines:
            return
        triples: List[Triple] = []
        target: List[str] = []
        for lineno, line in block_lines:
            if line.startswith("# text:"):
                target = line[len("# text:"):].split()
                continue
            parts = [p.strip() for p in line.split("|")]
            if len(parts) != 3 or not all(parts):
                raise DataError(f"line {lineno}: expected 'subject | relation | object', got {line!r}")
            triples.append(Triple(*parts))
        examples.append((f"{id_prefix}-{len(examples)}", triples, target))
        block_lines.clear()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            flush(lineno)
        else:
            block_lines.append((lineno, line))
    flush(-1)
    return examples


def parse_sr11_blocks(text: str, id_prefix: str = "sr") -> List[LabeledGraph]:
    """Parse blank-line separated SR11 records; ``# text:`` lines hold targets."""
    graphs = []
    block: List[str] = []

    def flush() -> None:
        if not block:
            return
        target: List[str] = []
        body: List[str] = []
        for line in block:
            if line.strip().startswith("# text:"):
                target = line.strip()[len("# text:"):].split()
            else:
                body.append(line)
        graphs.append(parse_sr11("\n".join(body), f"{id_prefix}-{len(graphs)}", target))
        block.clear()

    for raw in text.splitlines():
        if not raw.strip():
            flush()
        else:
            block.append(raw)
    flush()
    return graphs
