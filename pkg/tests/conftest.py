import numpy as np
import pytest

from graph2seq.graph import make_graph
from graph2seq.ingestion import DatasetSplit


def toy_corpus(n=20, seed=0):
    """Random 4-node graphs with deterministic 6-10 token targets."""
    rng = np.random.default_rng(seed)
    labels_pool = [f"n{i}" for i in range(12)]
    rels = ["r1", "r2", "r3"]
    examples = []
    for i in range(n):
        labs = list(rng.choice(labels_pool, size=4, replace=False))
        edges = [(0, rels[int(rng.integers(3))], 1),
                 (0, rels[int(rng.integers(3))], 2),
                 (2, rels[int(rng.integers(3))], 3)]
        target = ["the", labs[0], "links", labs[1], "and", labs[2]]
        if i % 2:
            target += ["via", labs[3]]
        if i % 3 == 0:
            target += ["today", "."]
        examples.append(make_graph(labs, edges, graph_id=f"toy-{i}", target=target))
    return examples


@pytest.fixture
def toy_split():
    return DatasetSplit("train", toy_corpus())
