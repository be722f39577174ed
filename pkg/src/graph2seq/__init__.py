"""Graph-to-sequence text generation with a gated graph convolutional encoder."""

__version__ = "0.1.0"

from .errors import ConfigError, ContractError, DataError, Graph2SeqError
from .graph import (Edge, EdgeDirection, LabeledGraph, Node, make_graph,
                    neighbourhood, validate_graph)
from .ingestion import Triple, linearise, reify
from .model import Graph2SeqModel, ModelConfig, build_model
from .metrics import corpus_bleu, token_accuracy
from .estimator import GraphToSequenceGenerator

__all__ = [
    "ConfigError", "ContractError", "DataError", "Graph2SeqError",
    "Edge", "EdgeDirection", "LabeledGraph", "Node", "make_graph",
    "neighbourhood", "validate_graph",
    "Triple", "linearise", "reify",
    "Graph2SeqModel", "ModelConfig", "build_model",
    "corpus_bleu", "token_accuracy",
    "GraphToSequenceGenerator",
]
