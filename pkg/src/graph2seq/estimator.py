"""Sklearn-style estimator facade over the training pipeline.

Wraps model construction, training and greedy decoding behind the
familiar fit/predict/score surface so the generator composes with the
wider Python ML ecosystem (parameter search, pipelines, cloning).
"""

from typing import List, Optional, Sequence

from sklearn.base import BaseEstimator

from .errors import ContractError
from .graph import LabeledGraph, validate_graph
from .ingestion import DatasetSplit
from .metrics import corpus_bleu
from .model import ModelConfig
from .training import TrainConfig, train


def check_graphs(X: Sequence[LabeledGraph], require_targets: bool = False
                 ) -> List[LabeledGraph]:
    """Validate estimator input: a sequence of well-formed LabeledGraphs."""
    graphs = list(X)
    for i, g in enumerate(graphs):
        if not isinstance(g, LabeledGraph):
            raise ContractError(f"X[{i}] is {type(g).__name__}, expected LabeledGraph")
        bad = validate_graph(g)
        if bad:
            raise ContractError(f"X[{i}] ({g.id!r}): {'; '.join(bad)}")
        if require_targets and not g.target:
            raise ContractError(f"X[{i}] ({g.id!r}) has no target token sequence")
    return graphs


class GraphToSequenceGenerator(BaseEstimator):
    """Graph-to-text generator with the estimator API.

    ``fit`` trains on LabeledGraphs carrying target token sequences;
    ``predict`` greedy-decodes token lists for new graphs. Hyperparameters
    mirror ModelConfig/TrainConfig and are exposed flat for get_params.
    """

    def __init__(self, encoder: str = "gcn", gcn_layers: int = 2,
                 skip: str = "residual", hidden: int = 64, feat_dim: int = 0,
                 copy: bool = False, attention: str = "general",
                 input_feeding: bool = True, dropout: float = 0.3,
                 lr: float = 0.001, batch_size: int = 64, epochs_max: int = 30,
                 patience: Optional[int] = 5, max_decode_len: int = 60,
                 seed: int = 1):
        self.encoder = encoder
        self.gcn_layers = gcn_layers
        self.skip = skip
        self.hidden = hidden
        self.feat_dim = feat_dim
        self.copy = copy
        self.attention = attention
        self.input_feeding = input_feeding
        self.dropout = dropout
        self.lr = lr
        self.batch_size = batch_size
        self.epochs_max = epochs_max
        self.patience = patience
        self.max_decode_len = max_decode_len
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        model = ModelConfig(
            encoder=self.encoder, gcn_layers=self.gcn_layers, skip=self.skip,
            hidden=self.hidden, feat_dim=self.feat_dim, copy=self.copy,
            attention=self.attention, input_feeding=self.input_feeding,
            dropout=self.dropout, seed=self.seed)
        return TrainConfig(
            epochs_max=self.epochs_max, batch_size=self.batch_size, lr=self.lr,
            dropout=self.dropout, seed=self.seed, patience=self.patience,
            max_decode_len=self.max_decode_len, model=model)

    def fit(self, X: Sequence[LabeledGraph], y=None,
            dev: Optional[Sequence[LabeledGraph]] = None):
        """Train on graphs whose ``target`` fields hold the gold tokens."""
        graphs = check_graphs(X, require_targets=True)
        dev_split = DatasetSplit("dev", check_graphs(dev, True)) if dev is not None else None
        result = train(self._train_config(), DatasetSplit("train", graphs), dev_split)
        self.model_ = result.model
        self.train_log_ = result.log
        return self

    def predict(self, X: Sequence[LabeledGraph]) -> List[List[str]]:
        self._check_fitted()
        return [self.model_.generate(g, max_len=self.max_decode_len)
                for g in check_graphs(X)]

    def score(self, X: Sequence[LabeledGraph], y=None) -> float:
        """Corpus BLEU of greedy decodes against the graphs' targets."""
        self._check_fitted()
        graphs = check_graphs(X, require_targets=True)
        hyps = self.predict(graphs)
        refs = [[list(g.target)] for g in graphs]
        return corpus_bleu(hyps, refs, smoothing=True).bleu

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise ContractError("estimator is not fitted; call fit first")
