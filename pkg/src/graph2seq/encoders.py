"""Graph convolutional encoder with gates, direction-specific weights,
edge-label biases and skip connections, plus the BiLSTM baseline encoder.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .graph import EdgeDirection, LabeledGraph, neighbourhood
from .optim import ParamStore, dropout
from .vocab import Vocabulary

DIRECTIONS = (EdgeDirection.IN, EdgeDirection.OUT, EdgeDirection.LOOP)

SKIP_KINDS = ("none", "residual", "dense")


@dataclass
class GcnLayerParams:
    """Per-layer GCN parameters, all direction-specific."""
    W: Dict[EdgeDirection, Tensor]        # in_width x d projection
    bias: Dict[EdgeDirection, Tensor]     # n_labels x d edge-label biases
    gate_w: Dict[EdgeDirection, Tensor]   # in_width gate weights
    gate_b: Dict[EdgeDirection, Tensor]   # scalar gate bias
    in_width: int
    out_width: int


def init_gcn_layer(store: ParamStore, prefix: str, in_width: int, d: int,
                   n_labels: int) -> GcnLayerParams:
    W, bias, gate_w, gate_b = {}, {}, {}, {}
    for direction in DIRECTIONS:
        tag = f"{prefix}.W_{direction.value}"
        W[direction] = store.matrix(tag, in_width, d)
        bias[direction] = store.table(f"{prefix}.b_{direction.value}", n_labels, d)
        gate_w[direction] = store.vector(f"{prefix}.gate_w_{direction.value}", in_width, init="uniform")
        gate_b[direction] = store.scalar(f"{prefix}.gate_b_{direction.value}")
    return GcnLayerParams(W, bias, gate_w, gate_b, in_width, d)


def gcn_layer(H: Tensor, g: LabeledGraph, params: GcnLayerParams,
              label_vocab: Vocabulary, strict_labels: bool = False) -> Tensor:
    """One gated GCN update over the graph.

    Each node sums, over its neighbourhood entries (u, label, direction),
    sigmoid-gated projections of the neighbour state plus an edge-label
    bias, then applies ReLU. Gates are scalars computed from the
    neighbour's current representation with direction-specific parameters.
    """
    if H.shape[0] != g.n_nodes:
        raise ContractError(
            f"state row count {H.shape[0]} != node count {g.n_nodes}")
    proj = {d: ad.matmul(H, params.W[d]) for d in DIRECTIONS}
    gates = {d: ad.sigmoid(ad.matmul(H, params.gate_w[d]) + params.gate_b[d])
             for d in DIRECTIONS}
    label_id = label_vocab.strict_id if strict_labels else label_vocab.id

    out_rows = []
    for v in range(g.n_nodes):
        contribs = []
        for u, label, direction in neighbourhood(g, v):
            term = ad.row(proj[direction], u) + ad.row(params.bias[direction], label_id(label))
            contribs.append(ad.row(gates[direction], u) * term)
        if len(contribs) == 1:
            out_rows.append(contribs[0])
        else:
            out_rows.append(ad.tsum(ad.stack_rows(contribs), axis=0))
    return ad.relu(ad.stack_rows(out_rows))


def gcn_encode(g: LabeledGraph, embeddings: Tensor, layers: List[GcnLayerParams],
               skip: str, label_vocab: Vocabulary, dropout_rate: float = 0.0,
               training: bool = False, rng: Optional[np.random.Generator] = None,
               strict_labels: bool = False) -> Tensor:
    """Stack GCN layers with the configured skip connections.

    Residual adds each layer's input to its output (widths must match);
    dense concatenates the d-wide layer output onto its input, so the
    width grows by d per layer. Dropout sits between layers.
    """
    if skip not in SKIP_KINDS:
        raise ConfigError(f"unknown skip kind {skip!r}")
    if not layers:
        raise ConfigError("at least one GCN layer required")
    h = embeddings
    for k, layer in enumerate(layers):
        if h.shape[1] != layer.in_width:
            raise ConfigError(
                f"layer {k} expects input width {layer.in_width}, got {h.shape[1]}")
        if k > 0 and dropout_rate > 0.0:
            h = dropout(h, dropout_rate, training, rng)
        out = gcn_layer(h, g, layer, label_vocab, strict_labels)
        if skip == "residual":
            if layer.in_width != layer.out_width:
                raise ConfigError("residual connections require equal layer widths")
            h = out + h
        elif skip == "dense":
            h = ad.concat([out, h], axis=1)
        else:
            h = out
    return h


def encoder_output_width(d: int, n_layers: int, skip: str) -> int:
    return d * (n_layers + 1) if skip == "dense" else d


def compose_sr_node(lemma_embedding: Tensor, feature_embeddings: List[Tensor],
                    feature_dim: Optional[int] = None) -> Tensor:
    """Node representation: [lemma ; sum of feature vectors].

    An empty feature list contributes a zero block; its width comes from
    ``feature_dim``, which is then required.
    """
    if not feature_embeddings:
        if feature_dim is None:
            raise ContractError("feature_dim required when the feature list is empty")
        return ad.concat([lemma_embedding, Tensor(np.zeros(feature_dim))])
    dims = {f.shape[0] for f in feature_embeddings}
    if len(dims) != 1:
        raise ContractError(f"feature dimensions differ: {sorted(dims)}")
    summed = feature_embeddings[0]
    for f in feature_embeddings[1:]:
        summed = summed + f
    return ad.concat([lemma_embedding, summed])


@dataclass
class LstmParams:
    Wx: Tensor  # in x 4h, gate order [input, forget, cell, output]
    Wh: Tensor  # h x 4h
    b: Tensor   # 4h
    hidden: int


def init_lstm(store: ParamStore, prefix: str, in_dim: int, hidden: int) -> LstmParams:
    return LstmParams(
        Wx=store.matrix(f"{prefix}.Wx", in_dim, 4 * hidden),
        Wh=store.matrix(f"{prefix}.Wh", hidden, 4 * hidden),
        b=store.vector(f"{prefix}.b", 4 * hidden),
        hidden=hidden,
    )


def lstm_step(params: LstmParams, x: Tensor, h: Tensor, c: Tensor):
    """Standard LSTM cell on 1-D vectors; returns (h', c')."""
    hd = params.hidden
    z = ad.matmul(x, params.Wx) + ad.matmul(h, params.Wh) + params.b
    i = ad.sigmoid(ad.narrow(z, 0, 0, hd))
    f = ad.sigmoid(ad.narrow(z, 0, hd, hd))
    g = ad.tanh(ad.narrow(z, 0, 2 * hd, hd))
    o = ad.sigmoid(ad.narrow(z, 0, 3 * hd, hd))
    c2 = f * c + i * g
    h2 = o * ad.tanh(c2)
    return h2, c2


@dataclass
class BiLstmParams:
    fwd: LstmParams
    bwd: LstmParams
    proj_W: Tensor  # 2h x h, aligns the encoder interface width with d
    proj_b: Tensor


def init_bilstm(store: ParamStore, prefix: str, in_dim: int, hidden: int) -> BiLstmParams:
    return BiLstmParams(
        fwd=init_lstm(store, f"{prefix}.fwd", in_dim, hidden),
        bwd=init_lstm(store, f"{prefix}.bwd", in_dim, hidden),
        proj_W=store.matrix(f"{prefix}.proj_W", 2 * hidden, hidden),
        proj_b=store.vector(f"{prefix}.proj_b", hidden),
    )


def bilstm_encode(embeddings: Tensor, params: BiLstmParams) -> Tensor:
    """Bidirectional single-layer LSTM over a (T x d) embedding matrix.

    Forward and backward states are concatenated per position and
    projected back to the hidden width the decoder expects.
    """
    n = embeddings.shape[0]
    if n == 0:
        raise ContractError("cannot encode an empty sequence")
    hd = params.fwd.hidden
    zero = Tensor(np.zeros(hd))

    def run(cell: LstmParams, order):
        states = {}
        h, c = zero, zero
        for t in order:
            h, c = lstm_step(cell, ad.row(embeddings, t), h, c)
            states[t] = h
        return states

    fwd = run(params.fwd, range(n))
    bwd = run(params.bwd, range(n - 1, -1, -1))
    rows = [ad.concat([fwd[t], bwd[t]]) for t in range(n)]
    both = ad.stack_rows(rows)
    return ad.matmul(both, params.proj_W) + params.proj_b
