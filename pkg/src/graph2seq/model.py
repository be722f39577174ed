"""Full graph-to-sequence model: configuration, parameter construction,
teacher-forced loss and generation.
"""

import hashlib
import json
from collections import Counter
from dataclasses import asdict, dataclass
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .decoder import (copy_mix, decode_step, extend_vocab, greedy_decode,
                      beam_decode, init_decoder, initial_state)
from .encoders import (GcnLayerParams, SKIP_KINDS, bilstm_encode, compose_sr_node,
                       encoder_output_width, gcn_encode, init_bilstm, init_gcn_layer)
from .errors import ConfigError
from .graph import SELF_LOOP_LABEL, LabeledGraph
from .ingestion import linearise
from .optim import ParamStore, load_checkpoint, save_checkpoint
from .vocab import Vocabulary

PROB_FLOOR = 1e-12


@dataclass
class ModelConfig:
    """Hyperparameters of the generator; defaults follow the reference setup."""
    encoder: str = "gcn"            # gcn | bilstm
    gcn_layers: int = 2
    skip: str = "residual"          # none | residual | dense
    hidden: int = 256
    feat_dim: int = 0               # > 0 switches node inputs to lemma+feature composition
    copy: bool = False
    attention: str = "general"      # general | dot
    input_feeding: bool = True
    dropout: float = 0.3
    seed: int = 1
    strict_labels: bool = False
    emit_edge_labels: bool = True   # linearised baseline emits edge-label tokens
    beam_width: int = 1

    def validate(self) -> None:
        if self.encoder not in ("gcn", "bilstm"):
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        if self.skip not in SKIP_KINDS:
            raise ConfigError(f"unknown skip kind {self.skip!r}")
        if self.gcn_layers < 1:
            raise ConfigError("gcn_layers must be >= 1")
        if self.hidden < 1:
            raise ConfigError("hidden must be >= 1")
        if not (0 <= self.feat_dim < self.hidden):
            raise ConfigError("feat_dim must lie in [0, hidden)")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")


def example_seed(global_seed: int, example_id: str) -> int:
    digest = hashlib.sha256(example_id.encode("utf-8")).digest()
    return (global_seed * 0x1000003 + int.from_bytes(digest[:6], "little")) % (2 ** 63)


def build_vocabs(examples: Sequence[LabeledGraph], config: ModelConfig
                 ) -> Tuple[Vocabulary, Vocabulary, Vocabulary]:
    """Token, edge-label and feature vocabularies from a training corpus.

    The token vocabulary is shared between node labels and target tokens
    so the copy mechanism can point at source labels; the linearised
    baseline additionally sees edge labels as input tokens.
    """
    tokens = Counter()
    labels = Counter()
    feats = Counter()
    for g in examples:
        for node in g.nodes:
            tokens[node.label] += 1
            for f in node.features:
                feats[f] += 1
        for e in g.edges:
            labels[e.label] += 1
            if config.encoder == "bilstm" and config.emit_edge_labels:
                tokens[e.label] += 1
        for t in g.target:
            tokens[t] += 1
    vocab = Vocabulary.from_counts(tokens)
    label_vocab = Vocabulary([SELF_LOOP_LABEL])
    for lab, _ in sorted(labels.items(), key=lambda kv: (-kv[1], kv[0])):
        label_vocab.add(lab)
    feat_vocab = Vocabulary.from_counts(feats)
    return vocab, label_vocab, feat_vocab


class Graph2SeqModel:
    """Encoder + attention decoder over a shared parameter store."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary,
                 label_vocab: Vocabulary, feat_vocab: Optional[Vocabulary] = None):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.label_vocab = label_vocab
        self.feat_vocab = feat_vocab or Vocabulary()
        self.clamp_warnings = 0
        self._lin_cache: Dict[str, List[str]] = {}

        d = config.hidden
        store = ParamStore(seed=config.seed)
        self.store = store
        self.embed = store.table("embed", len(vocab), d, init="uniform")
        if config.feat_dim > 0:
            self.lemma_embed = store.table("lemma_embed", len(vocab), d - config.feat_dim,
                                           init="uniform")
            self.feat_embed = store.table("feat_embed", len(self.feat_vocab),
                                          config.feat_dim, init="uniform")
        self.gcn_layers: List[GcnLayerParams] = []
        if config.encoder == "gcn":
            for k in range(config.gcn_layers):
                in_w = d * (k + 1) if config.skip == "dense" else d
                self.gcn_layers.append(
                    init_gcn_layer(store, f"gcn.layer{k}", in_w, d, len(label_vocab)))
            self.enc_width = encoder_output_width(d, config.gcn_layers, config.skip)
        else:
            self.bilstm = init_bilstm(store, "bilstm", d, d)
            self.enc_width = d
        self.decoder = init_decoder(
            store, self.embed, d, self.enc_width, len(vocab),
            attention=config.attention, input_feeding=config.input_feeding,
            use_copy=config.copy)

    # -- encoding -------------------------------------------------------

    def source_tokens(self, g: LabeledGraph) -> List[str]:
        """The token stream the copy mechanism may point at."""
        if self.config.encoder == "bilstm":
            key = g.id or str(id(g))
            if key not in self._lin_cache:
                self._lin_cache[key] = linearise(
                    g, example_seed(self.config.seed, key),
                    emit_edge_labels=self.config.emit_edge_labels)
            return self._lin_cache[key]
        return [n.label for n in g.nodes]

    def node_embeddings(self, g: LabeledGraph) -> Tensor:
        if self.config.feat_dim > 0:
            rows = []
            for node in g.nodes:
                lemma = ad.row(self.lemma_embed, self.vocab.id(node.label))
                fvecs = [ad.row(self.feat_embed, self.feat_vocab.id(f))
                         for f in node.features]
                rows.append(compose_sr_node(lemma, fvecs, self.config.feat_dim))
            return ad.stack_rows(rows)
        ids = [self.vocab.id(n.label) for n in g.nodes]
        return ad.take_rows(self.embed, ids)

    def encode(self, g: LabeledGraph, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        cfg = self.config
        if cfg.encoder == "bilstm":
            ids = [self.vocab.id(t) for t in self.source_tokens(g)]
            return bilstm_encode(ad.take_rows(self.embed, ids), self.bilstm)
        return gcn_encode(g, self.node_embeddings(g), self.gcn_layers, cfg.skip,
                          self.label_vocab, dropout_rate=cfg.dropout if training else 0.0,
                          training=training, rng=rng, strict_labels=cfg.strict_labels)

    # -- training-time forward -----------------------------------------

    def forward_example(self, g: LabeledGraph, training: bool = False,
                        rng: Optional[np.random.Generator] = None
                        ) -> Tuple[Tensor, int, int]:
        """Teacher-forced NLL over the example's target plus EOS.

        Returns (summed loss, token count, count of argmax hits). The
        decode path below reuses exactly the same step function, so the
        stepwise NLL here is the training loss for the same pair.
        """
        cfg = self.config
        enc = self.encode(g, training, rng)
        src = self.source_tokens(g)
        ext_ids: Optional[List[int]] = None
        novel: List[str] = []
        novel_index: Dict[str, int] = {}
        if cfg.copy:
            ext_ids, novel = extend_vocab(src, self.vocab)
            novel_index = {tok: len(self.vocab) + i for i, tok in enumerate(novel)}
        ext_size = len(self.vocab) + len(novel)

        gold = list(g.target) + [self.vocab.token(self.vocab.eos_id)]
        state = initial_state(self.decoder)
        prev = self.vocab.bos_id
        terms = []
        correct = 0
        for tok in gold:
            res = decode_step(self.decoder, state, prev, enc,
                              dropout_rate=cfg.dropout if training else 0.0,
                              training=training, rng=rng)
            if cfg.copy:
                dist = copy_mix(res.vocab_dist, res.attention, ext_ids, res.p_gen, ext_size)
            else:
                dist = res.vocab_dist
            if tok in self.vocab:
                gold_id = self.vocab.id(tok)
            elif tok in novel_index:
                gold_id = novel_index[tok]
            else:
                gold_id = self.vocab.unk_id
            p = ad.row(dist, gold_id)
            if p.data < PROB_FLOOR:
                self.clamp_warnings += 1
            terms.append(-ad.log(ad.clamp_min(p, PROB_FLOOR)))
            if int(np.argmax(dist.data)) == gold_id:
                correct += 1
            prev = self.vocab.id(tok)
            state = res.state
        loss = reduce(ad.add, terms)
        return loss, len(gold), correct

    # -- generation -----------------------------------------------------

    def generate(self, g: LabeledGraph, max_len: int = 60) -> List[str]:
        enc = self.encode(g, training=False)
        src_ext_ids = None
        ext_tokens: List[str] = []
        if self.config.copy:
            src_ext_ids, ext_tokens = extend_vocab(self.source_tokens(g), self.vocab)
        if self.config.beam_width > 1:
            return beam_decode(self.decoder, enc, self.vocab, max_len,
                               beam_width=self.config.beam_width,
                               src_ext_ids=src_ext_ids, ext_tokens=ext_tokens)
        return greedy_decode(self.decoder, enc, self.vocab, max_len,
                             src_ext_ids=src_ext_ids, ext_tokens=ext_tokens)

    # -- persistence ----------------------------------------------------

    def param_count(self) -> int:
        return self.store.n_values()

    def save(self, path) -> None:
        save_checkpoint(path, self.store, extra={
            "config": asdict(self.config),
            "vocab": self.vocab.to_list(),
            "label_vocab": self.label_vocab.to_list(),
            "feat_vocab": self.feat_vocab.to_list(),
        })

    @classmethod
    def load(cls, path) -> "Graph2SeqModel":
        with open(path, encoding="utf-8") as fh:
            extra = json.load(fh).get("extra", {})
        config = ModelConfig(**extra["config"])
        model = cls(config,
                    Vocabulary.from_list(extra["vocab"]),
                    Vocabulary.from_list(extra["label_vocab"]),
                    Vocabulary.from_list(extra["feat_vocab"]))
        load_checkpoint(path, model.store)
        return model


def build_model(config: ModelConfig, train_examples: Sequence[LabeledGraph]) -> Graph2SeqModel:
    vocab, label_vocab, feat_vocab = build_vocabs(train_examples, config)
    return Graph2SeqModel(config, vocab, label_vocab, feat_vocab)
