"""Attention-based LSTM decoder with optional copy mechanism,
greedy/beam search and pretrained embedding loading.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import LstmParams, init_lstm, lstm_step
from .errors import ConfigError, ContractError, DataError
from .optim import ParamStore
from .optim import dropout as _dropout
from .vocab import Vocabulary


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor
    attentional: Tensor  # previous attentional vector, fed back into the LSTM


@dataclass
class AttentionResult:
    context: Tensor
    weights: Tensor


@dataclass
class DecoderParams:
    embed: Tensor            # vocab x embed_dim, shared with the model
    lstm: LstmParams
    W_a: Optional[Tensor]    # h x enc_width ("general" score); None for "dot"
    W_g: Tensor              # (h + enc_width) x h, tanh hidden layer
    b_g: Tensor
    W_out: Tensor            # h x vocab
    b_out: Tensor
    copy_w: Optional[Tensor]  # (h + enc_width + embed_dim) -> p_gen logit
    copy_b: Optional[Tensor]
    hidden: int
    enc_width: int
    input_feeding: bool = True


def init_decoder(store: ParamStore, embed: Tensor, hidden: int, enc_width: int,
                 vocab_size: int, attention: str = "general",
                 input_feeding: bool = True, use_copy: bool = False) -> DecoderParams:
    if attention not in ("general", "dot"):
        raise ConfigError(f"unknown attention kind {attention!r}")
    if attention == "dot" and enc_width != hidden:
        raise ConfigError("dot attention requires encoder width == decoder hidden")
    embed_dim = embed.shape[1]
    in_dim = embed_dim + (hidden if input_feeding else 0)
    return DecoderParams(
        embed=embed,
        lstm=init_lstm(store, "decoder.lstm", in_dim, hidden),
        W_a=store.matrix("decoder.W_a", hidden, enc_width) if attention == "general" else None,
        W_g=store.matrix("decoder.W_g", hidden + enc_width, hidden),
        b_g=store.vector("decoder.b_g", hidden),
        W_out=store.matrix("decoder.W_out", hidden, vocab_size),
        b_out=store.vector("decoder.b_out", vocab_size),
        copy_w=store.vector("decoder.copy_w", hidden + enc_width + embed_dim,
                            init="uniform") if use_copy else None,
        copy_b=store.scalar("decoder.copy_b") if use_copy else None,
        hidden=hidden,
        enc_width=enc_width,
        input_feeding=input_feeding,
    )


def initial_state(params: DecoderParams) -> DecoderState:
    zero = Tensor(np.zeros(params.hidden))
    return DecoderState(zero, zero, zero)


def attend(dec_state: Tensor, enc_states: Tensor, W_a: Optional[Tensor] = None,
           mask: Optional[np.ndarray] = None) -> AttentionResult:
    """Soft attention over encoder states.

    Scores are the general bilinear form dec . W_a . enc (plain dot product
    when W_a is None); masked positions receive an additive -1e30 so their
    softmax weight underflows to exactly zero.
    """
    query = ad.matmul(dec_state, W_a) if W_a is not None else dec_state
    scores = ad.matmul(enc_states, query)
    if mask is not None:
        if not mask.any():
            raise ContractError("attention requires at least one unmasked position")
        scores = scores + Tensor(np.where(mask, 0.0, -1e30))
    weights = ad.softmax(scores)
    context = ad.matmul(weights, enc_states)
    return AttentionResult(context, weights)


@dataclass
class StepResult:
    vocab_dist: Tensor
    state: DecoderState
    attention: Tensor
    p_gen: Optional[Tensor]
    prev_embedding: Tensor


def decode_step(params: DecoderParams, state: DecoderState, prev_token: int,
                enc_states: Tensor, mask: Optional[np.ndarray] = None,
                dropout_rate: float = 0.0, training: bool = False,
                rng=None) -> StepResult:
    """One decoding step: recurrence, attention, then the softmax output layer.

    The output network is a tanh hidden layer over [hidden state; context]
    followed by a linear map to the vocabulary. When copy parameters are
    present the generation probability p_gen is computed as well; mixing
    is left to ``copy_mix``. Training-mode dropout sits on the attentional
    vector before the output projection.
    """
    if not (0 <= prev_token < params.embed.shape[0]):
        raise ContractError(f"token id {prev_token} outside vocabulary")
    emb = ad.row(params.embed, prev_token)
    x = ad.concat([emb, state.attentional]) if params.input_feeding else emb
    h, c = lstm_step(params.lstm, x, state.h, state.c)
    attn = attend(h, enc_states, params.W_a, mask)
    hidden = ad.tanh(ad.matmul(ad.concat([h, attn.context]), params.W_g) + params.b_g)
    if dropout_rate > 0.0 and training:
        hidden = _dropout(hidden, dropout_rate, training, rng)
    dist = ad.softmax(ad.matmul(hidden, params.W_out) + params.b_out)
    p_gen = None
    if params.copy_w is not None:
        feats = ad.concat([h, attn.context, emb])
        p_gen = ad.sigmoid(ad.dot(params.copy_w, feats) + params.copy_b)
    return StepResult(dist, DecoderState(h, c, hidden), attn.weights, p_gen, emb)


def copy_mix(vocab_dist: Tensor, attn_weights: Tensor, src_ext_ids: Sequence[int],
             p_gen: Tensor, ext_size: int) -> Tensor:
    """Mix generation and copy distributions over the extended vocabulary.

    final(w) = p_gen * vocab_dist(w) + (1 - p_gen) * sum of attention mass
    on source positions holding w; source-only tokens occupy the ids
    beyond the base vocabulary.
    """
    vocab_size = vocab_dist.shape[0]
    if ext_size < vocab_size:
        raise ContractError("extended vocabulary smaller than base vocabulary")
    gen = vocab_dist * p_gen
    if ext_size > vocab_size:
        gen = ad.concat([gen, Tensor(np.zeros(ext_size - vocab_size))])
    copy = ad.scatter_add(attn_weights, np.asarray(src_ext_ids, dtype=np.intp), ext_size)
    return gen + copy * (1.0 - p_gen)


def extend_vocab(src_tokens: Sequence[str], vocab: Vocabulary) -> Tuple[List[int], List[str]]:
    """Map source tokens to extended-vocabulary ids.

    In-vocabulary tokens keep their ids; novel tokens get fresh ids past
    the vocabulary end (shared across repeated occurrences). Returns the
    per-position ids and the novel token list in id order.
    """
    ext_ids: List[int] = []
    novel: List[str] = []
    novel_ids = {}
    for tok in src_tokens:
        if tok in vocab:
            ext_ids.append(vocab.id(tok))
        else:
            if tok not in novel_ids:
                novel_ids[tok] = len(vocab) + len(novel)
                novel.append(tok)
            ext_ids.append(novel_ids[tok])
    return ext_ids, novel


def greedy_decode(params: DecoderParams, enc_states: Tensor, vocab: Vocabulary,
                  max_len: int, mask: Optional[np.ndarray] = None,
                  src_ext_ids: Optional[Sequence[int]] = None,
                  ext_tokens: Sequence[str] = (),
                  collect_attention: bool = False):
    """Greedy search from BOS; stops at EOS or ``max_len``.

    Ties break toward the lowest token id; PAD and BOS are never emitted.
    Returns the token list (copied source tokens appear as their surface
    strings) and, optionally, the attention matrix.
    """
    if max_len < 1:
        raise ContractError("max_len must be >= 1")
    use_copy = params.copy_w is not None and src_ext_ids is not None
    ext_size = len(vocab) + len(ext_tokens)
    state = initial_state(params)
    prev = vocab.bos_id
    tokens: List[str] = []
    attentions: List[np.ndarray] = []
    for _ in range(max_len):
        res = decode_step(params, state, prev, enc_states, mask)
        if use_copy:
            dist = copy_mix(res.vocab_dist, res.attention, src_ext_ids, res.p_gen, ext_size)
        else:
            dist = res.vocab_dist
        probs = dist.data.copy()
        probs[vocab.pad_id] = -1.0
        probs[vocab.bos_id] = -1.0
        choice = int(np.argmax(probs))  # np.argmax returns the first (lowest) maximal id
        if collect_attention:
            attentions.append(res.attention.data.copy())
        if choice == vocab.eos_id:
            break
        if choice < len(vocab):
            tokens.append(vocab.token(choice))
            prev = choice
        else:
            tokens.append(ext_tokens[choice - len(vocab)])
            prev = vocab.unk_id  # copied OOV tokens feed back as UNK
        state = res.state
    if collect_attention:
        return tokens, np.stack(attentions) if attentions else np.zeros((0, enc_states.shape[0]))
    return tokens


def beam_decode(params: DecoderParams, enc_states: Tensor, vocab: Vocabulary,
                max_len: int, beam_width: int = 1,
                mask: Optional[np.ndarray] = None,
                src_ext_ids: Optional[Sequence[int]] = None,
                ext_tokens: Sequence[str] = ()) -> List[str]:
    """Beam search over summed log probabilities; width 1 equals greedy."""
    if beam_width <= 1:
        return greedy_decode(params, enc_states, vocab, max_len, mask,
                             src_ext_ids, ext_tokens)
    use_copy = params.copy_w is not None and src_ext_ids is not None
    ext_size = len(vocab) + len(ext_tokens)
    beams = [(0.0, [], initial_state(params), vocab.bos_id, False)]
    for _ in range(max_len):
        candidates = []
        for score, toks, state, prev, done in beams:
            if done:
                candidates.append((score, toks, state, prev, True))
                continue
            res = decode_step(params, state, prev, enc_states, mask)
            if use_copy:
                dist = copy_mix(res.vocab_dist, res.attention, src_ext_ids, res.p_gen, ext_size)
            else:
                dist = res.vocab_dist
            probs = dist.data.copy()
            probs[vocab.pad_id] = 0.0
            probs[vocab.bos_id] = 0.0
            top = np.argsort(-probs, kind="stable")[:beam_width]
            for choice in top:
                choice = int(choice)
                logp = np.log(max(probs[choice], 1e-300))
                if choice == vocab.eos_id:
                    candidates.append((score + logp, toks, res.state, choice, True))
                    continue
                tok = vocab.token(choice) if choice < len(vocab) else ext_tokens[choice - len(vocab)]
                nxt = choice if choice < len(vocab) else vocab.unk_id
                candidates.append((score + logp, toks + [tok], res.state, nxt, False))
        candidates.sort(key=lambda b: -b[0])
        beams = candidates[:beam_width]
        if all(b[4] for b in beams):
            break
    return beams[0][1]


def load_pretrained_embeddings(path, vocab: Vocabulary, embed: Tensor) -> dict:
    """Copy pretrained vectors into the embedding table for covered tokens.

    File format: one token per line followed by its whitespace-separated
    components. Rows for tokens absent from the file keep their existing
    initialization. Returns a coverage report over the non-reserved vocab.
    """
    dim = embed.shape[1]
    found = 0
    total = len(vocab) - 4  # reserved entries are never in embedding files
    seen_dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if seen_dim is None:
                seen_dim = len(values)
                if seen_dim != dim:
                    raise DataError(
                        f"{path}: embedding dimension {seen_dim} != configured {dim}")
            elif len(values) != seen_dim:
                raise DataError(
                    f"{path}:{lineno}: vector length {len(values)} != {seen_dim}")
            if token in vocab:
                idx = vocab.id(token)
                if idx >= 4:
                    embed.data[idx] = np.asarray([float(v) for v in values],
                                                 dtype=embed.data.dtype)
                    found += 1
    coverage = found / total if total else 0.0
    return {"coverage": coverage, "found": found, "vocab": total}
