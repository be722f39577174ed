"""Corpus-level BLEU and token accuracy."""

import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import ContractError

SMOOTH_EPS = 1e-9


@dataclass
class BleuReport:
    bleu: float
    precisions: List[float]
    brevity_penalty: float
    hyp_length: int
    ref_length: int
    effective_order: int
    smoothed: bool

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "precisions": self.precisions,
            "brevity_penalty": self.brevity_penalty,
            "hyp_length": self.hyp_length,
            "ref_length": self.ref_length,
            "effective_order": self.effective_order,
            "smoothed": self.smoothed,
        }


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[Sequence[str]],
                references: Sequence[Sequence[Sequence[str]]],
                max_n: int = 4, smoothing: bool = False) -> BleuReport:
    """Corpus BLEU with clipped n-gram precisions and brevity penalty.

    ``references`` holds one or more reference token lists per hypothesis.
    When the longest hypothesis is shorter than ``max_n`` the geometric
    mean runs over the available orders only, so tiny fixtures do not
    collapse to zero spuriously. Optional add-epsilon smoothing replaces
    zero match counts for use during early stopping.
    """
    if len(hypotheses) != len(references):
        raise ContractError(
            f"{len(hypotheses)} hypotheses vs {len(references)} reference sets")
    for i, refs in enumerate(references):
        if not refs:
            raise ContractError(f"hypothesis {i} has no references")

    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        # effective reference length: closest to the hypothesis, shorter on ties
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]

    max_hyp = max((len(h) for h in hypotheses), default=0)
    order = max(1, min(max_n, max_hyp))

    matches = [0] * order
    totals = [0] * order
    for hyp, refs in zip(hypotheses, references):
        for n in range(1, order + 1):
            hyp_grams = _ngrams(hyp, n)
            totals[n - 1] += sum(hyp_grams.values())
            if not hyp_grams:
                continue
            max_ref = Counter()
            for r in refs:
                for gram, cnt in _ngrams(r, n).items():
                    if cnt > max_ref[gram]:
                        max_ref[gram] = cnt
            matches[n - 1] += sum(min(cnt, max_ref[gram]) for gram, cnt in hyp_grams.items())

    precisions = []
    for m, t in zip(matches, totals):
        if t == 0:
            precisions.append(0.0)
        elif m == 0 and smoothing:
            precisions.append(SMOOTH_EPS / t)
        else:
            precisions.append(m / t)

    if hyp_len == 0:
        return BleuReport(0.0, precisions, 0.0, 0, ref_len, order, smoothing)
    bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    if any(p == 0.0 for p in precisions):
        bleu = 0.0
    else:
        bleu = bp * math.exp(sum(math.log(p) for p in precisions) / order)
    return BleuReport(bleu, precisions, bp, hyp_len, ref_len, order, smoothing)


def token_accuracy(predicted, gold, mask=None) -> float:
    """Fraction of unmasked positions where prediction equals gold."""
    predicted = np.asarray(predicted)
    gold = np.asarray(gold)
    if predicted.shape != gold.shape:
        raise ContractError(
            f"shape mismatch: {predicted.shape} vs {gold.shape}")
    if mask is None:
        mask = np.ones_like(gold, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        return 0.0
    return float(((predicted == gold) & mask).sum()) / n
