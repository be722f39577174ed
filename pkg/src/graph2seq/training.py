"""Mini-batch training loop with Adam updates, dev-BLEU early stopping,
checkpointing and multi-run statistics.
"""

import json
import os
import time
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .ingestion import DatasetSplit
from .metrics import corpus_bleu
from .model import Graph2SeqModel, ModelConfig, build_model
from .optim import AdamState, adam_step, named_rng
from .vocab import Vocabulary


@dataclass
class Batch:
    """Padded view of a handful of examples for one optimizer step."""
    examples: list
    targets: np.ndarray  # batch x max_len gold ids, PAD-filled
    mask: np.ndarray     # True on real tokens
    ids: List[str]


def make_batch(examples: Sequence, vocab: Vocabulary, pad_to: Optional[int] = None) -> Batch:
    lengths = [len(g.target) + 1 for g in examples]  # + EOS
    width = pad_to if pad_to is not None else max(lengths)
    if width < max(lengths):
        raise ContractError("pad_to shorter than the longest target")
    targets = np.full((len(examples), width), vocab.pad_id, dtype=np.intp)
    mask = np.zeros((len(examples), width), dtype=bool)
    for i, g in enumerate(examples):
        ids = vocab.encode(g.target) + [vocab.eos_id]
        targets[i, :len(ids)] = ids
        mask[i, :len(ids)] = True
    return Batch(list(examples), targets, mask, [g.id for g in examples])


def nll_loss(stepwise_dists: Sequence[Sequence[Tensor]], targets: np.ndarray,
             mask: np.ndarray) -> Tuple[Tensor, Tensor]:
    """Negative log likelihood of the gold tokens under the given distributions.

    ``stepwise_dists[i][t]`` is the predicted distribution for example i at
    step t (rows may be shorter than the padded width; extra positions must
    be masked). Returns (summed loss, per-token mean loss).
    """
    terms = []
    n = 0
    for i, dists in enumerate(stepwise_dists):
        for t, dist in enumerate(dists):
            if not mask[i, t]:
                continue
            p = ad.row(dist, int(targets[i, t]))
            terms.append(-ad.log(ad.clamp_min(p, 1e-12)))
            n += 1
    if not terms:
        raise ContractError("nll_loss over an empty mask")
    total = reduce(ad.add, terms)
    return total, total * (1.0 / n)


@dataclass
class TrainConfig:
    epochs_max: int = 30
    batch_size: int = 64
    lr: float = 0.001
    dropout: float = 0.3
    seed: int = 1
    eval_every: int = 1               # dev evaluation period, in epochs
    patience: Optional[int] = 5       # eval rounds without dev-BLEU gain; None disables
    max_decode_len: int = 60
    clip_norm: float = 0.0            # 0 disables gradient clipping
    target_train_acc: Optional[float] = None  # stop once teacher-forced accuracy reaches this
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self) -> None:
        if self.epochs_max < 1 or self.batch_size < 1 or self.lr <= 0 or self.eval_every < 1:
            raise ConfigError("epochs_max, batch_size, lr and eval_every must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")


@dataclass
class TrainResult:
    model: Graph2SeqModel
    log: List[dict]
    best_dev_bleu: float
    best_epoch: int


def _batches(examples: list, batch_size: int, rng: np.random.Generator) -> List[list]:
    """Shuffle, then sort by target length inside windows to limit padding."""
    order = list(rng.permutation(len(examples)))
    window = batch_size * 4
    grouped: List[int] = []
    for start in range(0, len(order), window):
        chunk = order[start:start + window]
        chunk.sort(key=lambda i: (len(examples[i].target), i))
        grouped.extend(chunk)
    return [[examples[i] for i in grouped[s:s + batch_size]]
            for s in range(0, len(grouped), batch_size)]


def evaluate_split(model: Graph2SeqModel, split: DatasetSplit, max_len: int = 60,
                   smoothing: bool = True):
    """Greedy-decode a split and score corpus BLEU against its targets."""
    hyps = [model.generate(g, max_len=max_len) for g in split.examples]
    refs = [[list(g.target)] for g in split.examples]
    return corpus_bleu(hyps, refs, smoothing=smoothing), hyps


def train(config: TrainConfig, train_split: DatasetSplit,
          dev_split: Optional[DatasetSplit] = None,
          model: Optional[Graph2SeqModel] = None,
          log_path=None, checkpoint_dir=None) -> TrainResult:
    """Train with Adam, early stopping on dev BLEU and best-checkpoint keeping.

    Dev BLEU is computed on the raw token stream the model emits,
    before any relexicalisation. The optimizer consumes the per-token
    mean loss; the per-epoch log also records the summed objective.
    """
    config.validate()
    if len(train_split) == 0:
        raise ContractError("empty training split")
    config.model.dropout = config.dropout
    if model is None:
        config.model.seed = config.seed
        model = build_model(config.model, train_split.examples)
    adam = AdamState(lr=config.lr)
    shuffle_rng = named_rng(config.seed, "shuffle")
    dropout_rng = named_rng(config.seed, "dropout")

    best_bleu = -1.0
    best_epoch = 0
    best_params: Dict[str, np.ndarray] = {}
    stale = 0
    log: List[dict] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)

    def snapshot():
        return {name: t.data.copy() for name, t in model.store}

    try:
        for epoch in range(1, config.epochs_max + 1):
            t0 = time.time()
            epoch_loss = 0.0
            epoch_tokens = 0
            epoch_correct = 0
            for b, batch_examples in enumerate(_batches(train_split.examples,
                                                        config.batch_size, shuffle_rng)):
                model.store.zero_grads()
                losses = []
                n_tokens = 0
                for g in batch_examples:
                    loss, n, correct = model.forward_example(g, training=True, rng=dropout_rng)
                    losses.append(loss)
                    n_tokens += n
                    epoch_correct += correct
                total = reduce(ad.add, losses)
                if not np.isfinite(total.data):
                    raise ContractError(
                        f"non-finite loss in epoch {epoch} batch {b} "
                        f"(examples {[g.id for g in batch_examples]})")
                mean = total * (1.0 / n_tokens)
                ad.backward(mean)
                if config.clip_norm > 0:
                    model.store.clip_global_norm(config.clip_norm)
                adam_step(adam, model.store)
                epoch_loss += float(total.data)
                epoch_tokens += n_tokens

            entry = {
                "epoch": epoch,
                "train_loss": epoch_loss,
                "train_loss_per_token": epoch_loss / epoch_tokens,
                "train_acc": epoch_correct / epoch_tokens,
                "dev_bleu": None,
                "lr": config.lr,
                "seconds": round(time.time() - t0, 3),
            }

            stop = False
            if dev_split is not None and epoch % config.eval_every == 0:
                report, _ = evaluate_split(model, dev_split, config.max_decode_len)
                entry["dev_bleu"] = report.bleu
                if report.bleu > best_bleu:
                    best_bleu = report.bleu
                    best_epoch = epoch
                    best_params = snapshot()
                    stale = 0
                    if checkpoint_dir:
                        model.save(os.path.join(checkpoint_dir, "best.ckpt"))
                else:
                    stale += 1
                    if config.patience is not None and stale >= config.patience:
                        stop = True
            if checkpoint_dir:
                model.save(os.path.join(checkpoint_dir, f"epoch{epoch}.ckpt"))

            log.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()
            if (config.target_train_acc is not None
                    and entry["train_acc"] >= config.target_train_acc):
                stop = True
            if stop:
                break
    finally:
        if log_fh:
            log_fh.close()

    if best_params:
        for name, t in model.store:
            t.data = best_params[name]
            t.zero_grad()
    else:
        best_epoch = len(log)
    return TrainResult(model, log, best_bleu, best_epoch)


@dataclass
class RunStats:
    metric: str
    values: List[float]
    mean: float
    stddev: float
    degenerate: bool  # single run: stddev has no meaning

    @classmethod
    def from_values(cls, metric: str, values: List[float]) -> "RunStats":
        arr = np.asarray(values, dtype=float)
        degenerate = len(values) < 2
        std = 0.0 if degenerate else float(arr.std(ddof=1))
        return cls(metric, list(values), float(arr.mean()), std, degenerate)


def multi_run(config: TrainConfig, train_split: DatasetSplit, dev_split: DatasetSplit,
              test_split: DatasetSplit, n_runs: int = 3,
              checkpoint_root=None) -> Tuple[RunStats, List[TrainResult]]:
    """Train ``n_runs`` models with seeds base..base+n-1 and report
    mean and (n-1)-denominator standard deviation of test BLEU.
    """
    if n_runs < 1:
        raise ContractError("n_runs must be >= 1")
    bleus = []
    results = []
    for k in range(n_runs):
        run_cfg = TrainConfig(**{**config.__dict__, "model": ModelConfig(**config.model.__dict__)})
        run_cfg.seed = config.seed + k
        ckpt = os.path.join(checkpoint_root, f"run{k}") if checkpoint_root else None
        result = train(run_cfg, train_split, dev_split, checkpoint_dir=ckpt)
        report, _ = evaluate_split(result.model, test_split, config.max_decode_len,
                                   smoothing=False)
        bleus.append(report.bleu)
        results.append(result)
    return RunStats.from_values("bleu", bleus), results
