"""Minibatch SGD on the smoothed loss, evaluation, and the estimator facade."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .bleu import BleuConfig, corpus_bleu, sentence_bleu_list
from .exceptions import ConfigError, MissingRelatedSet
from .model import (ModelParams, Row, greedy_decode_batch, init_params, loss_and_grad, sgd_step,
                    smoothed_rows)
from .retrieval import RelatedSet
from .smoothing import SEMANTIC, TOKEN_LS, SmoothingStrategy, build_related, derive_seed
from .text import Corpus, ParallelExample, Vocabulary

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    strategy: SmoothingStrategy = field(default_factory=SmoothingStrategy)
    learning_rate: float = 0.2
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    clip_norm: Optional[float] = 5.0
    # token-level smoothing layered on top of a sequence-level strategy
    token_ls: Optional[float] = None
    emb_dim: int = 32
    hidden_dim: int = 64
    max_decode_len: Optional[int] = None
    # learning rate of epoch e is learning_rate * lr_decay**e
    lr_decay: float = 1.0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning rate must be non-negative")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.token_ls is not None and not 0 <= self.token_ls < 1:
            raise ConfigError("token_ls must lie in [0, 1)")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")

    @property
    def alpha(self) -> float:
        return self.strategy.alpha


@dataclass(frozen=True)
class EvalResult:
    bleu4: float
    sentence_bleu: List[float]
    seq_accuracy: float
    hypotheses: List[tuple]


def _decode_len(corpus: Corpus, cfg: Optional[TrainingConfig] = None) -> int:
    if cfg is not None and cfg.max_decode_len:
        return cfg.max_decode_len
    return max(len(ex.target) for ex in corpus.examples) + 5


def evaluate(params: ModelParams, corpus: Corpus, max_len: Optional[int] = None) -> EvalResult:
    """Corpus BLEU4 of greedy decodes against the corpus targets."""
    if len(corpus) == 0:
        raise ConfigError("cannot evaluate on an empty split")
    max_len = max_len or _decode_len(corpus)
    hyps = greedy_decode_batch(params, corpus.sources, max_len)
    refs = corpus.targets
    acc = float(np.mean([h == tuple(r) for h, r in zip(hyps, refs)]))
    return EvalResult(
        bleu4=corpus_bleu(hyps, refs, BleuConfig(4)),
        sentence_bleu=sentence_bleu_list(hyps, refs, BleuConfig(4)),
        seq_accuracy=acc,
        hypotheses=hyps,
    )


def batch_rows(config: TrainingConfig, batch: Sequence[ParallelExample], epoch: int,
               related_map: Optional[Mapping[int, RelatedSet]] = None,
               corpus: Optional[Corpus] = None) -> List[Row]:
    """Rows of one minibatch; their weighted sum is the mean smoothed loss."""
    strat = config.strategy
    token_ls = config.token_ls
    if strat.variant == TOKEN_LS:
        token_ls = strat.alpha
    scale = 1.0 / len(batch)
    rows: List[Row] = []
    for ex in batch:
        related = ()
        if strat.sequence_level:
            related = build_related(strat, ex, batch, related_map, corpus, epoch).sequences
        alpha = strat.alpha if strat.sequence_level else 0.0
        rows.extend(smoothed_rows(ex.source, ex.target, related, alpha, token_ls, scale))
    return rows


def train(config: TrainingConfig, corpus: Corpus, related_map: Optional[Mapping[int, RelatedSet]] = None,
          dev: Optional[Corpus] = None, init: Optional[ModelParams] = None, eval_every: int = 1):
    """Fit a model; returns the parameters and one metrics record per epoch."""
    if len(corpus) == 0:
        raise ConfigError("cannot train on an empty corpus")
    if config.strategy.variant == SEMANTIC:
        if related_map is None:
            raise MissingRelatedSet(corpus.examples[0].corpus_index)
        missing = [ex.corpus_index for ex in corpus.examples if ex.corpus_index not in related_map]
        if missing:
            raise MissingRelatedSet(missing[0])
    elif related_map is not None:
        log.warning("related sets are ignored by strategy %s", config.strategy.variant)
        related_map = None

    params = init.copy() if init is not None else init_params(
        len(corpus.src_vocab), len(corpus.tgt_vocab), config.emb_dim, config.hidden_dim, config.seed)
    examples = list(corpus.examples)
    history = []
    for epoch in range(config.epochs):
        rng = np.random.default_rng(derive_seed(config.seed, epoch, 0x5EED))
        order = rng.permutation(len(examples))
        lr = config.learning_rate * config.lr_decay ** epoch
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [examples[j] for j in order[start : start + config.batch_size]]
            rows = batch_rows(config, batch, epoch, related_map, corpus)
            loss, _, g = loss_and_grad(params, rows)
            total += loss * len(batch)
            if lr > 0:
                sgd_step(params, g, lr, config.clip_norm)
        record = {"epoch": epoch + 1, "train_loss": total / len(examples), "dev_bleu4": None}
        if dev is not None and ((epoch + 1) % eval_every == 0 or epoch + 1 == config.epochs):
            res = evaluate(params, dev, _decode_len(dev, config))
            record["dev_bleu4"] = res.bleu4
            record["dev_seq_acc"] = res.seq_accuracy
        log.info("epoch %d train_loss %.4f dev_bleu4 %s", record["epoch"], record["train_loss"], record["dev_bleu4"])
        history.append(record)
    return params, history


def write_metrics(history: Sequence[Dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")


def read_metrics(path) -> List[Dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _as_corpus(X, y=None, src_vocab_size=None, tgt_vocab_size=None) -> Corpus:
    if isinstance(X, Corpus):
        return X
    if y is None:
        raise ValueError("targets y are required when X is not a Corpus")
    X = [tuple(int(t) for t in s) for s in X]
    y = [tuple(int(t) for t in s) for s in y]
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} sources but y has {len(y)} targets")
    vs = src_vocab_size or max(max(s) for s in X) + 1
    vt = tgt_vocab_size or max(max(s) for s in y) + 1
    src_vocab = Vocabulary([f"s{i}" for i in range(4, max(vs, 4))])
    tgt_vocab = Vocabulary([f"t{i}" for i in range(4, max(vt, 4))])
    exs = tuple(ParallelExample(s, t, i) for i, (s, t) in enumerate(zip(X, y)))
    return Corpus(exs, src_vocab, tgt_vocab)


class SmoothedSeq2Seq(BaseEstimator):
    """Encoder-decoder trained with sequence-level label smoothing.

    ``fit`` accepts a :class:`Corpus` (``y`` ignored) or lists of source and
    target id sequences. ``predict`` greedy-decodes, ``score`` returns corpus BLEU4.
    """

    def __init__(self, strategy="none", alpha=0.0, token_ls=None, swap_count=None, k_prime=5,
                 learning_rate=0.2, batch_size=16, epochs=10, seed=0, clip_norm=5.0,
                 emb_dim=32, hidden_dim=64, max_decode_len=None, lr_decay=1.0):
        self.strategy = strategy
        self.alpha = alpha
        self.token_ls = token_ls
        self.swap_count = swap_count
        self.k_prime = k_prime
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.clip_norm = clip_norm
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        self.max_decode_len = max_decode_len
        self.lr_decay = lr_decay

    def training_config(self) -> TrainingConfig:
        strat = SmoothingStrategy(self.strategy, self.alpha, self.swap_count, k_prime=self.k_prime,
                                  seed=self.seed)
        return TrainingConfig(strat, self.learning_rate, self.batch_size, self.epochs, self.seed,
                              self.clip_norm, self.token_ls, self.emb_dim, self.hidden_dim,
                              self.max_decode_len, lr_decay=self.lr_decay)

    def fit(self, X, y=None, related=None, dev=None):
        corpus = _as_corpus(X, y)
        self.params_, self.history_ = train(self.training_config(), corpus, related, dev)
        self.n_source_vocab_ = len(corpus.src_vocab)
        self.n_target_vocab_ = len(corpus.tgt_vocab)
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise AttributeError("SmoothedSeq2Seq is not fitted yet; call fit first")

    def predict(self, X) -> List[tuple]:
        self._check_fitted()
        sources = X.sources if isinstance(X, Corpus) else [tuple(s) for s in X]
        max_len = self.max_decode_len or max(len(s) for s in sources) * 2 + 5
        return greedy_decode_batch(self.params_, sources, max_len)

    def score(self, X, y=None) -> float:
        self._check_fitted()
        refs = X.targets if isinstance(X, Corpus) else [tuple(t) for t in y]
        hyps = self.predict(X)
        return corpus_bleu(hyps, refs, BleuConfig(4))
