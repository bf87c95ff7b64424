"""Related-target strategies feeding the smoothed sequence loss.

Five variants are available: no smoothing, uniform token-level smoothing,
the other targets of the minibatch, random in-sequence token swaps, and
corpus targets retrieved by embedding similarity and reranked by BLEU.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .bleu import BleuConfig, sentence_bleu
from .exceptions import ConfigError, InvalidAlpha, InvalidSwapCount, MissingRelatedSet
from .retrieval import RelatedSet, RetrievalParams
from .text import Corpus, ParallelExample, Vocabulary

NONE = "none"
TOKEN_LS = "token-ls"
BATCH_LS = "batch-ls"
RANDOM_SWAP = "random-swap"
SEMANTIC = "semantic"
VARIANTS = (NONE, TOKEN_LS, BATCH_LS, RANDOM_SWAP, SEMANTIC)

# best alpha per baseline in the published comparison
DEFAULT_ALPHA = {NONE: 0.0, TOKEN_LS: 0.1, BATCH_LS: 0.001, RANDOM_SWAP: 0.01, SEMANTIC: 0.1}

REPORT_LABELS = {
    NONE: "Base setup",
    TOKEN_LS: "Token LS",
    BATCH_LS: "Within batch sequence LS",
    RANDOM_SWAP: "Sampled augmentations BLEU4",
    SEMANTIC: "BERT+BLEU4",
}


@dataclass(frozen=True)
class SmoothingStrategy:
    variant: str = NONE
    alpha: float = 0.0
    swap_count: Optional[int] = None
    swap_pool: str = "target"
    k_prime: int = 5
    retrieval: RetrievalParams = field(default_factory=RetrievalParams)
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown strategy {self.variant!r}; choose from {VARIANTS}")
        if not self.alpha >= 0:
            raise InvalidAlpha(f"alpha must be non-negative, got {self.alpha}")
        if self.variant == TOKEN_LS and self.alpha >= 1:
            raise InvalidAlpha("token-level alpha must be < 1")
        if self.swap_pool not in ("target", "batch"):
            raise ConfigError("swap_pool must be 'target' or 'batch'")

    @property
    def sequence_level(self) -> bool:
        return self.variant in (BATCH_LS, RANDOM_SWAP, SEMANTIC)


def token_uniform_target(true_id: int, alpha: float, vocab_size: int) -> np.ndarray:
    if not 0 <= alpha < 1:
        raise InvalidAlpha(f"token smoothing alpha must lie in [0, 1), got {alpha}")
    if not 0 <= true_id < vocab_size:
        raise ValueError(f"true_id {true_id} outside vocabulary of size {vocab_size}")
    q = np.full(vocab_size, alpha / vocab_size)
    q[true_id] += 1.0 - alpha
    return q


def within_batch_related(batch: Sequence[ParallelExample], i: int,
                         cfg: BleuConfig = BleuConfig()) -> RelatedSet:
    y = batch[i].target
    others = [ex for j, ex in enumerate(batch) if j != i]
    members = tuple((ex.corpus_index, sentence_bleu(ex.target, y, cfg)) for ex in others)
    return RelatedSet(batch[i].corpus_index, members, tuple(ex.target for ex in others))


def default_swap_count(length: int) -> int:
    return max(1, int(round(0.1 * length)))


def derive_seed(*parts: int) -> int:
    """Collapse (global_seed, corpus_index, epoch, ...) into one 63-bit seed."""
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(2, np.uint64)[0] >> 1)


def random_swap_augment(y, swap_count: int, vocab: Optional[Vocabulary], rng_seed: int,
                        pool: Optional[Sequence[int]] = None) -> tuple:
    """Replace ``swap_count`` distinct positions of ``y`` with tokens drawn
    uniformly from the other positions of ``y`` (or from ``pool`` when given)."""
    y = tuple(y)
    if swap_count < 0 or swap_count > len(y):
        raise InvalidSwapCount(f"swap_count {swap_count} invalid for a sequence of length {len(y)}")
    if vocab is not None:
        vocab.check(y)
    rng = np.random.default_rng(rng_seed)
    out = list(y)
    positions = rng.choice(len(y), size=swap_count, replace=False)
    for p in positions:
        if pool is not None:
            choices = list(pool)
        else:
            choices = [y[j] for j in range(len(y)) if j != p]
        if choices:
            out[p] = choices[int(rng.integers(len(choices)))]
    return tuple(out)


def build_related(strategy: SmoothingStrategy, example: ParallelExample,
                  batch: Sequence[ParallelExample] = (), related_map: Optional[Mapping[int, RelatedSet]] = None,
                  corpus: Optional[Corpus] = None, epoch: int = 0) -> RelatedSet:
    """Related targets of ``example`` under ``strategy``, with ``sequences`` resolved."""
    v = strategy.variant
    idx = example.corpus_index
    if v in (NONE, TOKEN_LS):
        return RelatedSet(idx)
    if v == BATCH_LS:
        pos = next(j for j, ex in enumerate(batch) if ex.corpus_index == idx)
        return within_batch_related(batch, pos)
    if v == RANDOM_SWAP:
        y = example.target
        n_swap = strategy.swap_count if strategy.swap_count is not None else default_swap_count(len(y))
        n_swap = min(n_swap, len(y))
        pool = None
        if strategy.swap_pool == "batch":
            pool = sorted({t for ex in batch for t in ex.target}) or None
        seqs = tuple(
            random_swap_augment(y, n_swap, None, derive_seed(strategy.seed, idx, epoch, j), pool)
            for j in range(strategy.k_prime)
        )
        return RelatedSet(idx, tuple((-1, sentence_bleu(s, y)) for s in seqs), seqs)
    # SEMANTIC
    if related_map is None or idx not in related_map:
        raise MissingRelatedSet(idx)
    rs = related_map[idx]
    if rs.sequences or not rs.members:
        return rs
    if corpus is None:
        raise ConfigError("semantic strategy needs the corpus to resolve related targets")
    targets = {ex.corpus_index: ex.target for ex in corpus.examples}
    return RelatedSet(idx, rs.members, tuple(targets[i] for i in rs.indices))


def resolve_related_map(related_map: Mapping[int, RelatedSet], corpus: Corpus) -> Dict[int, RelatedSet]:
    """Attach target sequences to every set read back from a related-set file."""
    targets = {ex.corpus_index: ex.target for ex in corpus.examples}
    out = {}
    for q, rs in related_map.items():
        try:
            out[q] = RelatedSet(q, rs.members, tuple(targets[i] for i in rs.indices))
        except KeyError as err:
            raise ConfigError(f"related set of {q} refers to unknown corpus index {err.args[0]}") from err
    return out
