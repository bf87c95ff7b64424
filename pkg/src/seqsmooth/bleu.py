"""Sentence- and corpus-level BLEU with epsilon smoothing of empty n-gram matches."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Sequence, Tuple

import numpy as np

from .exceptions import EmptySequence


@dataclass(frozen=True)
class BleuConfig:
    max_n: int = 4
    smoothing_epsilon: float = 0.1

    def __post_init__(self):
        if not 1 <= self.max_n <= 5:
            raise ValueError(f"max_n must be in 1..5, got {self.max_n}")
        if not self.smoothing_epsilon > 0:
            raise ValueError("smoothing_epsilon must be positive")


def ngram_counts(seq: Sequence[int], n: int) -> Counter:
    if n < 1:
        raise ValueError("n must be >= 1")
    seq = tuple(seq)
    return Counter(seq[i : i + n] for i in range(len(seq) - n + 1))


def modified_precision(candidate, reference, n: int) -> Tuple[int, int]:
    """Clipped n-gram matches and total candidate n-grams."""
    cand = ngram_counts(candidate, n)
    ref = ngram_counts(reference, n)
    matches = sum(min(c, ref[g]) for g, c in cand.items())
    return matches, sum(cand.values())


def brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def _log_precision(matches: int, total: int, eps: float) -> float:
    if total == 0:
        return math.log(eps)
    if matches == 0:
        return math.log(eps / total)
    return math.log(matches / total)


def sentence_bleu(candidate, reference, cfg: BleuConfig = BleuConfig()) -> float:
    if len(candidate) == 0 or len(reference) == 0:
        raise EmptySequence("BLEU needs non-empty candidate and reference")
    log_sum = 0.0
    for n in range(1, cfg.max_n + 1):
        m, t = modified_precision(candidate, reference, n)
        log_sum += _log_precision(m, t, cfg.smoothing_epsilon)
    return brevity_penalty(len(candidate), len(reference)) * math.exp(log_sum / cfg.max_n)


def corpus_bleu(candidates: Iterable, references: Iterable, cfg: BleuConfig = BleuConfig()) -> float:
    """Corpus BLEU: clipped counts and lengths are summed over sentences before combining."""
    matches = [0] * cfg.max_n
    totals = [0] * cfg.max_n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references, strict=True):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, cfg.max_n + 1):
            m, t = modified_precision(cand, ref, n)
            matches[n - 1] += m
            totals[n - 1] += t
    if cand_len == 0:
        return 0.0
    log_sum = sum(_log_precision(m, t, cfg.smoothing_epsilon) for m, t in zip(matches, totals))
    return brevity_penalty(cand_len, max(ref_len, 1)) * math.exp(log_sum / cfg.max_n)


def sentence_bleu_list(candidates, references, cfg: BleuConfig = BleuConfig()) -> List[float]:
    """Per-sentence scores; an empty candidate scores 0."""
    return [sentence_bleu(c, r, cfg) if len(c) else 0.0 for c, r in zip(candidates, references, strict=True)]


def _count_matrix(seqs: Sequence[tuple], n: int, index: dict) -> np.ndarray:
    out = np.zeros((len(seqs), len(index)), dtype=np.int16)
    for row, s in enumerate(seqs):
        for i in range(len(s) - n + 1):
            out[row, index[s[i : i + n]]] += 1
    return out


def iter_sentence_bleu_blocks(candidates: Sequence, references: Sequence, cfg: BleuConfig = BleuConfig(),
                              block: int = 512) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield ``(start, scores)`` where ``scores[i, j]`` is the sentence BLEU of
    ``candidates[start + i]`` against ``references[j]``.

    Uses dense n-gram count matrices, so it suits small alphabets or modest sets.
    """
    cands = [tuple(c) for c in candidates]
    refs = [tuple(r) for r in references]
    if any(len(s) == 0 for s in cands + refs):
        raise EmptySequence("BLEU needs non-empty candidates and references")
    eps = cfg.smoothing_epsilon
    c_len = np.array([len(c) for c in cands], dtype=np.float64)
    r_len = np.array([len(r) for r in refs], dtype=np.float64)
    orders = []
    for n in range(1, cfg.max_n + 1):
        grams = sorted({s[i : i + n] for s in cands + refs for i in range(len(s) - n + 1)})
        index = {g: k for k, g in enumerate(grams)}
        cm = _count_matrix(cands, n, index)
        rm = _count_matrix(refs, n, index)
        # only n-grams present on both sides can match
        both = np.flatnonzero(cm.any(axis=0) & rm.any(axis=0))
        orders.append((np.ascontiguousarray(cm[:, both].T), np.ascontiguousarray(rm[:, both].T),
                       np.maximum(c_len - n + 1, 0)))
    for start in range(0, len(cands), block):
        stop = min(start + block, len(cands))
        log_sum = np.zeros((stop - start, len(refs)))
        for cm_t, rm_t, total in orders:
            matches = np.zeros_like(log_sum, dtype=np.int16)
            for cg, rg in zip(cm_t, rm_t):
                matches += np.minimum(cg[start:stop, None], rg[None, :])
            t = np.broadcast_to(total[start:stop, None], matches.shape)
            with np.errstate(divide="ignore", invalid="ignore"):
                log_sum += np.where(t == 0, math.log(eps),
                                    np.where(matches == 0, np.log(eps / t), np.log(matches / t)))
        cl = c_len[start:stop, None]
        bp = np.where(cl >= r_len[None, :], 1.0, np.exp(1.0 - r_len[None, :] / cl))
        yield start, bp * np.exp(log_sum / cfg.max_n)


def sentence_bleu_matrix(candidates: Sequence, references: Sequence, cfg: BleuConfig = BleuConfig()) -> np.ndarray:
    """All-pairs sentence BLEU: entry (i, j) equals ``sentence_bleu(candidates[i], references[j])``."""
    blocks = [b for _, b in iter_sentence_bleu_blocks(candidates, references, cfg)]
    if not blocks:
        return np.zeros((0, len(references)))
    return np.vstack(blocks)
