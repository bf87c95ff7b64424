"""Seeded toy tasks: a copy task and a synonym-rich synthetic translation task."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .embedding import EmbeddingStore, fallback_embed
from .text import Corpus, Vocabulary


def copy_task(n_train: int = 200, n_dev: int = 50, vocab_size: int = 8, min_len: int = 3,
              max_len: int = 6, seed: int = 0) -> Tuple[Corpus, Corpus]:
    rng = np.random.default_rng(seed)

    def draw(n):
        return [" ".join(f"w{t}" for t in rng.integers(vocab_size, size=rng.integers(min_len, max_len + 1)))
                for _ in range(n)]

    train_lines, dev_lines = draw(n_train), draw(n_dev)
    train = Corpus.from_lines(train_lines, train_lines)
    dev = Corpus.from_lines(dev_lines, dev_lines, vocabs=(train.src_vocab, train.tgt_vocab))
    return train, dev


@dataclass
class SynonymTask:
    """Concept sequences rendered into two languages with synonym choices.

    Every meaning (a sequence of concepts) is realized several times in the
    training split with independently drawn source and target synonyms, so
    genuine paraphrases of each target exist among the training targets. A
    fraction of training targets carry one corrupted token; dev references are
    clean realizations of the same meanings.
    """

    train: Corpus
    dev: Corpus
    train_meanings: List[Tuple[int, ...]]
    dev_meanings: List[Tuple[int, ...]]
    target_concept: Dict[str, int]

    def concept_sequence(self, target) -> Tuple[int, ...]:
        vocab = self.train.tgt_vocab
        return tuple(self.target_concept.get(vocab.token(i), -1 - i) for i in target)

    def embed_targets(self, dim: int = 64, seed: int = 17) -> EmbeddingStore:
        """Synonym-aware embeddings: every target word is mapped to its concept
        before hashing, standing in for a pretrained sentence encoder."""
        concept_vocab = Vocabulary([f"c{c}" for c in sorted(set(self.target_concept.values()))]
                                   + [f"x{i}" for i in range(len(self.train.tgt_vocab))])
        rows = []
        for ex in self.train.examples:
            words = [f"c{c}" if c >= 0 else f"x{-1 - c}" for c in self.concept_sequence(ex.target)]
            rows.append(fallback_embed(tuple(concept_vocab.id(w) for w in words), concept_vocab, dim, seed))
        return EmbeddingStore(np.stack(rows))


def synonym_task(n_concepts: int = 24, n_meanings: int = 120, realizations: int = 4,
                 dev_per_meaning: int = 1, min_len: int = 3, max_len: int = 5,
                 max_source_synonyms: int = 2, max_target_synonyms: int = 3,
                 noise: float = 0.3, synonym_skew: float = 0.0, seed: int = 0) -> SynonymTask:
    rng = np.random.default_rng(seed)
    src_words = [[f"s{c}_{k}" for k in range(rng.integers(1, max_source_synonyms + 1))] for c in range(n_concepts)]
    tgt_words = [[f"t{c}_{k}" for k in range(rng.integers(1, max_target_synonyms + 1))] for c in range(n_concepts)]
    all_tgt = [w for ws in tgt_words for w in ws]
    target_concept = {w: c for c, ws in enumerate(tgt_words) for w in ws}

    meanings = set()
    while len(meanings) < n_meanings:
        meanings.add(tuple(int(c) for c in rng.integers(n_concepts, size=rng.integers(min_len, max_len + 1))))
    meanings = sorted(meanings)

    def pick(words):
        w = 1.0 / np.arange(1, len(words) + 1) ** synonym_skew
        return words[rng.choice(len(words), p=w / w.sum())]

    def realize(m, noisy):
        src = [pick(src_words[c]) for c in m]
        tgt = [pick(tgt_words[c]) for c in m]
        if noisy and rng.random() < noise:
            tgt[rng.integers(len(tgt))] = all_tgt[rng.integers(len(all_tgt))]
        return " ".join(src), " ".join(tgt)

    train_pairs, train_meanings = [], []
    for m in meanings:
        for _ in range(realizations):
            train_pairs.append(realize(m, True))
            train_meanings.append(m)
    perm = rng.permutation(len(train_pairs))
    train_pairs = [train_pairs[i] for i in perm]
    train_meanings = [train_meanings[i] for i in perm]
    dev_pairs, dev_meanings = [], []
    for m in meanings:
        for _ in range(dev_per_meaning):
            dev_pairs.append(realize(m, False))
            dev_meanings.append(m)

    # a vocabulary over every word keeps rare dev words out of UNK
    src_vocab = Vocabulary.build([[w for ws in src_words for w in ws]])
    tgt_vocab = Vocabulary.build([all_tgt])
    train = Corpus.from_lines([s for s, _ in train_pairs], [t for _, t in train_pairs], vocabs=(src_vocab, tgt_vocab))
    dev = Corpus.from_lines([s for s, _ in dev_pairs], [t for _, t in dev_pairs], vocabs=(src_vocab, tgt_vocab))
    return SynonymTask(train, dev, train_meanings, dev_meanings, target_concept)
