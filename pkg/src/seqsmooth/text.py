"""Tokenization, vocabularies and parallel corpora.

Sequences are plain tuples of integer token ids. Corpora and vocabularies are
immutable once built.
"""
from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Tuple

from .exceptions import EmptyInput, FormatError, ParallelMismatch, TruncatedFile, VocabError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")

Seq = Tuple[int, ...]

CORPUS_MAGIC = b"SEQC"
CORPUS_VERSION = 1


class Vocabulary:
    """Bijective token <-> id map with the four special ids in front."""

    def __init__(self, tokens: Iterable[str]):
        tokens = tuple(tokens)
        if tokens[: len(SPECIALS)] != SPECIALS:
            tokens = SPECIALS + tuple(t for t in tokens if t not in SPECIALS)
        if len(set(tokens)) != len(tokens):
            raise VocabError("vocabulary tokens must be unique")
        self._tokens = tokens
        self._index = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def build(cls, sentences: Iterable[Iterable[str]], max_size: Optional[int] = None) -> "Vocabulary":
        """Frequency-ranked vocabulary; ties go to the lexicographically smaller token.

        ``max_size`` counts the special tokens.
        """
        counts = Counter()
        for words in sentences:
            counts.update(w for w in words if w not in SPECIALS)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if max_size is not None:
            if max_size < len(SPECIALS):
                raise VocabError(f"max_vocab must be at least {len(SPECIALS)}")
            ranked = ranked[: max_size - len(SPECIALS)]
        return cls(SPECIALS + tuple(t for t, _ in ranked))

    @property
    def tokens(self) -> Tuple[str, ...]:
        return self._tokens

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def __hash__(self) -> int:
        return hash(self._tokens)

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    def id(self, token: str) -> int:
        return self._index.get(token, UNK)

    def token(self, idx: int) -> str:
        if not 0 <= idx < len(self._tokens):
            raise VocabError(f"token id {idx} outside vocabulary of size {len(self)}")
        return self._tokens[idx]

    def check(self, seq: Seq) -> None:
        n = len(self._tokens)
        for i in seq:
            if not 0 <= i < n:
                raise VocabError(f"token id {i} outside vocabulary of size {n}")


def split_words(text: str) -> list:
    return text.lower().split()


def tokenize(text: str, vocab: Vocabulary) -> Seq:
    words = split_words(text)
    if not words:
        raise EmptyInput("text is empty after trimming")
    return tuple(vocab.id(w) for w in words)


def detokenize(seq: Seq, vocab: Vocabulary) -> str:
    return " ".join(vocab.token(i) for i in seq)


@dataclass(frozen=True)
class ParallelExample:
    source: Seq
    target: Seq
    corpus_index: int


@dataclass(frozen=True)
class Corpus:
    examples: Tuple[ParallelExample, ...]
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary

    def __post_init__(self):
        seen = set()
        for ex in self.examples:
            if ex.corpus_index in seen:
                raise ValueError(f"duplicate corpus index {ex.corpus_index}")
            seen.add(ex.corpus_index)
            self.src_vocab.check(ex.source)
            self.tgt_vocab.check(ex.target)

    def __len__(self) -> int:
        return len(self.examples)

    def __getitem__(self, i) -> ParallelExample:
        return self.examples[i]

    @property
    def sources(self) -> list:
        return [ex.source for ex in self.examples]

    @property
    def targets(self) -> list:
        return [ex.target for ex in self.examples]

    @classmethod
    def from_lines(cls, source_lines, target_lines, max_vocab: Optional[int] = None,
                   vocabs: Optional[Tuple[Vocabulary, Vocabulary]] = None) -> "Corpus":
        """Pair up raw sentences; build vocabularies unless ``vocabs`` is given."""
        source_lines = list(source_lines)
        target_lines = list(target_lines)
        if len(source_lines) != len(target_lines):
            raise ParallelMismatch(len(source_lines), len(target_lines))
        src_words = [split_words(s) for s in source_lines]
        tgt_words = [split_words(t) for t in target_lines]
        for i, (s, t) in enumerate(zip(src_words, tgt_words)):
            if not s or not t:
                raise EmptyInput(f"line {i + 1} is empty")
        if vocabs is None:
            src_vocab = Vocabulary.build(src_words, max_vocab)
            tgt_vocab = Vocabulary.build(tgt_words, max_vocab)
        else:
            src_vocab, tgt_vocab = vocabs
        examples = tuple(
            ParallelExample(
                source=tuple(src_vocab.id(w) for w in s),
                target=tuple(tgt_vocab.id(w) for w in t),
                corpus_index=i,
            )
            for i, (s, t) in enumerate(zip(src_words, tgt_words))
        )
        return cls(examples, src_vocab, tgt_vocab)


def _read_lines(path) -> list:
    with open(path, encoding="utf-8", newline="\n") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def load_corpus(source_path, target_path, max_vocab: Optional[int] = None,
                vocabs: Optional[Tuple[Vocabulary, Vocabulary]] = None) -> Corpus:
    """Read two line-aligned UTF-8 files into a :class:`Corpus`."""
    return Corpus.from_lines(_read_lines(source_path), _read_lines(target_path), max_vocab, vocabs)


def save_corpus(corpus: Corpus, path) -> None:
    payload = json.dumps(
        {
            "src_vocab": list(corpus.src_vocab.tokens),
            "tgt_vocab": list(corpus.tgt_vocab.tokens),
            "examples": [[ex.corpus_index, list(ex.source), list(ex.target)] for ex in corpus.examples],
        },
        separators=(",", ":"),
        ensure_ascii=False,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CORPUS_MAGIC)
        fh.write(struct.pack("<IQ", CORPUS_VERSION, len(payload)))
        fh.write(payload)


def read_corpus(path) -> Corpus:
    data = Path(path).read_bytes()
    if data[:4] != CORPUS_MAGIC:
        raise FormatError(f"{path}: not a corpus file")
    if len(data) < 16:
        raise TruncatedFile(f"{path}: header truncated")
    version, size = struct.unpack("<IQ", data[4:16])
    if version != CORPUS_VERSION:
        raise FormatError(f"{path}: unsupported corpus version {version}")
    if len(data) - 16 < size:
        raise TruncatedFile(f"{path}: expected {size} payload bytes, found {len(data) - 16}")
    obj = json.loads(data[16 : 16 + size].decode("utf-8"))
    examples = tuple(ParallelExample(tuple(s), tuple(t), i) for i, s, t in obj["examples"])
    return Corpus(examples, Vocabulary(obj["src_vocab"]), Vocabulary(obj["tgt_vocab"]))
