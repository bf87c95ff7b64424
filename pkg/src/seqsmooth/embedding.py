"""Fixed-size sentence embeddings: the on-disk store and a hashing fallback embedder."""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import CorruptVector, DimMismatch, EmptySequence, FormatError, TruncatedFile, ZeroNorm
from .text import Corpus, Vocabulary

MAGIC = b"SEQE"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")

UNIGRAM_WEIGHT = 1.0
BIGRAM_WEIGHT = 0.5


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """Row ``i`` holds the embedding of corpus target ``i``."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype="<f4")
        if v.ndim != 2 or v.shape[1] == 0:
            raise DimMismatch(f"expected a (count, dim) matrix, got shape {v.shape}")
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    def __len__(self) -> int:
        return self.count


def write_embeddings(store: EmbeddingStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, store.dim, store.count))
        fh.write(np.ascontiguousarray(store.vectors, dtype="<f4").tobytes())


def load_embeddings(path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < 4 or head[:4] != MAGIC:
            raise FormatError(f"{path}: bad magic, not an embedding file")
        if len(head) < _HEADER.size:
            raise TruncatedFile(f"{path}: header truncated")
        _, version, dim, count = _HEADER.unpack(head)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if dim == 0:
            raise FormatError(f"{path}: zero dimension")
        payload = fh.read()
    need = 4 * dim * count
    if len(payload) < need:
        raise TruncatedFile(f"{path}: expected {need} payload bytes, found {len(payload)}")
    vectors = np.frombuffer(payload[:need], dtype="<f4").reshape(count, dim).copy()
    bad = ~np.isfinite(vectors).all(axis=1)
    if bad.any():
        raise CorruptVector(int(np.flatnonzero(bad)[0]))
    return EmbeddingStore(vectors)


def _feature(key: bytes, seed: int, dim: int):
    h = hashlib.blake2b(key, digest_size=8, salt=struct.pack("<q", seed)[:8].ljust(16, b"\0")).digest()
    v = int.from_bytes(h, "little")
    return v % dim, 1.0 if (v >> 63) & 1 else -1.0


def fallback_embed(seq, vocab: Vocabulary, dim: int = 256, seed: int = 17) -> np.ndarray:
    """Signed feature hashing of token unigrams and bigrams, L2-normalized."""
    if dim < 8:
        raise ValueError("fallback embedding needs dim >= 8")
    if len(seq) == 0:
        raise EmptySequence("cannot embed an empty sequence")
    words = [vocab.token(i) for i in seq]
    out = np.zeros(dim)
    for w in words:
        j, s = _feature(b"1\x00" + w.encode("utf-8"), seed, dim)
        out[j] += s * UNIGRAM_WEIGHT
    for a, b in zip(words, words[1:]):
        j, s = _feature(b"2\x00" + a.encode("utf-8") + b"\x00" + b.encode("utf-8"), seed, dim)
        out[j] += s * BIGRAM_WEIGHT
    norm = np.linalg.norm(out)
    if norm == 0.0:
        # every feature cancelled; fall back to the first unigram's slot
        j, s = _feature(b"1\x00" + words[0].encode("utf-8"), seed, dim)
        out[j] = s
        norm = 1.0
    return out / norm


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroNorm("cosine similarity of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class FallbackEmbedder(TransformerMixin, BaseEstimator):
    """Transformer mapping token-id sequences to hashed bag-of-n-gram vectors.

    Parameters
    ----------
    vocab : Vocabulary
        Vocabulary the ids refer to; tokens are hashed by their string form.
    dim : int
    seed : int
    """

    def __init__(self, vocab=None, dim=256, seed=17):
        self.vocab = vocab
        self.dim = dim
        self.seed = seed

    def fit(self, X, y=None):
        if self.vocab is None:
            raise ValueError("FallbackEmbedder needs a vocabulary")
        if self.dim < 8:
            raise ValueError("dim must be >= 8")
        self.n_features_out_ = self.dim
        return self

    def transform(self, X):
        if not hasattr(self, "n_features_out_"):
            self.fit(X)
        return np.stack([fallback_embed(s, self.vocab, self.dim, self.seed) for s in X])


def embed_corpus(corpus: Corpus, dim: int = 256, seed: int = 17) -> EmbeddingStore:
    """Fallback embeddings of every corpus target, in corpus-index order."""
    targets = [ex.target for ex in sorted(corpus.examples, key=lambda e: e.corpus_index)]
    return EmbeddingStore(FallbackEmbedder(corpus.tgt_vocab, dim, seed).fit_transform(targets))
