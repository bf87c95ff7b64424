"""Sequence-level label smoothing with retrieved, BLEU-reranked related targets."""
from .bleu import BleuConfig, corpus_bleu, sentence_bleu
from .embedding import EmbeddingStore, FallbackEmbedder, load_embeddings, write_embeddings
from .model import ModelParams, greedy_decode, log_prob, smoothed_loss
from .retrieval import RelatedSet, RetrievalParams, SemanticRetriever, related_sequences
from .smoothing import SmoothingStrategy, build_related
from .text import Corpus, ParallelExample, Vocabulary, load_corpus
from .training import SmoothedSeq2Seq, TrainingConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "BleuConfig", "corpus_bleu", "sentence_bleu",
    "EmbeddingStore", "FallbackEmbedder", "load_embeddings", "write_embeddings",
    "ModelParams", "greedy_decode", "log_prob", "smoothed_loss",
    "RelatedSet", "RetrievalParams", "SemanticRetriever", "related_sequences",
    "SmoothingStrategy", "build_related",
    "Corpus", "ParallelExample", "Vocabulary", "load_corpus",
    "SmoothedSeq2Seq", "TrainingConfig", "evaluate", "train",
]
