import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_knn, brute_related, brute_sentence_bleu, toy_corpus
from seqsmooth.embedding import EmbeddingStore, embed_corpus
from seqsmooth.exceptions import ConfigError, DimMismatch, EmptyStore
from seqsmooth.retrieval import (IVFIndex, RetrievalParams, SemanticRetriever, build_index, knn,
                                 precompute_related, read_related, related_sequences, write_related)
from seqsmooth.text import Corpus


@pytest.fixture(scope="module")
def toy50():
    corpus = toy_corpus(50, 7, n_words=6)
    return corpus, embed_corpus(corpus, 64, 17)


def test_single_vector_index():
    index = build_index(EmbeddingStore(np.ones((1, 4))))
    nl = knn(index, np.array([0.0, 1, 2, 3]), k=10)
    assert nl.indices == [0]


def test_empty_store():
    with pytest.raises(EmptyStore):
        build_index(EmbeddingStore(np.zeros((0, 4))))


def test_query_equal_to_stored_vector():
    rng = np.random.default_rng(0)
    vecs = rng.normal(size=(30, 8))
    nl = knn(build_index(EmbeddingStore(vecs)), vecs[11], 5)
    assert nl.entries[0][0] == 11
    assert nl.entries[0][1] == pytest.approx(1.0, abs=1e-6)


def test_k_larger_than_store():
    vecs = np.random.default_rng(1).normal(size=(6, 5))
    nl = knn(build_index(EmbeddingStore(vecs)), vecs[0], 50, exclude={2})
    assert sorted(nl.indices) == [0, 1, 3, 4, 5]
    sims = [s for _, s in nl.entries]
    assert sims == sorted(sims, reverse=True)


def test_dimension_mismatch():
    index = build_index(EmbeddingStore(np.ones((3, 4))))
    with pytest.raises(DimMismatch):
        knn(index, np.ones(5), 2)


def test_matches_brute_force_20():
    rng = np.random.default_rng(5)
    store = EmbeddingStore(rng.normal(size=(20, 16)))
    q = rng.normal(size=16)
    got = knn(build_index(store), q, 5)
    want = brute_knn(store.vectors, q, 5)
    assert got.indices == [i for i, _ in want]
    np.testing.assert_allclose([s for _, s in got.entries], [s for _, s in want], atol=1e-12)


def test_exact_1000_matches_brute_force():
    rng = np.random.default_rng(6)
    store = EmbeddingStore(rng.normal(size=(1000, 24)))
    index = build_index(store)
    for q in rng.normal(size=(5, 24)):
        assert knn(index, q, 50).indices == [i for i, _ in brute_knn(store.vectors, q, 50)]


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 400), st.integers(2, 12), st.integers(1, 60), st.integers(0, 2**31))
def test_exact_knn_property(n, dim, k, seed):
    rng = np.random.default_rng(seed)
    store = EmbeddingStore(rng.normal(size=(n, dim)))
    exclude = set(rng.choice(n, size=min(n, 3), replace=False).tolist())
    q = rng.normal(size=dim)
    got = knn(build_index(store), q, k, exclude)
    assert got.indices == [i for i, _ in brute_knn(store.vectors, q, k, exclude)]


def test_exact_knn_5000():
    rng = np.random.default_rng(8)
    store = EmbeddingStore(rng.normal(size=(5000, 16)))
    q = rng.normal(size=16)
    assert knn(build_index(store), q, 100).indices == [i for i, _ in brute_knn(store.vectors, q, 100)]


def test_ivf_recall_1000():
    rng = np.random.default_rng(9)
    store = EmbeddingStore(rng.normal(size=(1000, 32)))
    exact, approx = build_index(store), build_index(store, approximate=True, seed=0)
    assert isinstance(approx, IVFIndex)
    queries = rng.normal(size=(50, 32))
    hits = sum(len(set(knn(exact, q, 100).indices) & set(knn(approx, q, 100).indices)) for q in queries)
    assert hits / (100 * len(queries)) >= 0.95


def test_params_defaults_and_validation():
    p = RetrievalParams()
    assert (p.k, p.k_prime, p.bleu_order) == (100, 5, 4)
    with pytest.raises(ConfigError):
        RetrievalParams(k=3, k_prime=5)
    with pytest.raises(ConfigError):
        RetrievalParams(bleu_order=2)


def test_self_and_duplicates_excluded():
    corpus = Corpus.from_lines(["a", "b", "c"], ["x y z", "x y z", "x y w"])
    index = build_index(embed_corpus(corpus, 32, 0))
    rs = related_sequences(corpus[0], corpus, index)
    assert rs.indices == [2]
    assert rs.sequences == (corpus[2].target,)


def test_related_matches_brute_pipeline(toy50):
    corpus, store = toy50
    index = build_index(store)
    for q in range(len(corpus)):
        got = related_sequences(corpus[q], corpus, index, RetrievalParams(k=10, k_prime=3))
        want = brute_related(corpus, store.vectors, q, k=10, k_prime=3)
        assert got.indices == [i for i, _ in want]
        np.testing.assert_allclose([b for _, b in got.members], [b for _, b in want], atol=1e-12)
        got = related_sequences(corpus[q], corpus, index)
        assert got.indices == [i for i, _ in brute_related(corpus, store.vectors, q)]


def test_precompute_single_example():
    corpus = Corpus.from_lines(["a"], ["x"])
    rel = precompute_related(corpus, build_index(embed_corpus(corpus, 16, 0)))
    assert len(rel[0]) == 0


def test_precompute_deterministic_file(toy50, tmp_path):
    corpus, store = toy50
    for name in ("a", "b"):
        write_related(precompute_related(corpus, build_index(store)), tmp_path / f"{name}.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    first = json.loads((tmp_path / "a.jsonl").read_text().splitlines()[0])
    assert set(first) == {"query", "members"} and set(first["members"][0]) == {"idx", "bleu"}
    back = read_related(tmp_path / "a.jsonl")
    assert back[3].members == precompute_related(corpus, build_index(store))[3].members


def test_members_beat_the_rest_of_the_neighbourhood(toy50):
    corpus, store = toy50
    params = RetrievalParams(k=12, k_prime=5)
    related, neighbors = precompute_related(corpus, build_index(store), params, return_neighbors=True)
    for q, rs in related.items():
        nbrs = neighbors[q].indices
        assert set(rs.indices) <= set(nbrs)
        scores = sorted((brute_sentence_bleu(corpus[i].target, corpus[q].target) for i in nbrs), reverse=True)
        if len(scores) > params.k_prime:
            assert all(b >= scores[params.k_prime] - 1e-12 for _, b in rs.members)
        assert all(corpus[i].target != corpus[q].target for i in rs.indices)


def test_enlarging_k_keeps_members_still_in_top():
    corpus = toy_corpus(60, 11, n_words=8)
    store = embed_corpus(corpus, 64, 17)
    index = build_index(store)
    for q in range(0, 60, 3):
        small = related_sequences(corpus[q], corpus, index, RetrievalParams(k=8, k_prime=4))
        large = related_sequences(corpus[q], corpus, index, RetrievalParams(k=20, k_prime=4))
        large_brute = brute_related(corpus, store.vectors, q, k=20, k_prime=4)
        assert large.indices == [i for i, _ in large_brute]
        for i in small.indices:
            if i in [j for j, _ in large_brute]:
                assert i in large.indices


def test_bleu_direction_flag():
    corpus = Corpus.from_lines(["a", "b"], ["x y z w", "x y"])
    index = build_index(embed_corpus(corpus, 32, 0))
    fwd = related_sequences(corpus[0], corpus, index, RetrievalParams(k=5, k_prime=1))
    rev = related_sequences(corpus[0], corpus, index, RetrievalParams(k=5, k_prime=1, bleu_direction="target"))
    assert fwd.members[0][1] == pytest.approx(brute_sentence_bleu(corpus[1].target, corpus[0].target))
    assert rev.members[0][1] == pytest.approx(brute_sentence_bleu(corpus[0].target, corpus[1].target))


def test_estimator(toy50):
    corpus, store = toy50
    est = SemanticRetriever(k=10, k_prime=3)
    assert est.get_params()["k"] == 10
    out = est.fit(store, corpus).transform([0, 1])
    assert [r.query_index for r in out] == [0, 1]
    direct = related_sequences(corpus[1], corpus, build_index(store), RetrievalParams(10, 3))
    assert out[1] == direct
