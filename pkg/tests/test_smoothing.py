import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqsmooth.embedding import embed_corpus
from seqsmooth.exceptions import ConfigError, InvalidAlpha, InvalidSwapCount, MissingRelatedSet
from seqsmooth.retrieval import RetrievalParams, build_index, precompute_related, read_related, write_related
from seqsmooth.smoothing import (DEFAULT_ALPHA, SmoothingStrategy, build_related, default_swap_count,
                                 random_swap_augment, resolve_related_map, token_uniform_target,
                                 within_batch_related)
from seqsmooth.text import Corpus, ParallelExample


def test_token_uniform_alpha_zero_is_one_hot():
    np.testing.assert_array_equal(token_uniform_target(2, 0.0, 5), np.eye(5)[2])


def test_token_uniform_worked_example():
    np.testing.assert_allclose(token_uniform_target(2, 0.1, 4), [0.025, 0.025, 0.925, 0.025], atol=1e-15)


@given(st.floats(0, 0.999), st.integers(1, 200), st.data())
def test_token_uniform_is_a_distribution(alpha, size, data):
    true_id = data.draw(st.integers(0, size - 1))
    q = token_uniform_target(true_id, alpha, size)
    assert (q >= 0).all()
    assert abs(q.sum() - 1) <= 1e-9
    if alpha < 1 - 1 / size:
        assert int(np.argmax(q)) == true_id


def test_token_uniform_rejects_alpha_one():
    with pytest.raises(InvalidAlpha):
        token_uniform_target(0, 1.0, 3)


def _batch(targets):
    return [ParallelExample((5,), tuple(t), i) for i, t in enumerate(targets)]


def test_within_batch_cardinality():
    assert len(within_batch_related(_batch([(4, 5)]), 0)) == 0
    batch = _batch([(4, 5), (4, 6), (7, 8), (9,)])
    rs = within_batch_related(batch, 1)
    assert rs.indices == [0, 2, 3]
    # zero-overlap batchmates stay in
    assert (7, 8) in rs.sequences


def test_swap_zero_is_identity():
    assert random_swap_augment((4, 5, 6), 0, None, 3) == (4, 5, 6)


@given(st.lists(st.integers(4, 30), min_size=1, max_size=15), st.data(), st.integers(0, 2**32))
def test_swap_preserves_length_and_draws_from_y(y, data, seed):
    n = data.draw(st.integers(0, len(y)))
    out = random_swap_augment(y, n, None, seed)
    assert len(out) == len(y)
    assert set(out) <= set(y)
    assert sum(a != b for a, b in zip(out, y)) <= n


def test_swap_golden_value():
    y = (4, 5, 6, 7)
    out = random_swap_augment(y, 1, None, 1234)
    assert out == (4, 5, 6, 6)
    assert sum(a != b for a, b in zip(out, y)) == 1
    assert random_swap_augment((4, 5, 6, 7, 8, 9, 10, 11), 3, None, 99) == (4, 5, 6, 11, 8, 11, 7, 11)


def test_swap_count_too_large():
    with pytest.raises(InvalidSwapCount):
        random_swap_augment((4, 5), 3, None, 0)


def test_swap_pool_alternative():
    out = random_swap_augment((4, 5, 6), 3, None, 0, pool=[9])
    assert out == (9, 9, 9)


def test_default_swap_count():
    assert default_swap_count(3) == 1
    assert default_swap_count(20) == 2


def test_default_alphas():
    assert DEFAULT_ALPHA == {"none": 0.0, "token-ls": 0.1, "batch-ls": 0.001, "random-swap": 0.01, "semantic": 0.1}


def test_strategy_validation():
    with pytest.raises(ConfigError):
        SmoothingStrategy("label-magic")
    with pytest.raises(InvalidAlpha):
        SmoothingStrategy("semantic", -0.1)


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(3)
    lines = [" ".join(f"w{t}" for t in rng.integers(7, size=rng.integers(3, 7))) for _ in range(50)]
    corpus = Corpus.from_lines(lines, lines)
    related = precompute_related(corpus, build_index(embed_corpus(corpus, 64, 17)), RetrievalParams())
    return corpus, related


@pytest.mark.parametrize("variant", ["none", "token-ls"])
def test_no_sequence_level_related(toy, variant):
    corpus, _ = toy
    assert len(build_related(SmoothingStrategy(variant, 0.1), corpus[0], corpus.examples[:4])) == 0


def test_random_swap_strategy(toy):
    corpus, _ = toy
    strat = SmoothingStrategy("random-swap", 0.01, k_prime=5, seed=4)
    rs = build_related(strat, corpus[3], corpus.examples[:8], epoch=2)
    assert len(rs.sequences) == 5
    assert all(len(s) == len(corpus[3].target) for s in rs.sequences)
    assert rs == build_related(strat, corpus[3], corpus.examples[:8], epoch=2)
    assert rs.sequences == build_related(strat, corpus[3], corpus.examples[:8], epoch=2).sequences
    assert rs.sequences != build_related(strat, corpus[3], corpus.examples[:8], epoch=3).sequences


def test_semantic_matches_retrieval(toy, tmp_path):
    corpus, related = toy
    write_related(related, tmp_path / "r.jsonl")
    loaded = resolve_related_map(read_related(tmp_path / "r.jsonl"), corpus)
    strat = SmoothingStrategy("semantic", 0.1)
    targets = set(corpus.targets)
    for ex in corpus.examples:
        rs = build_related(strat, ex, (), loaded, corpus)
        assert rs == related[ex.corpus_index]
        assert rs.sequences == related[ex.corpus_index].sequences
        assert all(s in targets and s != ex.target for s in rs.sequences)


def test_semantic_resolves_sequences_lazily(toy):
    corpus, related = toy
    bare = {q: type(r)(q, r.members) for q, r in related.items()}
    rs = build_related(SmoothingStrategy("semantic", 0.1), corpus[5], (), bare, corpus)
    assert rs.sequences == related[5].sequences


def test_semantic_missing_entry(toy):
    corpus, related = toy
    with pytest.raises(MissingRelatedSet) as err:
        build_related(SmoothingStrategy("semantic", 0.1), corpus[1], (), {}, corpus)
    assert err.value.corpus_index == 1


def test_batch_strategy_uses_batch(toy):
    corpus, _ = toy
    batch = corpus.examples[10:14]
    rs = build_related(SmoothingStrategy("batch-ls", 0.001), batch[2], batch)
    assert rs.indices == [10, 11, 13]
