import itertools
import math

import pytest
from hypothesis import given, strategies as st

from oracles import brute_corpus_bleu, brute_sentence_bleu
from seqsmooth.bleu import (BleuConfig, brevity_penalty, corpus_bleu, modified_precision, ngram_counts,
                            sentence_bleu)
from seqsmooth.exceptions import EmptySequence

A, B, C, D, E = 10, 11, 12, 13, 14
seqs = st.lists(st.integers(0, 3), min_size=1, max_size=9)


def test_ngram_counts():
    assert ngram_counts([A, B, A], 1) == {(A,): 2, (B,): 1}
    assert ngram_counts([A, B, A], 3) == {(A, B, A): 1}
    assert not ngram_counts([A, B], 3)


@given(seqs, st.integers(1, 5))
def test_ngram_count_total(seq, n):
    assert sum(ngram_counts(seq, n).values()) == max(0, len(seq) - n + 1)


def test_modified_precision_identity():
    assert modified_precision([A, B, C], [A, B, C], 2) == (2, 2)


def test_modified_precision_clipping():
    the, cat, is_, on, mat = range(5, 10)
    assert modified_precision([the] * 7, [the, cat, is_, on, the, mat], 1) == (2, 7)


def test_modified_precision_disjoint():
    assert modified_precision([A, B, C], [D, E], 1) == (0, 3)
    assert modified_precision([A], [A, B], 2) == (0, 0)


def test_brevity_penalty():
    assert brevity_penalty(10, 10) == 1.0
    assert brevity_penalty(12, 10) == 1.0
    assert brevity_penalty(5, 10) == pytest.approx(math.exp(-1), abs=1e-12)
    assert brevity_penalty(5, 10) == pytest.approx(0.36788, abs=1e-5)


@given(st.integers(1, 50), st.integers(1, 50))
def test_brevity_penalty_monotone(c, r):
    assert brevity_penalty(c, r) <= brevity_penalty(c + 1, r)


def test_identity_scores_one():
    assert sentence_bleu([A, B, C, D], [A, B, C, D]) == pytest.approx(1.0, abs=1e-15)


@given(st.lists(st.integers(0, 20), min_size=5, max_size=12), st.integers(1, 5))
def test_identity_property(y, n):
    assert sentence_bleu(y, y, BleuConfig(n)) == pytest.approx(1.0, abs=1e-12)


def test_worked_example():
    # p1 = 3/4, p2 = 2/3, BP = 1
    got = sentence_bleu([A, B, C, D], [A, B, C, E], BleuConfig(max_n=2, smoothing_epsilon=0.1))
    assert got == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert got == pytest.approx(0.70711, abs=1e-5)


def test_disjoint_below_one_shared_unigram():
    cfg = BleuConfig(4)
    disjoint = sentence_bleu([A, B, C], [D, E, 20], cfg)
    shared = sentence_bleu([A, B, C], [A, E, 20], cfg)
    assert disjoint < shared
    assert disjoint <= cfg.smoothing_epsilon


def test_short_candidate_uses_floor():
    # the 3- and 4-gram totals are zero for a 2-token candidate
    cfg = BleuConfig(4, 0.1)
    got = sentence_bleu([A, B], [A, B], cfg)
    assert got == pytest.approx(math.exp((0 + 0 + 2 * math.log(0.1)) / 4), abs=1e-15)


def test_empty_raises():
    with pytest.raises(EmptySequence):
        sentence_bleu([], [A])
    with pytest.raises(EmptySequence):
        sentence_bleu([A], [])


@pytest.mark.parametrize("max_n", [0, 6])
def test_config_range(max_n):
    with pytest.raises(ValueError):
        BleuConfig(max_n)


@given(seqs, seqs, st.integers(1, 5))
def test_matches_oracle(c, r, n):
    assert sentence_bleu(c, r, BleuConfig(n)) == pytest.approx(brute_sentence_bleu(c, r, n), abs=1e-12)


def test_oracle_small_exhaustive():
    words = [tuple(w) for L in range(1, 4) for w in itertools.product(range(3), repeat=L)]
    for c, r in itertools.product(words, words):
        assert abs(sentence_bleu(c, r) - brute_sentence_bleu(c, r)) <= 1e-12


def test_corpus_bleu_three_sentences():
    cands = [(A, B, C, D), (A, A, B), (C, D, E, A, B)]
    refs = [(A, B, C, E), (A, B, B, B), (C, D, E, A)]
    # hand-aggregated: p1 = (3+2+4)/12, p2 = 6/9, p3 = 3/6, p4 = 1/3; c = 12 >= r = 12
    expected = math.exp((math.log(9 / 12) + math.log(6 / 9) + math.log(3 / 6) + math.log(1 / 3)) / 4)
    assert corpus_bleu(cands, refs) == pytest.approx(expected, abs=1e-12)
    assert corpus_bleu(cands, refs) == pytest.approx(brute_corpus_bleu(cands, refs), abs=1e-12)


def test_corpus_bleu_perfect():
    refs = [(A, B, C, D), (B, C, D, E, A)]
    assert corpus_bleu(refs, refs) == pytest.approx(1.0)
