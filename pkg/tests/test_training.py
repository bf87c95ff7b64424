import numpy as np
import pytest
from sklearn.base import clone

from oracles import brute_corpus_bleu
from seqsmooth.exceptions import ConfigError, MissingRelatedSet
from seqsmooth.model import init_params
from seqsmooth.retrieval import RelatedSet
from seqsmooth.smoothing import SmoothingStrategy
from seqsmooth.synthetic import copy_task
from seqsmooth.text import Corpus
from seqsmooth.training import (SmoothedSeq2Seq, TrainingConfig, batch_rows, evaluate, read_metrics, train,
                                write_metrics)

COPY = dict(learning_rate=0.2, batch_size=4, emb_dim=16, hidden_dim=32, lr_decay=0.93, epochs=30)


@pytest.fixture(scope="module")
def split():
    return copy_task(seed=0)


@pytest.fixture(scope="module")
def copy_run(split):
    train_c, dev = split
    cfg = TrainingConfig(SmoothingStrategy("none"), seed=0, **COPY)
    return train(cfg, train_c, dev=dev)


def test_zero_learning_rate_keeps_params(split):
    train_c, _ = split
    cfg = TrainingConfig(SmoothingStrategy("batch-ls", 0.1), learning_rate=0.0, epochs=1, emb_dim=4, hidden_dim=5)
    init = init_params(len(train_c.src_vocab), len(train_c.tgt_vocab), 4, 5, seed=0)
    params, _ = train(cfg, train_c, init=init)
    assert all(np.array_equal(a, b) for a, b in zip(params.arrays(), init.arrays()))


def test_copy_task_learns(copy_run):
    params, history = copy_run
    losses = [r["train_loss"] for r in history]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert history[-1]["dev_seq_acc"] >= 0.9
    assert len(history) == 30


def test_copy_model_reproduces_training_inputs(copy_run, split):
    params, _ = copy_run
    train_c, _ = split
    res = evaluate(params, Corpus(train_c.examples[:40], train_c.src_vocab, train_c.tgt_vocab))
    assert res.seq_accuracy >= 0.9


def test_metrics_are_deterministic(split, tmp_path):
    train_c, dev = split
    cfg = TrainingConfig(SmoothingStrategy("random-swap", 0.01), seed=4, epochs=2, emb_dim=8, hidden_dim=8)
    for name in ("a", "b"):
        _, hist = train(cfg, train_c, dev=dev)
        write_metrics(hist, tmp_path / f"{name}.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    rec = read_metrics(tmp_path / "a.jsonl")[0]
    assert {"epoch", "train_loss", "dev_bleu4"} <= set(rec)


def test_semantic_requires_related_map(split):
    train_c, _ = split
    cfg = TrainingConfig(SmoothingStrategy("semantic", 0.1), epochs=1)
    with pytest.raises(MissingRelatedSet):
        train(cfg, train_c)
    partial = {ex.corpus_index: RelatedSet(ex.corpus_index) for ex in train_c.examples[:-1]}
    with pytest.raises(MissingRelatedSet) as err:
        train(cfg, train_c, partial)
    assert err.value.corpus_index == train_c.examples[-1].corpus_index


def test_batch_rows_weights(split):
    train_c, _ = split
    batch = list(train_c.examples[:4])
    rows = batch_rows(TrainingConfig(SmoothingStrategy("batch-ls", 0.3)), batch, 0)
    assert len(rows) == 4 * 4
    assert sum(r.weight for r in rows) == pytest.approx(1.0 + 0.3)
    rows = batch_rows(TrainingConfig(SmoothingStrategy("token-ls", 0.1)), batch, 0)
    assert len(rows) == 4 and all(r.token_ls == 0.1 for r in rows)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainingConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainingConfig(learning_rate=-1.0)
    with pytest.raises(ConfigError):
        TrainingConfig(token_ls=1.0)


def test_evaluate_perfect_and_floor(copy_run, split):
    params, _ = copy_run
    _, dev = split
    res = evaluate(params, dev)
    assert len(res.sentence_bleu) == len(dev)
    # rig the model onto one token that never occurs in the references
    rigged = params.copy()
    rigged.w_out[:] = 0
    rigged.b_out[:] = 0
    rigged.b_out[3] = 20.0  # UNK
    floor = evaluate(rigged, dev)
    assert floor.seq_accuracy == 0
    assert floor.bleu4 == pytest.approx(brute_corpus_bleu(floor.hypotheses, dev.targets), abs=1e-12)
    assert floor.bleu4 < 0.01


def test_evaluate_matches_oracle_on_three_sentences(copy_run, split):
    params, _ = copy_run
    _, dev = split
    small = Corpus(dev.examples[:3], dev.src_vocab, dev.tgt_vocab)
    res = evaluate(params, small)
    assert res.bleu4 == pytest.approx(brute_corpus_bleu(res.hypotheses, small.targets), abs=1e-12)


def test_evaluate_identity_is_one(split, monkeypatch):
    _, dev = split
    monkeypatch.setattr("seqsmooth.training.greedy_decode_batch", lambda p, srcs, n: list(dev.targets))
    res = evaluate(None, dev)
    assert res.bleu4 == 1.0 and res.seq_accuracy == 1.0
    assert all(b == 1.0 for b, r in zip(res.sentence_bleu, dev.targets) if len(r) >= 4)


def test_estimator_interface(split):
    train_c, dev = split
    est = SmoothedSeq2Seq(strategy="batch-ls", alpha=0.001, epochs=1, emb_dim=8, hidden_dim=8, seed=3)
    assert est.get_params()["alpha"] == 0.001
    twin = clone(est).set_params(epochs=2)
    assert twin.epochs == 2 and est.epochs == 1
    est.fit(train_c)
    preds = est.predict(dev)
    assert len(preds) == len(dev)
    assert 0.0 <= est.score(dev) <= 1.0
    with pytest.raises(AttributeError):
        SmoothedSeq2Seq().predict(dev)


def test_estimator_accepts_id_lists():
    X = [(4, 5, 6), (5, 6), (6, 4, 4, 5)]
    est = SmoothedSeq2Seq(epochs=2, emb_dim=4, hidden_dim=4).fit(X, X)
    assert len(est.history_) == 2 and len(est.predict(X)) == 3
