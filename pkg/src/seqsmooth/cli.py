"""Command-line entry point: ``seqsmooth <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import pipeline as pl
from .exceptions import SeqSmoothError, StageError
from .retrieval import RetrievalParams
from .smoothing import DEFAULT_ALPHA, VARIANTS, SmoothingStrategy
from .training import TrainingConfig

log = logging.getLogger("seqsmooth")


def _add_training_flags(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--lr-decay", type=float, help="per-epoch learning-rate factor")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--emb-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--swap-count", type=int)
    p.add_argument("--token-ls", type=float, help="token-level smoothing on top of the strategy")


def _add_retrieval_flags(p):
    p.add_argument("--k", type=int)
    p.add_argument("--k-prime", type=int)
    p.add_argument("--bleu-order", type=int, choices=(3, 4, 5))
    p.add_argument("--bleu-direction", choices=("neighbor", "target"))
    p.add_argument("--approximate", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqsmooth", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="tokenize a parallel corpus into a binary corpus file")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--max-vocab", type=int)
    p.add_argument("--vocab-from", help="reuse the vocabularies of an existing corpus file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("embed", help="embed corpus targets with the hashing embedder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--seed", type=int, default=17)

    p = sub.add_parser("neighbors", help="retrieve and BLEU-rerank related targets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--k-prime", type=int, default=5)
    p.add_argument("--bleu-order", type=int, default=4, choices=(3, 4, 5))
    p.add_argument("--bleu-direction", default="neighbor", choices=("neighbor", "target"))
    p.add_argument("--approximate", action="store_true")
    p.add_argument("--n-lists", type=int)
    p.add_argument("--n-probe", type=int)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model with one smoothing strategy")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dev")
    p.add_argument("--strategy", default="none", choices=VARIANTS)
    p.add_argument("--alpha", type=float, help="defaults to the strategy's usual value")
    p.add_argument("--related", help="related-set file (semantic strategy)")
    p.add_argument("--k-prime", type=int, default=5, help="augmentations per example (random-swap)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--lr-decay", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--emb-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--swap-count", type=int)
    p.add_argument("--token-ls", type=float)

    p = sub.add_parser("evaluate", help="greedy-decode a corpus and score it")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")

    for name, helptext in (("pipeline", "run every stage for all strategies and write a report"),
                           ("ablate", "sweep a retrieval setting for the semantic strategy")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--seed", type=int, required=True, help="global seed (mandatory)")
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.add_argument("--train-src")
        p.add_argument("--train-tgt")
        p.add_argument("--dev-src")
        p.add_argument("--dev-tgt")
        p.add_argument("--workdir")
        p.add_argument("--max-vocab", type=int)
        p.add_argument("--embeddings", help="precomputed target embeddings to use instead of hashing")
        p.add_argument("--dim", type=int)
        p.add_argument("--embed-seed", type=int)
        p.add_argument("--strategies", help="comma-separated subset of " + ",".join(VARIANTS))
        for v in VARIANTS[1:]:
            p.add_argument(f"--alpha-{v}", type=float)
        _add_retrieval_flags(p)
        _add_training_flags(p)
        p.add_argument("--force", action="store_true", help="ignore cached stage outputs")
        if name == "ablate":
            p.add_argument("--axis", required=True, choices=sorted(pl.ABLATION_AXES))
            p.add_argument("--values", help="comma-separated axis values")

    p = sub.add_parser("toy", help="write a seeded synthetic corpus")
    p.add_argument("--task", choices=("copy", "synonym"), default="synonym")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    return parser


def _pipeline_config(args) -> pl.PipelineConfig:
    values = pl.read_config(args.config) if args.config else {}
    names = {f.name for f in fields(pl.PipelineConfig)}
    for key, val in vars(args).items():
        if key in names and val is not None:
            values[key] = val
    return pl.PipelineConfig(**values)


def _cmd_ingest(args):
    corpus = pl.ingest(args.src, args.tgt, args.out, args.max_vocab, args.vocab_from)
    log.info("wrote %d examples to %s", len(corpus), args.out)


def _cmd_embed(args):
    pl.embed(args.corpus, args.out, args.dim, args.seed)


def _cmd_neighbors(args):
    params = RetrievalParams(args.k, args.k_prime, args.bleu_order, args.bleu_direction)
    pl.neighbors(args.corpus, args.emb, args.out, params, args.approximate, args.n_lists, args.n_probe, args.seed)


def _cmd_train(args):
    alpha = DEFAULT_ALPHA[args.strategy] if args.alpha is None else args.alpha
    if args.strategy == "semantic" and not args.related:
        raise SeqSmoothError("--related is required for the semantic strategy")
    strat = SmoothingStrategy(args.strategy, alpha, args.swap_count, k_prime=args.k_prime, seed=args.seed)
    cfg = TrainingConfig(strat, args.lr, args.batch_size, args.epochs, args.seed, token_ls=args.token_ls,
                         emb_dim=args.emb_dim, hidden_dim=args.hidden_dim, lr_decay=args.lr_decay)
    history = pl.train_model(args.corpus, args.out, cfg, args.related, args.dev, args.metrics)
    print(json.dumps(history[-1]))


def _cmd_evaluate(args):
    res = pl.evaluate_model(args.model, args.corpus, args.out)
    print(json.dumps({k: res[k] for k in ("bleu3", "bleu4", "bleu5", "seq_accuracy")}))


def _cmd_pipeline(args):
    cfg = _pipeline_config(args)
    if args.command == "ablate":
        values = [int(v) for v in args.values.split(",")] if args.values else None
        report, stages = pl.run_ablation(cfg, args.axis, values, force=args.force)
    else:
        report, stages = pl.run_pipeline(cfg, force=args.force)
    log.info("stages run: %d, skipped: %d", len(stages.ran), len(stages.skipped))
    sys.stdout.write(report.table())


def _cmd_toy(args):
    from .embedding import write_embeddings
    from .synthetic import copy_task, synonym_task
    from .text import detokenize

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.task == "copy":
        train, dev = copy_task(seed=args.seed)
    else:
        task = synonym_task(seed=args.seed)
        train, dev = task.train, task.dev
        write_embeddings(task.embed_targets(), out / "train.seqe")
    for name, corpus in (("train", train), ("dev", dev)):
        for side, vocab, seqs in (("src", corpus.src_vocab, corpus.sources), ("tgt", corpus.tgt_vocab, corpus.targets)):
            lines = [detokenize(s, vocab) for s in seqs]
            (out / f"{name}.{side}").write_text("\n".join(lines) + "\n", encoding="utf-8")


COMMANDS = {
    "ingest": _cmd_ingest,
    "embed": _cmd_embed,
    "neighbors": _cmd_neighbors,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "pipeline": _cmd_pipeline,
    "ablate": _cmd_pipeline,
    "toy": _cmd_toy,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except StageError as err:
        print(f"seqsmooth: error: {err}", file=sys.stderr)
        return 1
    except (SeqSmoothError, OSError) as err:
        print(f"seqsmooth: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
