"""Stage orchestration for the full experiment: ingest, embed, neighbors, train,
evaluate and report, with content-hash caching of every stage output."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .bleu import BleuConfig, corpus_bleu, sentence_bleu_list
from .embedding import embed_corpus, load_embeddings, write_embeddings
from .exceptions import ConfigError, DimMismatch, StageError
from .model import greedy_decode_batch, load_checkpoint, save_checkpoint
from .retrieval import RetrievalParams, build_index, precompute_related, read_related, write_related
from .smoothing import DEFAULT_ALPHA, REPORT_LABELS, SEMANTIC, VARIANTS, SmoothingStrategy, resolve_related_map
from .text import Corpus, detokenize, load_corpus, read_corpus, save_corpus
from .training import TrainingConfig, _decode_len, train, write_metrics

log = logging.getLogger(__name__)

ABLATION_AXES = {"bleu_order": (3, 4, 5), "k_prime": (3, 5, 10)}


@dataclass
class PipelineConfig:
    train_src: str = ""
    train_tgt: str = ""
    dev_src: str = ""
    dev_tgt: str = ""
    workdir: str = "work"
    seed: Optional[int] = None
    max_vocab: Optional[int] = None
    # optional externally computed target embeddings (SEQE), replacing the hashing embedder
    embeddings: Optional[str] = None
    dim: int = 256
    embed_seed: int = 17
    k: int = 100
    k_prime: int = 5
    bleu_order: int = 4
    bleu_direction: str = "neighbor"
    approximate: bool = False
    strategies: Tuple[str, ...] = VARIANTS
    alpha_token_ls: float = DEFAULT_ALPHA["token-ls"]
    alpha_batch_ls: float = DEFAULT_ALPHA["batch-ls"]
    alpha_random_swap: float = DEFAULT_ALPHA["random-swap"]
    alpha_semantic: float = DEFAULT_ALPHA["semantic"]
    swap_count: Optional[int] = None
    token_ls: Optional[float] = None
    epochs: int = 10
    lr: float = 0.2
    lr_decay: float = 1.0
    batch_size: int = 8
    emb_dim: int = 32
    hidden_dim: int = 64

    def __post_init__(self):
        if isinstance(self.strategies, str):
            self.strategies = tuple(s.strip() for s in self.strategies.split(",") if s.strip())
        self.strategies = tuple(self.strategies)
        bad = [s for s in self.strategies if s not in VARIANTS]
        if bad:
            raise ConfigError(f"unknown strategies {bad}; choose from {VARIANTS}")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        self.retrieval_params()

    def validate(self, need_inputs: bool = True) -> None:
        if self.seed is None:
            raise ConfigError("a global --seed is required")
        if need_inputs:
            for name in ("train_src", "train_tgt", "dev_src", "dev_tgt"):
                path = getattr(self, name)
                if not path:
                    raise ConfigError(f"missing required setting {name}")
                if not Path(path).is_file():
                    raise ConfigError(f"{name}: no such file {path}")
            if self.embeddings and not Path(self.embeddings).is_file():
                raise ConfigError(f"embeddings: no such file {self.embeddings}")

    def retrieval_params(self) -> RetrievalParams:
        return RetrievalParams(self.k, self.k_prime, self.bleu_order, self.bleu_direction)

    def alpha(self, variant: str) -> float:
        if variant == "none":
            return 0.0
        return getattr(self, "alpha_" + variant.replace("-", "_"))

    def strategy(self, variant: str) -> SmoothingStrategy:
        return SmoothingStrategy(variant, self.alpha(variant), self.swap_count, k_prime=self.k_prime,
                                 retrieval=self.retrieval_params(), seed=self.seed)

    def training_config(self, variant: str) -> TrainingConfig:
        return TrainingConfig(self.strategy(variant), self.lr, self.batch_size, self.epochs, self.seed,
                              token_ls=self.token_ls, emb_dim=self.emb_dim, hidden_dim=self.hidden_dim,
                              lr_decay=self.lr_decay)


# -- flat key = value config files --------------------------------------------

def _field_types() -> Dict[str, str]:
    return {f.name: str(f.type) for f in fields(PipelineConfig)}


def _parse_value(name: str, raw: str):
    kind = _field_types()[name]
    raw = raw.strip()
    if "Optional" in kind and raw.lower() in ("", "none"):
        return None
    if "bool" in kind:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if "Tuple" in kind:
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            return float(raw)
    except ValueError as err:
        raise ConfigError(f"{name}: {err}") from err
    return raw


def read_config(path) -> Dict[str, object]:
    """Parse a ``key = value`` file; keys are the long CLI flag names."""
    known = _field_types()
    values: Dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(map(str, v))
    return repr(v) if isinstance(v, float) else str(v)


def write_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f in fields(PipelineConfig):
            fh.write(f"{f.name.replace('_', '-')} = {_format_value(getattr(cfg, f.name))}\n")


# -- caching ------------------------------------------------------------------

def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stage_key(name: str, inputs: Sequence, params: Dict) -> str:
    h = hashlib.sha256(name.encode())
    h.update(json.dumps(params, sort_keys=True, default=str).encode())
    for p in inputs:
        h.update(_digest_file(p).encode())
    return h.hexdigest()


def _sidecar(path) -> Path:
    return Path(str(path) + ".hash")


def _is_fresh(outputs: Sequence[Path], key: str) -> bool:
    try:
        return all(p.is_file() for p in outputs) and _sidecar(outputs[0]).read_text().strip() == key
    except (OSError, UnicodeDecodeError):
        # unreadable or missing sidecar: treat the cache as stale
        return False


@dataclass
class StageLog:
    ran: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)


def run_stage(name: str, outputs: Sequence, inputs: Sequence, params: Dict, fn: Callable[[], None],
              stages: StageLog, force: bool = False) -> None:
    outputs = [Path(p) for p in outputs]
    try:
        key = stage_key(name, inputs, params)
    except OSError as err:
        raise StageError(name, err) from err
    if not force and _is_fresh(outputs, key):
        log.info("stage %s: up to date", name)
        stages.skipped.append(name)
        return
    log.info("stage %s: running", name)
    for p in outputs:
        p.parent.mkdir(parents=True, exist_ok=True)
    _sidecar(outputs[0]).unlink(missing_ok=True)
    try:
        fn()
    except StageError:
        raise
    except Exception as err:
        raise StageError(name, err) from err
    _sidecar(outputs[0]).write_text(key + "\n")
    stages.ran.append(name)


# -- stage bodies -------------------------------------------------------------

def ingest(src, tgt, out, max_vocab=None, vocab_from=None) -> Corpus:
    vocabs = None
    if vocab_from is not None:
        ref = read_corpus(vocab_from)
        vocabs = (ref.src_vocab, ref.tgt_vocab)
    corpus = load_corpus(src, tgt, max_vocab, vocabs)
    save_corpus(corpus, out)
    return corpus


def embed(corpus_path, out, dim=256, seed=17) -> None:
    write_embeddings(embed_corpus(read_corpus(corpus_path), dim, seed), out)


def neighbors(corpus_path, emb_path, out, params: RetrievalParams, approximate=False,
              n_lists=None, n_probe=None, seed=0) -> None:
    corpus = read_corpus(corpus_path)
    store = load_embeddings(emb_path)
    if store.count != len(corpus):
        raise DimMismatch(f"{emb_path} holds {store.count} vectors but the corpus has {len(corpus)} targets")
    kw = dict(n_lists=n_lists, n_probe=n_probe, seed=seed) if approximate else {}
    index = build_index(store, approximate, **kw)
    write_related(precompute_related(corpus, index, params), out)


def train_model(corpus_path, out, config: TrainingConfig, related_path=None, dev_path=None,
                metrics_path=None) -> List[Dict]:
    corpus = read_corpus(corpus_path)
    related = None
    if related_path is not None and config.strategy.variant == SEMANTIC:
        related = resolve_related_map(read_related(related_path), corpus)
    dev = read_corpus(dev_path) if dev_path else None
    params, history = train(config, corpus, related, dev)
    save_checkpoint(params, out)
    if metrics_path is not None:
        write_metrics(history, metrics_path)
    return history


def evaluate_model(model_path, corpus_path, out=None) -> Dict:
    params = load_checkpoint(model_path)
    corpus = read_corpus(corpus_path)
    hyps = greedy_decode_batch(params, corpus.sources, _decode_len(corpus))
    refs = corpus.targets
    result = {f"bleu{n}": corpus_bleu(hyps, refs, BleuConfig(n)) for n in (3, 4, 5)}
    result["seq_accuracy"] = sum(h == tuple(r) for h, r in zip(hyps, refs)) / len(refs)
    result["sentence_bleu4"] = sentence_bleu_list(hyps, refs, BleuConfig(4))
    result["hypotheses"] = [detokenize(h, corpus.tgt_vocab) for h in hyps]
    if out is not None:
        Path(out).write_text(json.dumps(result) + "\n", encoding="utf-8")
    return result


# -- pipeline -----------------------------------------------------------------

@dataclass
class Report:
    title: str
    columns: Tuple[str, ...]
    rows: List[Dict]

    def table(self) -> str:
        head = ["Method"] + [c.upper() if c.startswith("bleu") else c for c in self.columns]
        body = [[r["label"]] + [_cell(c, r[c]) for c in self.columns] for r in self.rows]
        widths = [max(len(x) for x in col) for col in zip(head, *body)]

        def fmt(cells):
            return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))

        lines = [self.title, fmt(head), "  ".join("-" * w for w in widths)] + [fmt(b) for b in body]
        return "\n".join(lines) + "\n"

    def jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.rows)

    def write(self, stem) -> Tuple[Path, Path]:
        stem = Path(stem)
        txt, js = stem.with_suffix(".txt"), stem.with_suffix(".jsonl")
        txt.write_text(self.table(), encoding="utf-8")
        js.write_text(self.jsonl(), encoding="utf-8")
        return txt, js


def _cell(column: str, v) -> str:
    if column.startswith("bleu"):
        return f"{100 * v:.2f}"
    return f"{v:g}" if isinstance(v, float) else str(v)


@dataclass
class Workspace:
    cfg: PipelineConfig
    stages: StageLog = field(default_factory=StageLog)
    force: bool = False

    def stage(self, name, outputs, inputs, params, fn) -> None:
        run_stage(name, outputs, inputs, params, fn, self.stages, self.force)

    @property
    def root(self) -> Path:
        return Path(self.cfg.workdir)

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def prepare(self) -> None:
        cfg = self.cfg
        train_c, dev_c, emb = self.path("train.seqc"), self.path("dev.seqc"), self.path("train.seqe")
        self.stage("ingest", [train_c], [cfg.train_src, cfg.train_tgt], {"max_vocab": cfg.max_vocab},
                  lambda: ingest(cfg.train_src, cfg.train_tgt, train_c, cfg.max_vocab))
        self.stage("ingest-dev", [dev_c], [cfg.dev_src, cfg.dev_tgt, train_c], {},
                  lambda: ingest(cfg.dev_src, cfg.dev_tgt, dev_c, vocab_from=train_c))
        if cfg.embeddings:
            self.stage("embed", [emb], [cfg.embeddings, train_c], {"external": True},
                      lambda: emb.write_bytes(Path(cfg.embeddings).read_bytes()))
        else:
            self.stage("embed", [emb], [train_c], {"dim": cfg.dim, "seed": cfg.embed_seed},
                      lambda: embed(train_c, emb, cfg.dim, cfg.embed_seed))

    def related(self, params: RetrievalParams) -> Path:
        tag = f"k{params.k}-kp{params.k_prime}-b{params.bleu_order}-{params.bleu_direction}"
        if self.cfg.approximate:
            tag += "-ivf"
        out = self.path("related", f"{tag}.jsonl")
        train_c, emb = self.path("train.seqc"), self.path("train.seqe")
        self.stage(f"neighbors[{tag}]", [out], [train_c, emb],
                  {**asdict(params), "approximate": self.cfg.approximate, "seed": self.cfg.seed},
                  lambda: neighbors(train_c, emb, out, params, self.cfg.approximate, seed=self.cfg.seed))
        return out

    def cell(self, cfg: PipelineConfig, variant: str) -> Dict:
        """Train and evaluate one strategy; returns the evaluation record."""
        tcfg = cfg.training_config(variant)
        train_c, dev_c = self.path("train.seqc"), self.path("dev.seqc")
        related = self.related(cfg.retrieval_params()) if variant == SEMANTIC else None
        params = {"training": asdict(tcfg)}
        name = variant
        if variant == SEMANTIC:
            r = cfg.retrieval_params()
            name = f"{variant}-k{r.k}-kp{r.k_prime}-b{r.bleu_order}-{r.bleu_direction}"
        model = self.path("models", f"{name}.seqm")
        metrics = self.path("metrics", f"{name}.jsonl")
        inputs = [train_c, dev_c] + ([related] if related else [])
        self.stage(f"train[{name}]", [model, metrics], inputs, params,
                  lambda: train_model(train_c, model, tcfg, related, dev_c, metrics))
        out = self.path("eval", f"{name}.json")
        self.stage(f"evaluate[{name}]", [out], [model, dev_c], {},
                  lambda: evaluate_model(model, dev_c, out))
        return json.loads(out.read_text(encoding="utf-8"))


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> Tuple[Report, StageLog]:
    cfg.validate()
    ws = Workspace(cfg, force=force)
    ws.root.mkdir(parents=True, exist_ok=True)
    ws.prepare()
    rows = []
    for variant in cfg.strategies:
        res = ws.cell(cfg, variant)
        rows.append({"strategy": variant, "label": REPORT_LABELS[variant], "alpha": cfg.alpha(variant),
                     "bleu3": res["bleu3"], "bleu4": res["bleu4"], "bleu5": res["bleu5"],
                     "seq_accuracy": res["seq_accuracy"]})
    report = Report("dev BLEU (x100) per smoothing strategy", ("alpha", "bleu4"), rows)
    report.write(ws.path("report"))
    return report, ws.stages


def ablation_label(axis: str, value: int) -> str:
    if axis == "bleu_order":
        return f"BERT+BLEU{value}"
    return f"{value} neighbors"


def run_ablation(cfg: PipelineConfig, axis: str, values: Optional[Sequence[int]] = None,
                 force: bool = False) -> Tuple[Report, StageLog]:
    if axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {sorted(ABLATION_AXES)}")
    values = tuple(ABLATION_AXES[axis] if values is None else values)
    if not values:
        raise ConfigError("ablation needs at least one axis value")
    cells = [replace(cfg, **{axis: int(v)}) for v in values]  # validates every cell up front
    cfg.validate()
    ws = Workspace(cfg, force=force)
    ws.root.mkdir(parents=True, exist_ok=True)
    ws.prepare()
    rows = []
    for v, cell_cfg in zip(values, cells):
        res = ws.cell(cell_cfg, SEMANTIC)
        rows.append({"axis": axis, "value": int(v), "label": ablation_label(axis, int(v)),
                     "alpha": cfg.alpha_semantic, "bleu3": res["bleu3"], "bleu4": res["bleu4"],
                     "bleu5": res["bleu5"], "seq_accuracy": res["seq_accuracy"]})
    columns = ("bleu3", "bleu4", "bleu5") if axis == "bleu_order" else ("bleu4",)
    title = ("dev BLEU (x100) by n-gram order of the reranking BLEU" if axis == "bleu_order"
             else "dev BLEU4 (x100) by number of related targets")
    report = Report(title, columns, rows)
    report.write(ws.path(f"ablate-{axis}"))
    return report, ws.stages
