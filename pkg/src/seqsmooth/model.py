"""A small recurrent encoder-decoder with attention, written directly in numpy.

The forward pass is exact (float64) and the backward pass is hand-derived, so
log-likelihoods, the smoothed loss and its gradient can be checked against
independent computations.

Architecture::

    encoder   h_t = tanh(E_src[x_t] W_enc + h_{t-1} U_enc + b_enc)
    decoder   s_t = tanh(E_tgt[u_t] W_dec + s_{t-1} U_dec + b_dec),  s_{-1} = h_last
    attention a_t = softmax((s_t W_query) . h_j),  c_t = sum_j a_tj h_j
    output    p(. | ...) = softmax([s_t, c_t] W_out + b_out)

where ``u`` is the target shifted right behind BOS. Every target is scored
with a trailing EOS.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import FormatError, TruncatedFile, VocabError
from .text import BOS, EOS, PAD

PARAM_NAMES = ("src_emb", "tgt_emb", "w_enc", "u_enc", "b_enc",
               "w_dec", "u_dec", "b_dec", "w_query", "w_out", "b_out")

CHECKPOINT_MAGIC = b"SEQM"
CHECKPOINT_VERSION = 1
_NEG = -1e30


@dataclass
class ModelParams:
    src_emb: np.ndarray
    tgt_emb: np.ndarray
    w_enc: np.ndarray
    u_enc: np.ndarray
    b_enc: np.ndarray
    w_dec: np.ndarray
    u_dec: np.ndarray
    b_dec: np.ndarray
    w_query: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    @property
    def src_vocab_size(self) -> int:
        return self.src_emb.shape[0]

    @property
    def tgt_vocab_size(self) -> int:
        return self.tgt_emb.shape[0]

    @property
    def emb_dim(self) -> int:
        return self.src_emb.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.u_enc.shape[0]

    def arrays(self) -> List[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    def copy(self) -> "ModelParams":
        return ModelParams(*(a.copy() for a in self.arrays()))

    def zeros_like(self) -> "ModelParams":
        return ModelParams(*(np.zeros_like(a) for a in self.arrays()))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_params(src_vocab_size: int, tgt_vocab_size: int, emb_dim: int = 32,
                hidden_dim: int = 64, seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)

    def unif(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape)

    h, d = hidden_dim, emb_dim
    return ModelParams(
        src_emb=rng.normal(0.0, 0.5, (src_vocab_size, d)),
        tgt_emb=rng.normal(0.0, 0.5, (tgt_vocab_size, d)),
        w_enc=unif((d, h), d),
        u_enc=unif((h, h), h),
        b_enc=np.zeros(h),
        w_dec=unif((d, h), d),
        u_dec=unif((h, h), h),
        b_dec=np.zeros(h),
        w_query=unif((h, h), h),
        w_out=unif((2 * h, tgt_vocab_size), 2 * h),
        b_out=np.zeros(tgt_vocab_size),
    )


@dataclass
class Row:
    """One scored (source, target) pair inside a loss evaluation.

    ``weight`` multiplies the row's negative log-likelihood in the total loss;
    ``token_ls`` > 0 swaps the one-hot step targets for uniformly smoothed ones.
    """

    source: tuple
    target: tuple
    weight: float = 1.0
    token_ls: float = 0.0


def _pad(seqs: Sequence[tuple], length: int, fill: int = PAD) -> np.ndarray:
    out = np.full((len(seqs), length), fill, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def _check_ids(params: ModelParams, rows: Sequence[Row]) -> None:
    vs, vt = params.src_vocab_size, params.tgt_vocab_size
    for r in rows:
        if len(r.source) == 0 or len(r.target) == 0:
            raise VocabError("source and target must be non-empty")
        if min(r.source) < 0 or max(r.source) >= vs:
            raise VocabError(f"source id outside vocabulary of size {vs}")
        if min(r.target) < 0 or max(r.target) >= vt:
            raise VocabError(f"target id outside vocabulary of size {vt}")


def _encode(params: ModelParams, src: np.ndarray, src_mask: np.ndarray):
    B, T = src.shape
    h = np.zeros((B, params.hidden_dim))
    states = np.empty((B, T, params.hidden_dim))
    fresh = np.empty_like(states)
    proj = params.src_emb[src] @ params.w_enc + params.b_enc
    for t in range(T):
        hn = np.tanh(proj[:, t] + h @ params.u_enc)
        m = src_mask[:, t, None]
        h = m * hn + (1.0 - m) * h
        states[:, t] = h
        fresh[:, t] = hn
    return states, fresh


def _attend(params: ModelParams, s: np.ndarray, states: np.ndarray, src_mask: np.ndarray):
    """s: (B, T_y, h) decoder states; returns attention weights and contexts."""
    q = s @ params.w_query
    scores = np.einsum("bth,bjh->btj", q, states)
    scores = np.where(src_mask[:, None, :] > 0, scores, _NEG)
    scores -= scores.max(axis=-1, keepdims=True)
    att = np.exp(scores)
    att /= att.sum(axis=-1, keepdims=True)
    ctx = np.einsum("btj,bjh->bth", att, states)
    return q, att, ctx


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(params: ModelParams, rows: Sequence[Row], keep_cache: bool = False):
    """Per-row losses ``-sum_t sum_v q_tv log p_tv`` (teacher forcing)."""
    _check_ids(params, rows)
    B = len(rows)
    tx = max(len(r.source) for r in rows)
    ty = max(len(r.target) for r in rows) + 1
    src = _pad([r.source for r in rows], tx)
    src_mask = (np.arange(tx)[None, :] < np.array([len(r.source) for r in rows])[:, None]).astype(float)
    dec_in = _pad([(BOS,) + tuple(r.target) for r in rows], ty)
    gold = _pad([tuple(r.target) + (EOS,) for r in rows], ty)
    tgt_mask = (np.arange(ty)[None, :] < np.array([len(r.target) + 1 for r in rows])[:, None]).astype(float)
    ls = np.array([r.token_ls for r in rows], dtype=float)

    states, fresh = _encode(params, src, src_mask)
    h_last = states[:, -1]
    emb_in = params.tgt_emb[dec_in]
    proj = emb_in @ params.w_dec + params.b_dec
    s = np.empty((B, ty, params.hidden_dim))
    prev = h_last
    for t in range(ty):
        prev = np.tanh(proj[:, t] + prev @ params.u_dec)
        s[:, t] = prev
    q, att, ctx = _attend(params, s, states, src_mask)
    feats = np.concatenate([s, ctx], axis=-1)
    logp = _log_softmax(feats @ params.w_out + params.b_out)

    gold_lp = np.take_along_axis(logp, gold[..., None], axis=-1)[..., 0]
    step_loss = -(1.0 - ls[:, None]) * gold_lp - ls[:, None] * logp.mean(axis=-1)
    losses = (step_loss * tgt_mask).sum(axis=1)
    if not keep_cache:
        return losses
    cache = dict(src=src, src_mask=src_mask, dec_in=dec_in, gold=gold, tgt_mask=tgt_mask, ls=ls,
                 states=states, fresh=fresh, h_last=h_last, emb_in=emb_in, s=s, q=q, att=att,
                 feats=feats, logp=logp)
    return losses, cache


def backward(params: ModelParams, cache: dict, weights: np.ndarray) -> ModelParams:
    """Gradient of ``sum_r weights[r] * loss_r`` with respect to every parameter."""
    g = params.zeros_like()
    src, src_mask = cache["src"], cache["src_mask"]
    dec_in, gold, tgt_mask, ls = cache["dec_in"], cache["gold"], cache["tgt_mask"], cache["ls"]
    states, fresh, h_last = cache["states"], cache["fresh"], cache["h_last"]
    emb_in, s, q, att, feats, logp = (cache[k] for k in ("emb_in", "s", "q", "att", "feats", "logp"))
    B, ty, V = logp.shape
    tx = src.shape[1]
    hd = params.hidden_dim

    # d loss / d logits = p - smoothed target
    dz = np.exp(logp)
    dz -= (ls / V)[:, None, None]
    np.add.at(dz, (np.arange(B)[:, None], np.arange(ty)[None, :], gold), -(1.0 - ls)[:, None])
    dz *= (weights[:, None] * tgt_mask)[..., None]

    g.w_out = feats.reshape(-1, 2 * hd).T @ dz.reshape(-1, V)
    g.b_out = dz.sum(axis=(0, 1))
    dfeats = dz @ params.w_out.T
    ds = dfeats[..., :hd].copy()
    dctx = dfeats[..., hd:]

    datt = np.einsum("bth,bjh->btj", dctx, states)
    dstates = np.einsum("btj,bth->bjh", att, dctx)
    dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
    dq = np.einsum("btj,bjh->bth", dscores, states)
    dstates += np.einsum("btj,bth->bjh", dscores, q)
    g.w_query = s.reshape(-1, hd).T @ dq.reshape(-1, hd)
    ds += dq @ params.w_query.T

    # decoder recurrence
    dproj = np.empty_like(s)
    carry = np.zeros((B, hd))
    for t in range(ty - 1, -1, -1):
        da = (ds[:, t] + carry) * (1.0 - s[:, t] ** 2)
        dproj[:, t] = da
        prev = s[:, t - 1] if t > 0 else h_last
        g.u_dec += prev.T @ da
        carry = da @ params.u_dec.T
    g.w_dec = emb_in.reshape(-1, emb_in.shape[-1]).T @ dproj.reshape(-1, hd)
    g.b_dec = dproj.sum(axis=(0, 1))
    np.add.at(g.tgt_emb, dec_in.ravel(), dproj.reshape(-1, hd) @ params.w_dec.T)
    dstates[:, -1] += carry

    # encoder recurrence, padded steps copy the previous state
    emb_src = params.src_emb[src]
    dproj_e = np.empty((B, tx, hd))
    carry = np.zeros((B, hd))
    for t in range(tx - 1, -1, -1):
        dh = dstates[:, t] + carry
        m = src_mask[:, t, None]
        da = m * dh * (1.0 - fresh[:, t] ** 2)
        dproj_e[:, t] = da
        if t > 0:
            g.u_enc += states[:, t - 1].T @ da
        carry = (1.0 - m) * dh + da @ params.u_enc.T
    g.w_enc = emb_src.reshape(-1, emb_src.shape[-1]).T @ dproj_e.reshape(-1, hd)
    g.b_enc = dproj_e.sum(axis=(0, 1))
    np.add.at(g.src_emb, src.ravel(), dproj_e.reshape(-1, hd) @ params.w_enc.T)
    return g


def loss_and_grad(params: ModelParams, rows: Sequence[Row]) -> Tuple[float, np.ndarray, ModelParams]:
    """Weighted total loss, the per-row losses, and the gradient of the total."""
    losses, cache = forward(params, rows, keep_cache=True)
    w = np.array([r.weight for r in rows], dtype=float)
    return float(w @ losses), losses, backward(params, cache, w)


def log_prob(params: ModelParams, x, y) -> float:
    """log p(y | x), summed over the target tokens and the closing EOS."""
    return -float(forward(params, [Row(tuple(x), tuple(y))])[0])


@dataclass(frozen=True)
class LossBreakdown:
    base_nll: float
    related_nlls: Tuple[float, ...]
    total: float
    alpha: float = 0.0


def smoothed_rows(x, y, related: Iterable, alpha: float, token_ls: Optional[float] = None,
                  scale: float = 1.0) -> List[Row]:
    """Rows whose weighted loss sum is the smoothed loss of one example."""
    related = [tuple(r) for r in related]
    rows = [Row(tuple(x), tuple(y), scale, token_ls or 0.0)]
    if related and alpha > 0:
        w = scale * alpha / len(related)
        rows.extend(Row(tuple(x), r, w) for r in related)
    return rows


def _related_seqs(related) -> list:
    if related is None:
        return []
    seqs = getattr(related, "sequences", None)
    if seqs is not None:
        if len(related) and not seqs:
            raise ValueError("related set has members but no resolved sequences")
        return list(seqs)
    return list(related)


def smoothed_loss(params: ModelParams, x, y, related=None, alpha: float = 0.0,
                  token_ls: Optional[float] = None) -> LossBreakdown:
    """``-log p(y|x) + alpha / |R| * sum_{y' in R} -log p(y'|x)``; the second
    term is dropped when ``R`` is empty."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    seqs = [tuple(r) for r in _related_seqs(related)]
    # the base row is scored on its own so that alpha = 0 reproduces -log_prob bit for bit
    base = float(forward(params, [Row(tuple(x), tuple(y), 1.0, token_ls or 0.0)])[0])
    rel = [float(v) for v in forward(params, [Row(tuple(x), r) for r in seqs])] if seqs else []
    return combine_loss(base, rel, alpha)


def combine_loss(base_nll: float, related_nlls: Sequence[float], alpha: float) -> LossBreakdown:
    rel = tuple(related_nlls)
    total = base_nll + (alpha / len(rel)) * sum(rel) if rel else base_nll
    return LossBreakdown(base_nll, rel, total, alpha)


def grad(params: ModelParams, x, y, related=None, alpha: float = 0.0,
         token_ls: Optional[float] = None) -> ModelParams:
    rows = smoothed_rows(x, y, _related_seqs(related), alpha, token_ls)
    return loss_and_grad(params, rows)[2]


def global_norm(g: ModelParams) -> float:
    return float(np.sqrt(sum(float((a * a).sum()) for a in g.arrays())))


def sgd_step(params: ModelParams, g: ModelParams, lr: float, clip_norm: Optional[float] = 5.0) -> float:
    norm = global_norm(g)
    scale = lr
    if clip_norm is not None and norm > clip_norm:
        scale = lr * clip_norm / norm
    for p, d in zip(params.arrays(), g.arrays()):
        p -= scale * d
    return norm


def greedy_decode_batch(params: ModelParams, sources: Sequence, max_len: int) -> List[tuple]:
    """Token-wise argmax decoding of many sources at once; PAD and BOS are never emitted."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if not len(sources):
        return []
    rows = [Row(tuple(x), (EOS,)) for x in sources]
    _check_ids(params, rows)
    tx = max(len(r.source) for r in rows)
    src = _pad([r.source for r in rows], tx)
    src_mask = (np.arange(tx)[None, :] < np.array([len(r.source) for r in rows])[:, None]).astype(float)
    states, _ = _encode(params, src, src_mask)
    B = len(rows)
    prev = states[:, -1]
    tok = np.full(B, BOS)
    done = np.zeros(B, dtype=bool)
    out = [[] for _ in range(B)]
    banned = np.zeros(params.tgt_vocab_size, dtype=bool)
    banned[[PAD, BOS]] = True
    for _ in range(max_len):
        prev = np.tanh(params.tgt_emb[tok] @ params.w_dec + params.b_dec + prev @ params.u_dec)
        _, _, ctx = _attend(params, prev[:, None, :], states, src_mask)
        logits = np.concatenate([prev, ctx[:, 0]], axis=-1) @ params.w_out + params.b_out
        logits[:, banned] = -np.inf
        tok = logits.argmax(axis=-1)
        for b in np.flatnonzero(~done):
            if tok[b] == EOS:
                done[b] = True
            else:
                out[b].append(int(tok[b]))
        if done.all():
            break
    return [tuple(o) for o in out]


def greedy_decode(params: ModelParams, x, max_len: int) -> tuple:
    return greedy_decode_batch(params, [tuple(x)], max_len)[0]


def save_checkpoint(params: ModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<5I", CHECKPOINT_VERSION, params.src_vocab_size, params.tgt_vocab_size,
                             params.emb_dim, params.hidden_dim))
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a model checkpoint")
    if len(data) < 24:
        raise TruncatedFile(f"{path}: header truncated")
    version, vs, vt, d, h = struct.unpack("<5I", data[4:24])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    shapes = [(vs, d), (vt, d), (d, h), (h, h), (h,), (d, h), (h, h), (h,), (h, h), (2 * h, vt), (vt,)]
    need = sum(int(np.prod(s)) for s in shapes) * 4
    if len(data) - 24 < need:
        raise TruncatedFile(f"{path}: expected {need} parameter bytes, found {len(data) - 24}")
    arrays, off = [], 24
    for shape in shapes:
        n = int(np.prod(shape))
        arrays.append(np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64).reshape(shape))
        off += 4 * n
    return ModelParams(*arrays)
