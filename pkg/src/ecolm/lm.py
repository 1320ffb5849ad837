"""Backoff k-gram language models with additive smoothing.

Counting convention: a block of length B contributes exactly B events.  The
event at position i conditions on the min(i, k-1) preceding ids of the same
block, so the first k-1 positions are counted with shortened contexts and
contexts never cross block boundaries.

Scoring uses longest-match backoff: the longest context suffix with a nonzero
total count supplies the whole next-token distribution,
(count + alpha) / (total + alpha * V), with alpha / (total + alpha * V) for
tokens unseen after that context.  If no suffix has counts at all (including
the empty context) the distribution is uniform.

The fitted count table is stored packed: contexts sorted by (length, ids),
each with a row of ascending next-token ids, plus precomputed log
probabilities and a per-row popularity ranking.  The scoring/search kernels in
``ecolm._kernels`` operate directly on this layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .corpus import BLOCK_DTYPE, Shard
from .errors import EmptyTrainingDataError

REFIT_MODES = ("fresh", "accumulate")
_SNAPSHOT_MAGIC = "ecolm-ngram-v1"


@dataclass
class NGramModel:
    """A fitted k-gram model over a vocabulary of ``vocab_size`` ids.

    Immutable after construction; all read operations are safe under
    unrestricted concurrent reads.
    """

    order: int
    alpha: float
    vocab_size: int
    trained_on: int
    ctx_index: dict = field(repr=False)
    offsets: np.ndarray = field(repr=False)  # int64 (n_ctx + 1,)
    tok: np.ndarray = field(repr=False)  # int32 (nnz,) ascending per row
    cnt: np.ndarray = field(repr=False)  # float64 (nnz,)
    total: np.ndarray = field(repr=False)  # float64 (n_ctx,)
    logp: np.ndarray = field(repr=False)  # float64 (nnz,)
    base_logp: np.ndarray = field(repr=False)  # float64 (n_ctx,)
    rank: np.ndarray = field(repr=False)  # int32 (nnz,) per-row order
    uniform_logp: float = field(repr=False, default=0.0)

    @property
    def n_contexts(self) -> int:
        return len(self.total)

    def contexts(self):
        """Stored contexts in packed order (by length, then ids)."""
        return iter(self.ctx_index)

    def ctx_total(self, ctx) -> float:
        r = self.ctx_index.get(tuple(int(t) for t in ctx), -1)
        return float(self.total[r]) if r >= 0 else 0.0

    def ctx_count(self, ctx, token: int) -> float:
        r = self.ctx_index.get(tuple(int(t) for t in ctx), -1)
        if r < 0:
            return 0.0
        lo, hi = self.offsets[r], self.offsets[r + 1]
        pos = lo + np.searchsorted(self.tok[lo:hi], token)
        if pos < hi and self.tok[pos] == token:
            return float(self.cnt[pos])
        return 0.0

    def backoff_row(self, ctx) -> int:
        """Row of the longest stored suffix of ``ctx``, or -1 if none."""
        ids = tuple(int(t) for t in ctx)
        if len(ids) > self.order - 1:
            ids = ids[len(ids) - (self.order - 1) :]
        for start in range(len(ids) + 1):
            r = self.ctx_index.get(ids[start:], -1)
            if r >= 0:
                return r
        return -1

    def save(self, path: str | Path) -> None:
        """Write the model as a sorted text table, byte-stable per model."""
        lines = [
            f"{_SNAPSHOT_MAGIC} k={self.order} alpha={self.alpha!r} "
            f"V={self.vocab_size} n={self.trained_on}"
        ]
        offsets = self.offsets
        for ctx, r in self.ctx_index.items():
            head = " ".join(str(t) for t in ctx)
            for p in range(offsets[r], offsets[r + 1]):
                lines.append(f"{head}\t{int(self.tok[p])}\t{float(self.cnt[p])!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "NGramModel":
        text = Path(path).read_text(encoding="utf-8").splitlines()
        if not text or text[0].split()[0] != _SNAPSHOT_MAGIC:
            raise ValueError(f"not an {_SNAPSHOT_MAGIC} snapshot: {path}")
        meta = dict(kv.split("=", 1) for kv in text[0].split()[1:])
        table: dict[tuple, dict[int, float]] = {}
        for line in text[1:]:
            head, tok, cnt = line.split("\t")
            ctx = tuple(int(t) for t in head.split())
            table.setdefault(ctx, {})[int(tok)] = float(cnt)
        return _pack_table(
            table,
            order=int(meta["k"]),
            alpha=float(meta["alpha"]),
            vocab_size=int(meta["V"]),
            trained_on=int(meta["n"]),
        )


def models_identical(a: NGramModel, b: NGramModel) -> bool:
    """True when two models share parameters and bit-identical count tables."""
    return (
        a.order == b.order
        and a.alpha == b.alpha
        and a.vocab_size == b.vocab_size
        and a.trained_on == b.trained_on
        and list(a.ctx_index) == list(b.ctx_index)
        and np.array_equal(a.offsets, b.offsets)
        and np.array_equal(a.tok, b.tok)
        and np.array_equal(a.cnt, b.cnt)
    )


def _blocks_of(data) -> np.ndarray:
    blocks = data.blocks if isinstance(data, Shard) else np.asarray(data)
    if blocks.ndim != 2:
        raise ValueError("expected a 2-D block array")
    return blocks


def _raw_counts(blocks: np.ndarray, k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Distinct (context, next) rows with counts, one matrix per context length."""
    n, width = blocks.shape
    out = []
    for c in range(min(k - 1, width)):
        rows, counts = np.unique(blocks[:, : c + 1], axis=0, return_counts=True)
        out.append((rows, counts.astype(np.float64)))
    if k - 1 < width:
        windows = sliding_window_view(blocks, k, axis=1).reshape(-1, k)
        rows, counts = np.unique(windows, axis=0, return_counts=True)
        out.append((rows, counts.astype(np.float64)))
    return out


def _assemble(blocks: np.ndarray, k: int):
    """Packed (ctx_index, sizes, tok, cnt) straight from the count pass."""
    ctx_tuples: list[tuple] = []
    sizes_parts, tok_parts, cnt_parts = [], [], []
    for rows, counts in _raw_counts(blocks, k):
        ctx, tok = rows[:, :-1], rows[:, -1]
        if ctx.shape[1] == 0:
            starts = np.zeros(1, dtype=np.int64)
        else:
            change = np.any(ctx[1:] != ctx[:-1], axis=1)
            starts = np.flatnonzero(np.r_[True, change]).astype(np.int64)
        ends = np.r_[starts[1:], len(rows)]
        ctx_tuples.extend(tuple(r) for r in ctx[starts].tolist())
        sizes_parts.append(ends - starts)
        tok_parts.append(tok)
        cnt_parts.append(counts)
    ctx_index = {c: i for i, c in enumerate(ctx_tuples)}
    return (
        ctx_index,
        np.concatenate(sizes_parts),
        np.concatenate(tok_parts),
        np.concatenate(cnt_parts),
    )


def _pack_table(
    table: dict[tuple, dict[int, float]],
    order: int,
    alpha: float,
    vocab_size: int,
    trained_on: int,
) -> NGramModel:
    """Build a model from a context -> {token: count} mapping."""
    ctxs = sorted(table, key=lambda c: (len(c), c))
    ctx_index = {}
    sizes = np.empty(len(ctxs), dtype=np.int64)
    tok_parts, cnt_parts = [], []
    for i, ctx in enumerate(ctxs):
        ctx_index[ctx] = i
        row = table[ctx]
        toks = sorted(row)
        tok_parts.append(np.array(toks, dtype=BLOCK_DTYPE))
        cnt_parts.append(np.array([row[t] for t in toks], dtype=np.float64))
        sizes[i] = len(toks)
    tok = np.concatenate(tok_parts) if tok_parts else np.empty(0, dtype=BLOCK_DTYPE)
    cnt = np.concatenate(cnt_parts) if cnt_parts else np.empty(0, dtype=np.float64)
    return _finish_model(
        order, alpha, vocab_size, trained_on, ctx_index, sizes, tok, cnt
    )


def _finish_model(
    order, alpha, vocab_size, trained_on, ctx_index, sizes, tok, cnt
) -> NGramModel:
    offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    if len(sizes):
        total = np.add.reduceat(cnt, offsets[:-1])
        denom = total + alpha * vocab_size
        logp = np.log((cnt + alpha) / np.repeat(denom, sizes))
        base_logp = np.log(alpha / denom)
        row_of = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
        order_idx = np.lexsort((tok, -cnt, row_of))
        rank = (order_idx - np.repeat(offsets[:-1], sizes)).astype(np.int32)
    else:
        total = np.empty(0, dtype=np.float64)
        logp = np.empty(0, dtype=np.float64)
        base_logp = np.empty(0, dtype=np.float64)
        rank = np.empty(0, dtype=np.int32)
    return NGramModel(
        order=order,
        alpha=alpha,
        vocab_size=vocab_size,
        trained_on=trained_on,
        ctx_index=ctx_index,
        offsets=offsets,
        tok=np.ascontiguousarray(tok, dtype=BLOCK_DTYPE),
        cnt=np.ascontiguousarray(cnt, dtype=np.float64),
        total=total,
        logp=logp,
        base_logp=base_logp,
        rank=rank,
        uniform_logp=-math.log(vocab_size),
    )


def _decayed_table(
    blocks: np.ndarray, k: int, prev: NGramModel, decay: float
) -> dict[tuple, dict[int, float]]:
    table: dict[tuple, dict[int, float]] = {}
    for rows, counts in _raw_counts(blocks, k):
        for row, c in zip(rows.tolist(), counts.tolist()):
            table.setdefault(tuple(row[:-1]), {})[row[-1]] = c
    offsets = prev.offsets
    for ctx, r in prev.ctx_index.items():
        dest = table.setdefault(ctx, {})
        for p in range(offsets[r], offsets[r + 1]):
            t = int(prev.tok[p])
            dest[t] = dest.get(t, 0.0) + decay * float(prev.cnt[p])
    return table


def _check_fit_args(blocks, k, alpha, mode, prev, decay):
    if len(blocks) == 0:
        raise EmptyTrainingDataError("cannot fit a model on an empty shard")
    if k < 1:
        raise ValueError("order k must be at least 1")
    if alpha is not None and alpha <= 0:
        raise ValueError("smoothing alpha must be positive")
    if not 0 <= decay < 1:
        raise ValueError("decay must lie in [0, 1)")
    if mode not in REFIT_MODES:
        raise ValueError(f"unknown refit mode {mode!r}")
    if mode == "accumulate" and prev is None:
        raise ValueError("accumulate mode requires a previous model")


def _resolve_vocab_size(blocks, vocab_size, prev):
    if vocab_size is not None:
        return int(vocab_size)
    if prev is not None:
        return prev.vocab_size
    return int(blocks.max()) + 1


def fit(
    shard,
    k: int,
    alpha: float,
    mode: str = "fresh",
    prev: NGramModel | None = None,
    decay: float = 0.0,
    vocab_size: int | None = None,
) -> NGramModel:
    """Fit a k-gram model on a shard of token blocks.

    ``mode="fresh"`` counts the shard alone; ``mode="accumulate"`` adds
    ``decay`` times the previous model's counts (counts become real-valued).
    Fitting is deterministic and invariant to block order.  ``vocab_size``
    defaults to the previous model's, or to max id + 1 when there is none.
    """
    blocks = _blocks_of(shard)
    _check_fit_args(blocks, k, alpha, mode, prev, decay)
    V = _resolve_vocab_size(blocks, vocab_size, prev)
    if mode == "accumulate" and decay > 0.0:
        table = _decayed_table(blocks, k, prev, decay)
        return _pack_table(table, k, alpha, V, len(blocks))
    ctx_index, sizes, tok, cnt = _assemble(blocks, k)
    return _finish_model(k, alpha, V, len(blocks), ctx_index, sizes, tok, cnt)


def fit_grid(
    shard,
    k: int,
    alpha_grid,
    mode: str = "fresh",
    prev: NGramModel | None = None,
    decay: float = 0.0,
    vocab_size: int | None = None,
) -> list[NGramModel]:
    """Fit one model per alpha, sharing the count pass for a fixed order."""
    blocks = _blocks_of(shard)
    _check_fit_args(blocks, k, None, mode, prev, decay)
    V = _resolve_vocab_size(blocks, vocab_size, prev)
    if mode == "accumulate" and decay > 0.0:
        table = _decayed_table(blocks, k, prev, decay)
        return [_pack_table(table, k, a, V, len(blocks)) for a in alpha_grid]
    ctx_index, sizes, tok, cnt = _assemble(blocks, k)
    return [
        _finish_model(k, a, V, len(blocks), ctx_index, sizes, tok, cnt)
        for a in alpha_grid
    ]


def next_token_dist(model: NGramModel, context) -> np.ndarray:
    """Next-token probabilities given a context, as a dense length-V vector."""
    V = model.vocab_size
    r = model.backoff_row(context)
    if r < 0:
        return np.full(V, 1.0 / V)
    denom = model.total[r] + model.alpha * V
    probs = np.full(V, model.alpha / denom)
    lo, hi = model.offsets[r], model.offsets[r + 1]
    probs[model.tok[lo:hi]] = (model.cnt[lo:hi] + model.alpha) / denom
    return probs


def sequence_log_prob(model: NGramModel, seq) -> float:
    """Natural-log probability of a standalone block under the model."""
    block = np.asarray(seq, dtype=BLOCK_DTYPE).reshape(1, -1)
    return float(_kernels.block_log_probs(model, block)[0])


def perplexity(model: NGramModel, seqs) -> tuple[np.ndarray, float]:
    """Per-sequence perplexities and their arithmetic mean.

    All sequences share one length, so the sequence mean equals the token
    mean.  With alpha > 0 every value is finite.
    """
    blocks = _blocks_of(seqs)
    if len(blocks) == 0:
        raise ValueError("perplexity needs at least one sequence")
    log_probs = _kernels.block_log_probs(model, blocks)
    ppl = np.exp(-log_probs / blocks.shape[1])
    return ppl, math.fsum(ppl.tolist()) / len(ppl)


def select_model(
    shard,
    validation,
    k_grid,
    alpha_grid,
    mode: str = "fresh",
    prev: NGramModel | None = None,
    decay: float = 0.0,
    vocab_size: int | None = None,
) -> NGramModel:
    """Grid-select (k, alpha) by minimal mean validation perplexity.

    Ties break toward the smaller order, then the smaller alpha.
    """
    if not len(k_grid) or not len(alpha_grid):
        raise ValueError("hyperparameter grids must be non-empty")
    best = None
    best_ppl = math.inf
    for k in sorted(k_grid):
        candidates = fit_grid(
            shard, k, sorted(alpha_grid), mode, prev, decay, vocab_size
        )
        for cand in candidates:
            _, mean_ppl = perplexity(cand, validation)
            if mean_ppl < best_ppl:
                best, best_ppl = cand, mean_ppl
    return best
