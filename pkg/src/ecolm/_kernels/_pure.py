"""Pure-Python reference lane for the scoring and beam-search kernels.

This is the fallback when the compiled extension is unavailable and the
ground truth in lane-parity tests.  Each function mirrors the compiled lane
operation for operation: log-probability increments are read from the model's
precomputed tables and accumulated left to right, so both lanes produce
bit-identical results.
"""

from __future__ import annotations

import numpy as np

BLOCK_DTYPE = np.int32


def _score_event(model, ids, lo, i):
    """Log-probability of ids[i] given context ids[lo:i], longest-match backoff."""
    ctx_index = model.ctx_index
    row = -1
    for s in range(lo, i + 1):
        row = ctx_index.get(tuple(ids[s:i]), -1)
        if row >= 0:
            break
    if row < 0:
        return model.uniform_logp
    off = int(model.offsets[row])
    end = int(model.offsets[row + 1])
    tok = model.tok
    target = ids[i]
    # binary search in the row's ascending token ids
    while off < end:
        mid = (off + end) // 2
        if tok[mid] < target:
            off = mid + 1
        else:
            end = mid
    if off < int(model.offsets[row + 1]) and tok[off] == target:
        return float(model.logp[off])
    return float(model.base_logp[row])


def block_log_probs(model, blocks) -> np.ndarray:
    """Log-probability of each standalone block (shortened start contexts)."""
    k = model.order
    out = np.empty(len(blocks), dtype=np.float64)
    for b in range(len(blocks)):
        ids = [int(x) for x in blocks[b]]
        total = 0.0
        for i in range(len(ids)):
            lo = i - (k - 1)
            if lo < 0:
                lo = 0
            total += _score_event(model, ids, lo, i)
        out[b] = total
    return out


def continuation_log_probs(model, prompts, conts) -> np.ndarray:
    """Log-probability of each continuation given its prompt."""
    k = model.order
    out = np.empty(len(conts), dtype=np.float64)
    for b in range(len(conts)):
        ids = [int(x) for x in prompts[b]] + [int(x) for x in conts[b]]
        start = len(prompts[b])
        total = 0.0
        for i in range(start, len(ids)):
            lo = i - (k - 1)
            if lo < 0:
                lo = 0
            total += _score_event(model, ids, lo, i)
        out[b] = total
    return out


def _candidates(model, ctx, score, parent, per_parent):
    """A parent's ``per_parent`` best extensions, best first.

    Observed tokens come first in (count desc, id asc) order via the model's
    precomputed ranking; the remainder is filled with the smallest unseen ids,
    which all share the base (unseen) score.
    """
    row = -1
    for s in range(len(ctx) + 1):
        row = model.ctx_index.get(tuple(ctx[s:]), -1)
        if row >= 0:
            break
    cands = []
    if row >= 0:
        off = int(model.offsets[row])
        size = int(model.offsets[row + 1]) - off
        take = min(per_parent, size)
        for r in range(take):
            pos = off + int(model.rank[off + r])
            cands.append((score + float(model.logp[pos]), parent, int(model.tok[pos])))
        need = per_parent - take
        if need > 0:
            base = float(model.base_logp[row])
            seen = model.tok[off : off + size]
            v = 0
            si = 0
            while need > 0:
                while si < size and int(seen[si]) < v:
                    si += 1
                if si < size and int(seen[si]) == v:
                    v += 1
                    continue
                cands.append((score + base, parent, v))
                v += 1
                need -= 1
    else:
        for v in range(per_parent):
            cands.append((score + model.uniform_logp, parent, v))
    return cands


def _beam_one(model, prompt, width, length):
    k = model.order
    ctx_len = k - 1
    per_parent = min(width, model.vocab_size)
    # hypotheses kept sorted by (score desc, continuation lex asc)
    start_ctx = tuple(prompt[max(0, len(prompt) - ctx_len) :]) if ctx_len else ()
    hyps = [(0.0, start_ctx, ())]
    for _ in range(length):
        cands = []
        conts = []
        for parent, (score, ctx, cont) in enumerate(hyps):
            conts.append(cont)
            cands.extend(_candidates(model, ctx, score, parent, per_parent))
        cands.sort(key=lambda c: (-c[0], conts[c[1]], c[2]))
        new_hyps = []
        for score, parent, token in cands[:width]:
            _, ctx, cont = hyps[parent]
            new_ctx = (ctx + (token,))[-ctx_len:] if ctx_len else ()
            new_hyps.append((score, new_ctx, cont + (token,)))
        hyps = new_hyps
    best = hyps[0]
    return np.array(best[2], dtype=BLOCK_DTYPE), best[0]


def beam_continuations(model, prompts, width, length) -> tuple[np.ndarray, np.ndarray]:
    """Beam-search continuation for every prompt, with final scores.

    Deterministic: score ties break toward the lexicographically smaller
    token-id sequence, at every pruning step and at the final selection.
    """
    n = len(prompts)
    out = np.empty((n, length), dtype=BLOCK_DTYPE)
    scores = np.empty(n, dtype=np.float64)
    for i in range(n):
        ids = [int(x) for x in prompts[i]]
        out[i], scores[i] = _beam_one(model, ids, width, length)
    return out, scores
