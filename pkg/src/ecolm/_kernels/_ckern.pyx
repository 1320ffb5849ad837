# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled lane for the scoring and beam-search kernels.

Mirrors ``ecolm._kernels._pure`` operation for operation: probabilities are
read from the model's precomputed tables and accumulated left to right in
double precision, so the two lanes return bit-identical results.
"""

import numpy as np

cimport numpy as cnp
from cpython.dict cimport PyDict_GetItem
from cpython.ref cimport Py_INCREF, PyObject
from cpython.tuple cimport PyTuple_New, PyTuple_SET_ITEM

cnp.import_array()

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64


cdef inline long _probe(dict d, tuple key):
    cdef PyObject* hit = PyDict_GetItem(d, key)
    if hit == NULL:
        return -1
    return <long>(<object>hit)


cdef long _backoff_row(dict ctx_index, const i32* ctx, Py_ssize_t n):
    """Row of the longest stored suffix of ctx[0:n], or -1."""
    cdef Py_ssize_t s, j, m
    cdef tuple key
    cdef object val
    cdef long row
    for s in range(n + 1):
        m = n - s
        key = PyTuple_New(m)
        for j in range(m):
            val = <object><long>ctx[s + j]
            Py_INCREF(val)
            PyTuple_SET_ITEM(key, j, val)
        row = _probe(ctx_index, key)
        if row >= 0:
            return row
    return -1


cdef inline double _row_logp(
    const i64[::1] offsets,
    const i32[::1] tok,
    const double[::1] logp,
    const double[::1] base_logp,
    long row,
    i32 target,
):
    cdef Py_ssize_t lo = offsets[row]
    cdef Py_ssize_t end = offsets[row + 1]
    cdef Py_ssize_t hi = end
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if tok[mid] < target:
            lo = mid + 1
        else:
            hi = mid
    if lo < end and tok[lo] == target:
        return logp[lo]
    return base_logp[row]


def block_log_probs(model, blocks):
    """Log-probability of each standalone block (shortened start contexts)."""
    cdef cnp.ndarray[i32, ndim=2, mode="c"] blk = np.ascontiguousarray(
        blocks, dtype=np.int32
    )
    cdef dict ctx_index = model.ctx_index
    cdef const i64[::1] offsets = model.offsets
    cdef const i32[::1] tok = model.tok
    cdef const double[::1] logp = model.logp
    cdef const double[::1] base_logp = model.base_logp
    cdef double uni = model.uniform_logp
    cdef long k = model.order
    cdef Py_ssize_t n = blk.shape[0]
    cdef Py_ssize_t width = blk.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t b, i, lo
    cdef long row
    cdef double total
    cdef const i32* ids
    for b in range(n):
        ids = &blk[b, 0]
        total = 0.0
        for i in range(width):
            lo = i - (k - 1)
            if lo < 0:
                lo = 0
            row = _backoff_row(ctx_index, ids + lo, i - lo)
            if row >= 0:
                total += _row_logp(offsets, tok, logp, base_logp, row, ids[i])
            else:
                total += uni
        out[b] = total
    return out_arr


def continuation_log_probs(model, prompts, conts):
    """Log-probability of each continuation given its prompt."""
    cdef cnp.ndarray[i32, ndim=2, mode="c"] pr = np.ascontiguousarray(
        prompts, dtype=np.int32
    )
    cdef cnp.ndarray[i32, ndim=2, mode="c"] co = np.ascontiguousarray(
        conts, dtype=np.int32
    )
    cdef dict ctx_index = model.ctx_index
    cdef const i64[::1] offsets = model.offsets
    cdef const i32[::1] tok = model.tok
    cdef const double[::1] logp = model.logp
    cdef const double[::1] base_logp = model.base_logp
    cdef double uni = model.uniform_logp
    cdef long k = model.order
    cdef Py_ssize_t n = co.shape[0]
    cdef Py_ssize_t plen = pr.shape[1]
    cdef Py_ssize_t clen = co.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    buf_arr = np.empty(plen + clen, dtype=np.int32)
    cdef i32[::1] buf = buf_arr
    cdef Py_ssize_t b, i, lo
    cdef long row
    cdef double total
    for b in range(n):
        for i in range(plen):
            buf[i] = pr[b, i]
        for i in range(clen):
            buf[plen + i] = co[b, i]
        total = 0.0
        for i in range(plen, plen + clen):
            lo = i - (k - 1)
            if lo < 0:
                lo = 0
            row = _backoff_row(ctx_index, &buf[lo], i - lo)
            if row >= 0:
                total += _row_logp(offsets, tok, logp, base_logp, row, buf[i])
            else:
                total += uni
        out[b] = total
    return out_arr


def beam_continuations(model, prompts, width, length):
    """Beam-search continuation for every prompt, with final scores.

    Deterministic: score ties break toward the lexicographically smaller
    token-id sequence, at every pruning step and at the final selection.
    """
    cdef cnp.ndarray[i32, ndim=2, mode="c"] pr = np.ascontiguousarray(
        prompts, dtype=np.int32
    )
    cdef dict ctx_index = model.ctx_index
    cdef const i64[::1] offsets = model.offsets
    cdef const i32[::1] tok = model.tok
    cdef const double[::1] logp = model.logp
    cdef const double[::1] base_logp = model.base_logp
    cdef const i32[::1] rank = model.rank
    cdef double uni = model.uniform_logp
    cdef long k = model.order
    cdef long V = model.vocab_size
    cdef long W = width
    cdef Py_ssize_t L = length
    cdef Py_ssize_t n_prompts = pr.shape[0]
    cdef Py_ssize_t plen = pr.shape[1]
    cdef Py_ssize_t ctx_len = k - 1
    cdef long per_parent = W if W < V else V

    out_arr = np.empty((n_prompts, L), dtype=np.int32)
    scores_arr = np.empty(n_prompts, dtype=np.float64)
    cdef i32[:, ::1] out = out_arr
    cdef double[::1] out_scores = scores_arr

    # double-buffered hypothesis state
    cdef i32[:, ::1] cur_cont = np.empty((W, L), dtype=np.int32)
    cdef i32[:, ::1] new_cont = np.empty((W, L), dtype=np.int32)
    cdef i32[:, ::1] cur_ctx = np.empty((W, max(ctx_len, 1)), dtype=np.int32)
    cdef i32[:, ::1] new_ctx = np.empty((W, max(ctx_len, 1)), dtype=np.int32)
    cdef double[::1] cur_score = np.empty(W, dtype=np.float64)
    cdef double[::1] new_score = np.empty(W, dtype=np.float64)
    cdef double[:, ::1] cand_score = np.empty((W, per_parent), dtype=np.float64)
    cdef i32[:, ::1] cand_tok = np.empty((W, per_parent), dtype=np.int32)
    cdef i64[::1] head = np.empty(W, dtype=np.int64)

    cdef Py_ssize_t b, step, p, j, r, h, sel, si
    cdef Py_ssize_t n_hyp, n_out, ctx_n, new_ctx_n
    cdef long row, take, need, v, best_p, tokv
    cdef i64 off, size, pos
    cdef double base_s, s1, s2
    cdef bint better
    cdef i32[:, ::1] tmp_i
    cdef double[::1] tmp_d

    for b in range(n_prompts):
        ctx_n = ctx_len if plen >= ctx_len else plen
        for j in range(ctx_n):
            cur_ctx[0, j] = pr[b, plen - ctx_n + j]
        cur_score[0] = 0.0
        n_hyp = 1

        for step in range(L):
            # materialize each parent's best extensions, best first:
            # ranked observed tokens, then the smallest unseen ids
            for p in range(n_hyp):
                row = _backoff_row(ctx_index, &cur_ctx[p, 0], ctx_n)
                if row >= 0:
                    off = offsets[row]
                    size = offsets[row + 1] - off
                    take = per_parent if per_parent < size else size
                    for r in range(take):
                        pos = off + rank[off + r]
                        cand_score[p, r] = cur_score[p] + logp[pos]
                        cand_tok[p, r] = tok[pos]
                    need = per_parent - take
                    if need > 0:
                        base_s = cur_score[p] + base_logp[row]
                        v = 0
                        si = 0
                        j = take
                        while need > 0:
                            while si < size and tok[off + si] < v:
                                si += 1
                            if si < size and tok[off + si] == v:
                                v += 1
                                continue
                            cand_score[p, j] = base_s
                            cand_tok[p, j] = <i32>v
                            j += 1
                            v += 1
                            need -= 1
                else:
                    for v in range(per_parent):
                        cand_score[p, v] = cur_score[p] + uni
                        cand_tok[p, v] = <i32>v

            # W-way merge of the per-parent sorted candidate lists
            n_out = W if W < n_hyp * per_parent else n_hyp * per_parent
            for p in range(n_hyp):
                head[p] = 0
            for sel in range(n_out):
                best_p = -1
                for p in range(n_hyp):
                    h = head[p]
                    if h >= per_parent:
                        continue
                    if best_p < 0:
                        best_p = p
                        continue
                    s1 = cand_score[p, h]
                    s2 = cand_score[best_p, head[best_p]]
                    if s1 > s2:
                        better = True
                    elif s1 < s2:
                        better = False
                    else:
                        better = False
                        for j in range(step):
                            if cur_cont[p, j] != cur_cont[best_p, j]:
                                better = cur_cont[p, j] < cur_cont[best_p, j]
                                break
                        else:
                            better = (
                                cand_tok[p, h]
                                < cand_tok[best_p, head[best_p]]
                            )
                    if better:
                        best_p = p
                h = head[best_p]
                head[best_p] = h + 1
                new_score[sel] = cand_score[best_p, h]
                tokv = cand_tok[best_p, h]
                for j in range(step):
                    new_cont[sel, j] = cur_cont[best_p, j]
                new_cont[sel, step] = <i32>tokv
                if ctx_len > 0:
                    if ctx_n < ctx_len:
                        for j in range(ctx_n):
                            new_ctx[sel, j] = cur_ctx[best_p, j]
                        new_ctx[sel, ctx_n] = <i32>tokv
                    else:
                        for j in range(ctx_len - 1):
                            new_ctx[sel, j] = cur_ctx[best_p, j + 1]
                        new_ctx[sel, ctx_len - 1] = <i32>tokv

            new_ctx_n = ctx_n + 1 if ctx_n < ctx_len else ctx_len
            ctx_n = new_ctx_n
            n_hyp = n_out
            tmp_i = cur_cont
            cur_cont = new_cont
            new_cont = tmp_i
            tmp_i = cur_ctx
            cur_ctx = new_ctx
            new_ctx = tmp_i
            tmp_d = cur_score
            cur_score = new_score
            new_score = tmp_d

        for j in range(L):
            out[b, j] = cur_cont[0, j]
        out_scores[b] = cur_score[0]
    return out_arr, scores_arr
