"""Deterministic artificial-data generation by beam search.

Every prompt block receives an equal-length continuation found by width-W
beam search over the model's next-token distributions.  Scores accumulate
sequentially per hypothesis, and every pruning step breaks score ties toward
the lexicographically smaller token-id sequence, so generation is fully
reproducible across runs and platforms.

``exhaustive_continuation`` is the search oracle: it enumerates all V^L
continuations with the same per-step scores and tie-break, which beam search
must match whenever W >= V^L.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import _kernels
from .corpus import BLOCK_DTYPE, Shard
from .errors import OracleTooLargeError
from .lm import NGramModel

EXHAUSTIVE_LIMIT = 10**6


def beam_continuation(
    model: NGramModel, prompt, length: int | None = None, width: int = 5
) -> np.ndarray:
    """Best length-L continuation of a prompt under beam search."""
    prompt = np.asarray(prompt, dtype=BLOCK_DTYPE)
    if length is None:
        length = len(prompt)
    if length < 1 or width < 1:
        raise ValueError("continuation length and beam width must be >= 1")
    conts, _ = _kernels.beam_continuations(
        model, prompt.reshape(1, -1), width, length
    )
    return conts[0]


def beam_continuation_scored(
    model: NGramModel, prompt, length: int | None = None, width: int = 5
) -> tuple[np.ndarray, float]:
    """Like :func:`beam_continuation` but also returns the hypothesis score."""
    prompt = np.asarray(prompt, dtype=BLOCK_DTYPE)
    if length is None:
        length = len(prompt)
    if length < 1 or width < 1:
        raise ValueError("continuation length and beam width must be >= 1")
    conts, scores = _kernels.beam_continuations(
        model, prompt.reshape(1, -1), width, length
    )
    return conts[0], float(scores[0])


def continuation_log_prob(model: NGramModel, prompt, continuation) -> float:
    """Log-probability of a continuation given its prompt."""
    prompt = np.asarray(prompt, dtype=BLOCK_DTYPE).reshape(1, -1)
    continuation = np.asarray(continuation, dtype=BLOCK_DTYPE).reshape(1, -1)
    return float(_kernels.continuation_log_probs(model, prompt, continuation)[0])


def generate_dataset(
    model: NGramModel,
    generation_set,
    width: int = 5,
    length: int | None = None,
) -> Shard:
    """One continuation block per generation-set block, in order.

    The artificial training example is the continuation alone, so the output
    shard has exactly as many blocks as the generation set.
    """
    blocks = np.asarray(generation_set, dtype=BLOCK_DTYPE)
    if blocks.ndim != 2 or len(blocks) == 0:
        raise ValueError("generation set must be a non-empty 2-D block array")
    if length is None:
        length = blocks.shape[1]
    conts, _ = _kernels.beam_continuations(model, blocks, width, length)
    return Shard(blocks=conts)


def exhaustive_continuation(model: NGramModel, prompt, length: int) -> np.ndarray:
    """True argmax continuation by full enumeration (test oracle).

    Scores each of the V^L candidates position by position with the same
    table lookups the beam uses; ties resolve to the lexicographically
    smallest sequence because enumeration is in ascending id order.
    """
    V = model.vocab_size
    if V**length > EXHAUSTIVE_LIMIT:
        raise OracleTooLargeError(
            f"exhaustive search over {V}^{length} continuations exceeds "
            f"{EXHAUSTIVE_LIMIT}"
        )
    prompt = [int(t) for t in prompt]
    k = model.order
    best_seq = None
    best_score = -np.inf
    for cand in itertools.product(range(V), repeat=length):
        ids = prompt + list(cand)
        score = 0.0
        for i in range(len(prompt), len(ids)):
            lo = max(0, i - (k - 1))
            score += _event_logp(model, ids, lo, i)
        if score > best_score:
            best_seq, best_score = cand, score
    return np.array(best_seq, dtype=BLOCK_DTYPE)


def _event_logp(model: NGramModel, ids, lo, i) -> float:
    """Single-event score read from the model's packed tables."""
    row = -1
    for s in range(lo, i + 1):
        row = model.ctx_index.get(tuple(ids[s:i]), -1)
        if row >= 0:
            break
    if row < 0:
        return model.uniform_logp
    off, end = int(model.offsets[row]), int(model.offsets[row + 1])
    pos = off + int(np.searchsorted(model.tok[off:end], ids[i]))
    if pos < end and model.tok[pos] == ids[i]:
        return float(model.logp[pos])
    return float(model.base_logp[row])


def cyclic_successor_generator(model, generation_set, width=5, length=None) -> Shard:
    """Zero-error stand-in for a generator: block j maps to block j + 1.

    Wrapping cyclically makes the output an exact permutation of the
    generation set, the behaviour a perfect model would show on consecutive
    blocks.  Useful for sanity-checking the ecosystem loop end to end.
    """
    blocks = np.asarray(generation_set, dtype=BLOCK_DTYPE)
    return Shard(blocks=np.roll(blocks, -1, axis=0))
