"""Plain-text ingestion: vocabulary building, fixed-length token blocks, splits.

Tokenization is whitespace word-level with a frequency cutoff; everything rarer
maps to a single unknown marker.  All downstream data is carried as int32
arrays: a single sequence is a 1-D array of length ``block_size``, a collection
of sequences is a 2-D array with one block per row.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateSplitError, EmptyCorpusError, InsufficientTokensError

UNK_TOKEN = "<unk>"
BLOCK_DTYPE = np.int32


@dataclass(frozen=True)
class Vocab:
    """Token-id table.  Id 0 is always the unknown-word marker."""

    tokens: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.tokens or self.tokens[0] != UNK_TOKEN:
            raise ValueError("vocabulary must start with the unk marker")
        index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        object.__setattr__(self, "index", index)

    @property
    def unk_id(self) -> int:
        return 0

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, words) -> np.ndarray:
        index = self.index
        return np.fromiter(
            (index.get(w, 0) for w in words), dtype=BLOCK_DTYPE, count=len(words)
        )

    def decode(self, ids) -> list[str]:
        return [self.tokens[int(i)] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return Vocab(tuple(lines))


@dataclass(frozen=True)
class CorpusSplits:
    """Train/validation/test blocks plus the sampled training subset.

    ``train_gen`` keeps its blocks in original document order, so two
    consecutive rows are textual continuations whenever both survived the
    subsampling.  ``train_gen_index`` records which pre-subset train blocks
    were kept.
    """

    train_gen: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    train_gen_index: np.ndarray


@dataclass
class Shard:
    """One model's training data: a stack of token blocks."""

    blocks: np.ndarray
    owner: int = -1

    @property
    def n(self) -> int:
        return len(self.blocks)


def ingest_text(raw_text: str, min_token_freq: int = 2) -> tuple[Vocab, np.ndarray]:
    """Build a vocabulary from whitespace tokens and encode the full stream.

    Tokens occurring fewer than ``min_token_freq`` times encode to the unk id.
    Ids are assigned in order of first appearance, after the reserved unk slot.
    """
    words = raw_text.split()
    if not words:
        raise EmptyCorpusError("no tokens after whitespace tokenization")
    freq = Counter(words)
    kept = [w for w, c in freq.items() if c >= min_token_freq and w != UNK_TOKEN]
    vocab = Vocab((UNK_TOKEN, *kept))
    return vocab, vocab.encode(words)


def blockify(stream: np.ndarray, block_size: int = 128) -> np.ndarray:
    """Cut a token stream into consecutive non-overlapping blocks.

    Trailing tokens that do not fill a whole block are dropped.
    """
    if block_size < 2:
        raise ValueError("block size must be at least 2")
    stream = np.asarray(stream)
    n = len(stream) // block_size
    if n == 0:
        raise InsufficientTokensError(
            f"stream of {len(stream)} tokens is shorter than one block ({block_size})"
        )
    return (
        stream[: n * block_size].reshape(n, block_size).astype(BLOCK_DTYPE, copy=True)
    )


def subsample_blocks(
    blocks: np.ndarray, fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Keep a seeded uniform sample of ceil(fraction * n) blocks, in order."""
    if not 0 < fraction <= 1:
        raise ValueError("subset fraction must be in (0, 1]")
    n = len(blocks)
    m = math.ceil(fraction * n)
    if m >= n:
        idx = np.arange(n)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        idx = np.sort(rng.choice(n, size=m, replace=False))
    return blocks[idx].copy(), idx


def make_splits(
    blocks: np.ndarray,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    subset_fraction: float = 1.0,
    seed: int = 0,
) -> CorpusSplits:
    """Partition blocks front/middle/back and subsample the train part.

    The partition is contiguous, preserving document order within each split;
    the train subset is a seeded uniform block sample re-sorted into original
    order.  Deterministic for a given seed.
    """
    if abs(math.fsum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ValueError("split fractions must be non-negative and sum to 1")
    n = len(blocks)
    c1 = int(math.floor(n * fractions[0]))
    c2 = int(math.floor(n * (fractions[0] + fractions[1])))
    train, valid, test = blocks[:c1], blocks[c1:c2], blocks[c2:]
    if len(train) == 0 or len(valid) == 0 or len(test) == 0:
        raise DegenerateSplitError(
            f"partition of {n} blocks by {fractions} leaves an empty split"
        )
    train_gen, idx = subsample_blocks(train, subset_fraction, seed)
    return CorpusSplits(
        train_gen=train_gen,
        validation=valid.copy(),
        test=test.copy(),
        train_gen_index=idx,
    )
