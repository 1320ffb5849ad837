"""Shared fixtures: synthetic corpora, a natural-text corpus harvested from
installed-package documentation, and independent naive oracles for scoring."""

from __future__ import annotations

import importlib
import inspect
import math

import numpy as np
import pytest

# ---------------------------------------------------------------------------
# corpora


def zipf_text(n_tokens: int, n_types: int = 400, seed: int = 0) -> str:
    """Synthetic text with a Zipf-like type distribution of pseudo-words."""
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, n_types + 1, dtype=np.float64)
    probs = 1.0 / (ranks + 2.7) ** 1.07
    probs /= probs.sum()
    ids = rng.choice(n_types, size=n_tokens, p=probs)
    return " ".join(f"w{i:04d}" for i in ids)


_DOC_MODULES = [
    "numpy", "numpy.linalg", "numpy.fft", "numpy.random", "numpy.ma",
    "scipy.stats", "scipy.signal", "scipy.optimize", "scipy.interpolate",
    "scipy.linalg", "scipy.sparse", "scipy.spatial", "scipy.ndimage",
    "scipy.integrate", "scipy.special",
    "json", "argparse", "logging", "unittest", "difflib", "decimal",
    "statistics", "sqlite3", "asyncio", "pathlib", "datetime", "collections",
    "itertools", "functools", "subprocess", "multiprocessing", "pickle",
    "csv", "re", "textwrap", "random", "heapq", "threading",
]


def harvest_docstrings(min_tokens: int = 260_000) -> str:
    """English prose scraped from docstrings of locally installed modules.

    Deterministic for a fixed installation: modules and attributes are walked
    in sorted order and duplicate docstrings are dropped.
    """
    pieces: list[str] = []
    seen: set[str] = set()
    count = 0
    for name in _DOC_MODULES:
        try:
            mod = importlib.import_module(name)
        except ImportError:
            continue
        objs = [mod]
        for attr in sorted(dir(mod)):
            try:
                obj = getattr(mod, attr)
            except Exception:
                continue
            objs.append(obj)
            if inspect.isclass(obj):
                for attr2 in sorted(dir(obj)):
                    try:
                        objs.append(getattr(obj, attr2))
                    except Exception:
                        continue
        for obj in objs:
            try:
                doc = inspect.getdoc(obj)
            except Exception:
                continue
            if doc and doc not in seen:
                seen.add(doc)
                pieces.append(doc)
                count += len(doc.split())
        if count >= min_tokens:
            break
    return "\n".join(pieces)


@pytest.fixture(scope="session")
def natural_text() -> str:
    text = harvest_docstrings()
    assert len(text.split()) >= 200_000, "not enough local documentation text"
    return text


@pytest.fixture(scope="session")
def small_zipf_text() -> str:
    return zipf_text(60_000, n_types=300, seed=11)


def random_blocks(rng, n, width, vocab) -> np.ndarray:
    return rng.integers(0, vocab, size=(n, width), dtype=np.int32)


# ---------------------------------------------------------------------------
# independent oracles (recount from raw data; no model internals)


def naive_count_table(blocks, k):
    """Sliding-window tally: context -> {token: count}, shortened at starts."""
    table: dict[tuple, dict[int, int]] = {}
    for block in np.asarray(blocks):
        ids = [int(x) for x in block]
        for i in range(len(ids)):
            ctx = tuple(ids[max(0, i - (k - 1)) : i])
            row = table.setdefault(ctx, {})
            row[ids[i]] = row.get(ids[i], 0) + 1
    return table


def naive_event_prob(table, k, alpha, vocab_size, ids, i):
    """Longest-suffix backoff probability of ids[i], in linear space."""
    lo = max(0, i - (k - 1))
    for s in range(lo, i + 1):
        row = table.get(tuple(ids[s:i]))
        if row:
            total = sum(row.values())
            return (row.get(ids[i], 0) + alpha) / (total + alpha * vocab_size)
    return 1.0 / vocab_size


def naive_block_log_prob(table, k, alpha, vocab_size, block):
    """Per-position log scoring, independent of the packed-table kernels."""
    ids = [int(x) for x in block]
    return sum(
        math.log(naive_event_prob(table, k, alpha, vocab_size, ids, i))
        for i in range(len(ids))
    )


def naive_block_prob_linear(table, k, alpha, vocab_size, block):
    """Linear-space product (safe only for short blocks)."""
    ids = [int(x) for x in block]
    prob = 1.0
    for i in range(len(ids)):
        prob *= naive_event_prob(table, k, alpha, vocab_size, ids, i)
    return prob
