"""Quantitative measures: diversity, perplexity aggregation, support overlap.

All aggregations use exactly-rounded summation (``math.fsum``), so results do
not depend on summation order and are reproducible to the last bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import lm
from .errors import DomainError

# fixed log-spaced histogram bins for perplexity distributions: 20 bins per
# decade from 1 to 1e8
HIST_EDGES = np.logspace(0.0, 8.0, 161)


@dataclass(frozen=True)
class DiversityProfile:
    """Weights over ecosystem members and their Hill-Shannon diversity."""

    weights: tuple[float, ...]
    value: float


@dataclass(frozen=True)
class SupportStats:
    """Distinct n-gram overlap between a generated shard and a reference."""

    recall: float
    precision: float
    order: int


@dataclass(frozen=True)
class DistSummary:
    """Summary of a pooled per-sequence perplexity sample."""

    count: int
    mean: float
    std: float
    q25: float
    median: float
    q75: float
    iqr: float
    log_iqr: float
    hist: tuple[int, ...]

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["hist"] = list(self.hist)
        return d

    @staticmethod
    def from_dict(d: dict) -> "DistSummary":
        d = dict(d)
        d["hist"] = tuple(d["hist"])
        return DistSummary(**d)


def hill_shannon(weights) -> float:
    """Effective number of equally common members: exp of Shannon entropy.

    Weights are normalized if they do not already sum to 1; zero weights
    contribute nothing.  Equals the member count exactly for equal weights.
    """
    w = [float(x) for x in weights]
    if any(x < 0 for x in w):
        raise DomainError("weights must be non-negative")
    s = math.fsum(w)
    if s <= 0:
        raise DomainError("weights must not be all zero")
    if abs(s - 1.0) > 1e-9:
        w = [x / s for x in w]
    entropy = -math.fsum(x * math.log(x) for x in w if x > 0)
    return math.exp(entropy)


def diversity_profile(weights) -> DiversityProfile:
    return DiversityProfile(tuple(float(x) for x in weights), hill_shannon(weights))


def ecosystem_mean(per_model_means) -> float:
    """Arithmetic mean of the per-model mean perplexities for one iteration."""
    vals = [float(x) for x in per_model_means]
    if not vals:
        raise ValueError("need at least one per-model mean")
    return math.fsum(vals) / len(vals)


def aggregated_mean(per_iteration_means) -> float:
    """Arithmetic mean of the ecosystem means across iterations."""
    vals = [float(x) for x in per_iteration_means]
    if not vals:
        raise ValueError("need at least one iteration mean")
    return math.fsum(vals) / len(vals)


def perplexity_rate(trajectory) -> float:
    """Least-squares slope of the trajectory over its final half.

    The window is the last ceil(T/2) points, never fewer than two.
    """
    vals = [float(x) for x in trajectory]
    if len(vals) < 2:
        raise ValueError("rate needs at least two points")
    window = max(2, math.ceil(len(vals) / 2))
    tail = vals[-window:]
    xs = list(range(len(tail)))
    x_mean = math.fsum(xs) / len(xs)
    y_mean = math.fsum(tail) / len(tail)
    sxy = math.fsum((x - x_mean) * (y - y_mean) for x, y in zip(xs, tail))
    sxx = math.fsum((x - x_mean) ** 2 for x in xs)
    return sxy / sxx


def _distinct_grams(blocks: np.ndarray, order: int) -> np.ndarray:
    """Distinct length-``order`` windows of the blocks, as void keys."""
    blocks = np.ascontiguousarray(blocks, dtype=np.int32)
    if blocks.shape[1] < order:
        return np.empty(0, dtype=np.void)
    windows = sliding_window_view(blocks, order, axis=1).reshape(-1, order)
    flat = np.ascontiguousarray(windows)
    keys = flat.view(np.dtype((np.void, flat.dtype.itemsize * order))).ravel()
    return np.unique(keys)


def support_stats(generated, reference, order: int = 3) -> SupportStats:
    """Distinct-gram recall and precision of generated data vs a reference.

    Grams are contiguous windows within blocks (never crossing block
    boundaries).  Recall is the fraction of reference gram types covered;
    precision the fraction of generated gram types found in the reference.
    """
    if order < 1:
        raise ValueError("gram order must be >= 1")
    gen_blocks = generated.blocks if hasattr(generated, "blocks") else generated
    ref = np.asarray(reference)
    if ref.size == 0:
        raise DomainError("reference must be non-empty")
    gen_types = _distinct_grams(np.asarray(gen_blocks), order)
    ref_types = _distinct_grams(ref, order)
    if len(ref_types) == 0:
        raise DomainError("reference contains no grams of the requested order")
    shared = len(np.intersect1d(gen_types, ref_types, assume_unique=True))
    recall = shared / len(ref_types)
    precision = shared / len(gen_types) if len(gen_types) else 0.0
    return SupportStats(recall=recall, precision=precision, order=order)


def summarize_sample(sample: np.ndarray) -> DistSummary:
    """Deterministic summary of a perplexity sample (fixed log-spaced bins).

    Quantiles use the inverted-CDF method, which is exactly invariant under
    sample duplication (pooling M identical models leaves the quartiles
    unchanged).
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty sample")
    vals = x.tolist()
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    q25, median, q75 = np.quantile(
        x, [0.25, 0.5, 0.75], method="inverted_cdf"
    ).tolist()
    lq25, lq75 = np.quantile(
        np.log(x), [0.25, 0.75], method="inverted_cdf"
    ).tolist()
    clipped = np.clip(x, HIST_EDGES[0], HIST_EDGES[-1])
    hist, _ = np.histogram(clipped, HIST_EDGES)
    return DistSummary(
        count=len(vals),
        mean=mean,
        std=math.sqrt(var),
        q25=q25,
        median=median,
        q75=q75,
        iqr=q75 - q25,
        log_iqr=lq75 - lq25,
        hist=tuple(int(c) for c in hist),
    )


def perplexity_distribution(models, reference) -> tuple[np.ndarray, DistSummary]:
    """Pooled per-sequence perplexities of every model over a reference set."""
    models = list(models)
    ref = np.asarray(reference)
    if not models or ref.size == 0:
        raise ValueError("need at least one model and one reference sequence")
    samples = [lm.perplexity(m, ref)[0] for m in models]
    pooled = np.concatenate(samples)
    return pooled, summarize_sample(pooled)
