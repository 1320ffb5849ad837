"""The training-generation loop over a collection of models.

Each iteration fits every model on its current shard (with validation-driven
hyperparameter selection), measures perplexity and support metrics, generates
artificial data from every model's fixed generation set, then pools all
generated blocks, shuffles them with a seeded permutation, and redistributes
them as equal contiguous segments for the next round.

Randomness is confined to two keyed streams derived from the run seed: the
initial segmentation permutation and the per-iteration pool shuffle.  Fitting,
scoring, and generation are fully deterministic, so an entire run is a pure
function of (corpus bytes, config).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import gen, lm, metrics
from .corpus import CorpusSplits, Shard
from .errors import ConfigError
from .lm import NGramModel
from .metrics import DistSummary, SupportStats

_SEGMENT_STREAM = 1
_SHUFFLE_STREAM = 2


@dataclass(frozen=True)
class EcosystemConfig:
    """Parameters of one ecosystem run."""

    n_models: int
    iterations: int = 10
    seed: int = 0
    block_size: int = 128
    beam_width: int = 5
    k_grid: tuple[int, ...] = (3,)
    alpha_grid: tuple[float, ...] = (0.1, 0.01, 0.001)
    refit: str = "fresh"
    decay: float = 0.0
    subset_fraction: float = 0.4
    support_order: int = 0  # 0 means: use max(k_grid)
    baseline: bool = False

    def validate(self) -> None:
        problems = []
        if self.n_models < 1:
            problems.append("n_models must be >= 1")
        if self.iterations < 1:
            problems.append("iterations must be >= 1")
        if self.block_size < 2:
            problems.append("block_size must be >= 2")
        if self.beam_width < 1:
            problems.append("beam_width must be >= 1")
        if not self.k_grid or any(k < 1 for k in self.k_grid):
            problems.append("k_grid must be non-empty with orders >= 1")
        if not self.alpha_grid or any(a <= 0 for a in self.alpha_grid):
            problems.append("alpha_grid must be non-empty with positive values")
        if self.refit not in lm.REFIT_MODES:
            problems.append(f"refit must be one of {lm.REFIT_MODES}")
        if not 0 <= self.decay < 1:
            problems.append("decay must lie in [0, 1)")
        if not 0 < self.subset_fraction <= 1:
            problems.append("subset_fraction must be in (0, 1]")
        if self.support_order < 0:
            problems.append("support_order must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def gram_order(self) -> int:
        return self.support_order if self.support_order else max(self.k_grid)


@dataclass
class EcosystemState:
    """Mutable-by-replacement state of a run; run_iteration returns a new one."""

    t: int
    models: list
    shards: list[Shard]
    generation_sets: list[np.ndarray]
    train_reference: np.ndarray
    validation_set: np.ndarray
    evaluation_set: np.ndarray
    vocab_size: int


@dataclass(frozen=True)
class IterationRecord:
    """All metrics for one iteration (or the t = -1 baseline)."""

    t: int
    per_model_ppl: tuple[float, ...]
    mu: float
    selected: tuple[tuple[int, float], ...]
    dist: DistSummary
    support: tuple[SupportStats, ...] = ()
    support_pooled: SupportStats | None = None
    duration: float = 0.0

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "per_model_ppl": list(self.per_model_ppl),
            "mu": self.mu,
            "selected": [[k, a] for k, a in self.selected],
            "dist": self.dist.to_dict(),
            "support": [
                {"recall": s.recall, "precision": s.precision, "order": s.order}
                for s in self.support
            ],
            "support_pooled": (
                None
                if self.support_pooled is None
                else {
                    "recall": self.support_pooled.recall,
                    "precision": self.support_pooled.precision,
                    "order": self.support_pooled.order,
                }
            ),
            "duration": self.duration,
        }

    @staticmethod
    def from_dict(d: dict) -> "IterationRecord":
        pooled = d.get("support_pooled")
        return IterationRecord(
            t=int(d["t"]),
            per_model_ppl=tuple(float(x) for x in d["per_model_ppl"]),
            mu=float(d["mu"]),
            selected=tuple((int(k), float(a)) for k, a in d["selected"]),
            dist=DistSummary.from_dict(d["dist"]),
            support=tuple(
                SupportStats(s["recall"], s["precision"], s["order"])
                for s in d.get("support", [])
            ),
            support_pooled=None
            if pooled is None
            else SupportStats(pooled["recall"], pooled["precision"], pooled["order"]),
            duration=float(d.get("duration", 0.0)),
        )


@dataclass
class RunResult:
    config: EcosystemConfig
    records: list[IterationRecord]
    baseline: IterationRecord | None = None

    @property
    def trajectory(self) -> list[float]:
        return [r.mu for r in self.records]

    @property
    def aggregated_ppl(self) -> float:
        return metrics.aggregated_mean(self.trajectory)

    @property
    def final_rate(self) -> float:
        return metrics.perplexity_rate(self.trajectory)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def initialize(
    splits: CorpusSplits, cfg: EcosystemConfig, vocab_size: int | None = None
) -> EcosystemState:
    """Segment the sampled train set into M fixed generation datasets.

    Blocks are permuted with a seeded stream and split into M equal contiguous
    segments; each model's first training shard is a copy of its segment.
    ``vocab_size`` defaults to the largest id seen across the splits plus one.
    """
    cfg.validate()
    train = splits.train_gen
    n_total = len(train)
    m = cfg.n_models
    if n_total == 0 or n_total % m != 0:
        raise ConfigError(
            f"model count {m} must divide the train block count {n_total}"
        )
    if vocab_size is None:
        vocab_size = (
            max(int(train.max()), int(splits.validation.max()), int(splits.test.max()))
            + 1
        )
    per = n_total // m
    perm = _stream(cfg.seed, _SEGMENT_STREAM).permutation(n_total)
    permuted = train[perm]
    generation_sets = [
        permuted[i * per : (i + 1) * per].copy() for i in range(m)
    ]
    shards = [Shard(blocks=g.copy(), owner=i) for i, g in enumerate(generation_sets)]
    return EcosystemState(
        t=0,
        models=[None] * m,
        shards=shards,
        generation_sets=generation_sets,
        train_reference=np.concatenate(generation_sets),
        validation_set=splits.validation,
        evaluation_set=splits.test,
        vocab_size=int(vocab_size),
    )


def _fit_all(state: EcosystemState, cfg: EcosystemConfig) -> list[NGramModel]:
    models = []
    for m in range(cfg.n_models):
        prev = state.models[m]
        mode = cfg.refit if prev is not None else "fresh"
        models.append(
            lm.select_model(
                state.shards[m],
                state.validation_set,
                cfg.k_grid,
                cfg.alpha_grid,
                mode=mode,
                prev=prev,
                decay=cfg.decay,
                vocab_size=state.vocab_size,
            )
        )
    return models


def run_iteration(
    state: EcosystemState, cfg: EcosystemConfig, generator=None
) -> tuple[EcosystemState, IterationRecord]:
    """One full step: fit, measure, generate, pool-shuffle-redistribute.

    Returns the successor state and the record for the current t.  On any
    error the input state is unchanged (nothing is mutated in place).
    """
    if generator is None:
        generator = gen.generate_dataset
    started = time.perf_counter()
    m_count = cfg.n_models
    models = _fit_all(state, cfg)

    per_model_ppl = []
    for model in models:
        _, mean_ppl = lm.perplexity(model, state.evaluation_set)
        per_model_ppl.append(mean_ppl)
    mu = metrics.ecosystem_mean(per_model_ppl)
    _, dist = metrics.perplexity_distribution(models, state.train_reference)

    artificial = []
    for m in range(m_count):
        shard = generator(
            models[m],
            state.generation_sets[m],
            width=cfg.beam_width,
            length=cfg.block_size,
        )
        blocks = shard.blocks if isinstance(shard, Shard) else np.asarray(shard)
        artificial.append(blocks)

    g = cfg.gram_order
    support = tuple(
        metrics.support_stats(a, state.train_reference, g) for a in artificial
    )
    pooled_blocks = np.concatenate(artificial)
    support_pooled = metrics.support_stats(pooled_blocks, state.train_reference, g)

    perm = _stream(cfg.seed, _SHUFFLE_STREAM, state.t).permutation(len(pooled_blocks))
    shuffled = pooled_blocks[perm]
    per = len(shuffled) // m_count
    new_shards = [
        Shard(blocks=shuffled[i * per : (i + 1) * per].copy(), owner=i)
        for i in range(m_count)
    ]

    record = IterationRecord(
        t=state.t,
        per_model_ppl=tuple(per_model_ppl),
        mu=mu,
        selected=tuple((mod.order, mod.alpha) for mod in models),
        dist=dist,
        support=support,
        support_pooled=support_pooled,
        duration=time.perf_counter() - started,
    )
    new_state = replace(
        state, t=state.t + 1, models=models, shards=new_shards
    )
    return new_state, record


def baseline_record(splits: CorpusSplits, state: EcosystemState,
                    cfg: EcosystemConfig) -> IterationRecord:
    """A t = -1 record: one model fitted on the full unsegmented train sample."""
    started = time.perf_counter()
    model = lm.select_model(
        splits.train_gen,
        state.validation_set,
        cfg.k_grid,
        cfg.alpha_grid,
        vocab_size=state.vocab_size,
    )
    _, mean_ppl = lm.perplexity(model, state.evaluation_set)
    _, dist = metrics.perplexity_distribution([model], state.train_reference)
    return IterationRecord(
        t=-1,
        per_model_ppl=(mean_ppl,),
        mu=mean_ppl,
        selected=((model.order, model.alpha),),
        dist=dist,
        duration=time.perf_counter() - started,
    )


def run(
    splits: CorpusSplits,
    cfg: EcosystemConfig,
    generator=None,
    on_record=None,
    vocab_size: int | None = None,
) -> RunResult:
    """Initialize and execute T iterations, emitting one record per step."""
    state = initialize(splits, cfg, vocab_size=vocab_size)
    baseline = None
    if cfg.baseline:
        baseline = baseline_record(splits, state, cfg)
        if on_record is not None:
            on_record(baseline)
    records = []
    for _ in range(cfg.iterations):
        state, record = run_iteration(state, cfg, generator=generator)
        records.append(record)
        if on_record is not None:
            on_record(record)
    return RunResult(config=cfg, records=records, baseline=baseline)
