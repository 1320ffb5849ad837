"""Ecosystem loop: segmentation, iteration dynamics, conservation, M=1."""

import math

import numpy as np
import pytest

from ecolm import ecosystem, gen, lm
from ecolm.corpus import CorpusSplits
from ecolm.ecosystem import EcosystemConfig, IterationRecord
from ecolm.errors import ConfigError

from conftest import random_blocks


def tiny_splits(n_train=24, width=8, vocab=9, seed=0):
    rng = np.random.default_rng(seed)
    return CorpusSplits(
        train_gen=random_blocks(rng, n_train, width, vocab),
        validation=random_blocks(rng, 6, width, vocab),
        test=random_blocks(rng, 6, width, vocab),
        train_gen_index=np.arange(n_train),
    )


def tiny_config(m, iterations=2, seed=5, width=8, **kw):
    return EcosystemConfig(
        n_models=m,
        iterations=iterations,
        seed=seed,
        block_size=width,
        beam_width=3,
        k_grid=(2,),
        alpha_grid=(0.1, 0.01),
        **kw,
    )


def row_multiset(blocks):
    flat = np.ascontiguousarray(blocks, dtype=np.int32)
    keys = flat.view(np.dtype((np.void, flat.dtype.itemsize * flat.shape[1])))
    return sorted(keys.ravel().tolist())


def test_initialize_single_model_owns_everything():
    splits = tiny_splits()
    state = ecosystem.initialize(splits, tiny_config(1), vocab_size=9)
    assert len(state.generation_sets) == 1
    assert row_multiset(state.generation_sets[0]) == row_multiset(splits.train_gen)
    assert np.array_equal(state.shards[0].blocks, state.generation_sets[0])


def test_initialize_segments_disjoint_union():
    splits = tiny_splits(n_train=28)
    state = ecosystem.initialize(splits, tiny_config(4), vocab_size=9)
    sizes = [len(g) for g in state.generation_sets]
    assert sizes == [7, 7, 7, 7]
    union = np.concatenate(state.generation_sets)
    assert row_multiset(union) == row_multiset(splits.train_gen)


def test_initialize_deterministic():
    splits = tiny_splits()
    a = ecosystem.initialize(splits, tiny_config(4, seed=9), vocab_size=9)
    b = ecosystem.initialize(splits, tiny_config(4, seed=9), vocab_size=9)
    for ga, gb in zip(a.generation_sets, b.generation_sets):
        assert np.array_equal(ga, gb)
    c = ecosystem.initialize(splits, tiny_config(4, seed=10), vocab_size=9)
    assert any(
        not np.array_equal(ga, gc)
        for ga, gc in zip(a.generation_sets, c.generation_sets)
    )


def test_initialize_divisibility_error():
    splits = tiny_splits(n_train=25)
    with pytest.raises(ConfigError):
        ecosystem.initialize(splits, tiny_config(4), vocab_size=9)


def test_config_validation():
    with pytest.raises(ConfigError):
        tiny_config(0).validate()
    with pytest.raises(ConfigError):
        tiny_config(1, iterations=0).validate()
    with pytest.raises(ConfigError):
        EcosystemConfig(n_models=1, alpha_grid=(0.0,)).validate()
    with pytest.raises(ConfigError):
        EcosystemConfig(n_models=1, refit="sometimes").validate()


def test_iteration_conserves_token_budget():
    splits = tiny_splits(n_train=24)
    cfg = tiny_config(4, iterations=3)
    state = ecosystem.initialize(splits, cfg, vocab_size=9)
    n_per = 6
    for _ in range(3):
        state, record = ecosystem.run_iteration(state, cfg)
        assert all(s.n == n_per for s in state.shards)
        assert sum(s.n for s in state.shards) == 24


def test_iteration_redistribution_is_permutation():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(3, iterations=1)
    state = ecosystem.initialize(splits, cfg, vocab_size=9)

    generated = []

    def spy_generator(model, generation_set, width, length):
        shard = gen.generate_dataset(model, generation_set, width, length)
        generated.append(shard.blocks)
        return shard

    new_state, _ = ecosystem.run_iteration(state, cfg, generator=spy_generator)
    pooled_before = np.concatenate(generated)
    pooled_after = np.concatenate([s.blocks for s in new_state.shards])
    assert row_multiset(pooled_before) == row_multiset(pooled_after)


def test_iteration_record_mean_invariant():
    splits = tiny_splits(n_train=24)
    cfg = tiny_config(4)
    state = ecosystem.initialize(splits, cfg, vocab_size=9)
    _, record = ecosystem.run_iteration(state, cfg)
    assert record.mu == pytest.approx(
        math.fsum(record.per_model_ppl) / len(record.per_model_ppl), abs=1e-12
    )
    assert len(record.per_model_ppl) == 4
    assert len(record.support) == 4
    assert record.selected[0][0] == 2  # k from the singleton grid


def test_fixed_sets_never_change():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(2, iterations=3)
    state = ecosystem.initialize(splits, cfg, vocab_size=9)
    gen_sets = [g.copy() for g in state.generation_sets]
    valid = state.validation_set.copy()
    evaluation = state.evaluation_set.copy()
    for _ in range(3):
        state, _ = ecosystem.run_iteration(state, cfg)
        for before, now in zip(gen_sets, state.generation_sets):
            assert np.array_equal(before, now)
        assert np.array_equal(valid, state.validation_set)
        assert np.array_equal(evaluation, state.evaluation_set)


def test_zero_error_stub_round_trips_generation_data():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(2, iterations=1)
    state = ecosystem.initialize(splits, cfg, vocab_size=9)
    new_state, record = ecosystem.run_iteration(
        state, cfg, generator=gen.cyclic_successor_generator
    )
    original = np.concatenate(state.generation_sets)
    redistributed = np.concatenate([s.blocks for s in new_state.shards])
    assert row_multiset(original) == row_multiset(redistributed)
    assert record.support_pooled.recall == 1.0
    assert record.support_pooled.precision == 1.0
    for s in record.support:
        assert s.recall <= 1.0 and s.precision == 1.0


def test_run_emits_one_record_per_iteration():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(2, iterations=4)
    result = ecosystem.run(splits, cfg, vocab_size=9)
    assert len(result.records) == 4
    assert [r.t for r in result.records] == [0, 1, 2, 3]
    assert result.baseline is None
    assert result.aggregated_ppl == pytest.approx(
        math.fsum(r.mu for r in result.records) / 4
    )


def test_run_single_step_matches_direct_fit():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(1, iterations=1)
    result = ecosystem.run(splits, cfg, vocab_size=9)
    model = lm.select_model(
        splits.train_gen, splits.validation, cfg.k_grid, cfg.alpha_grid,
        vocab_size=9,
    )
    _, mu = lm.perplexity(model, splits.test)
    assert result.records[0].mu == pytest.approx(mu, abs=1e-12)


def test_run_baseline_record():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(2, iterations=1, baseline=True)
    result = ecosystem.run(splits, cfg, vocab_size=9)
    assert result.baseline is not None
    assert result.baseline.t == -1
    assert len(result.baseline.per_model_ppl) == 1
    # the baseline model sees all the data the segmented models share
    assert result.baseline.support == ()


def test_run_is_deterministic():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(2, iterations=3, seed=77)
    a = ecosystem.run(splits, cfg, vocab_size=9)
    b = ecosystem.run(splits, cfg, vocab_size=9)
    assert [r.mu for r in a.records] == [r.mu for r in b.records]
    assert [r.dist.iqr for r in a.records] == [r.dist.iqr for r in b.records]


def test_m1_loop_equals_direct_self_training():
    splits = tiny_splits(n_train=12, seed=3)
    cfg = tiny_config(1, iterations=4, seed=13)
    state = ecosystem.initialize(splits, cfg, vocab_size=9)
    loop_models = []
    for _ in range(cfg.iterations):
        state, _ = ecosystem.run_iteration(state, cfg)
        loop_models.append(state.models[0])

    # direct self-training without the pooling machinery: same data multiset,
    # different block order, which count fitting ignores
    shard = splits.train_gen
    direct_models = []
    for _ in range(cfg.iterations):
        model = lm.select_model(
            shard, splits.validation, cfg.k_grid, cfg.alpha_grid, vocab_size=9
        )
        direct_models.append(model)
        shard = gen.generate_dataset(
            model, splits.train_gen, width=cfg.beam_width, length=cfg.block_size
        ).blocks

    for ours, direct in zip(loop_models, direct_models):
        assert lm.models_identical(ours, direct)


def test_accumulate_mode_carries_history():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(2, iterations=2, refit="accumulate", decay=0.5)
    state = ecosystem.initialize(splits, cfg, vocab_size=9)
    state, _ = ecosystem.run_iteration(state, cfg)  # no previous model: fresh
    t0_events = sum(
        state.models[0].ctx_total(c) for c in state.models[0].contexts()
    )
    assert t0_events == 6 * 8
    state, _ = ecosystem.run_iteration(state, cfg)  # decayed carryover
    t1_events = sum(
        state.models[0].ctx_total(c) for c in state.models[0].contexts()
    )
    assert t1_events == pytest.approx(6 * 8 + 0.5 * 6 * 8)


def test_failing_generator_leaves_state_usable():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(2, iterations=1)
    state = ecosystem.initialize(splits, cfg, vocab_size=9)
    before = [s.blocks.copy() for s in state.shards]

    def broken(model, generation_set, width, length):
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        ecosystem.run_iteration(state, cfg, generator=broken)
    for old, current in zip(before, state.shards):
        assert np.array_equal(old, current.blocks)
    assert state.t == 0


def test_record_json_round_trip():
    splits = tiny_splits(n_train=12)
    cfg = tiny_config(2, iterations=1)
    state = ecosystem.initialize(splits, cfg, vocab_size=9)
    _, record = ecosystem.run_iteration(state, cfg)
    clone = IterationRecord.from_dict(record.to_dict())
    assert clone.mu == record.mu
    assert clone.per_model_ppl == record.per_model_ppl
    assert clone.dist == record.dist
    assert clone.support == record.support
    assert clone.support_pooled == record.support_pooled
