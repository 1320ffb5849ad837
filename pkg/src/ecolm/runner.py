"""Run orchestration: corpus preparation, persistence, sweeps, reports.

A run directory contains the config snapshot, the vocabulary, one JSON record
per iteration (``records.jsonl``), a ``summary.csv`` table, and a COMPLETE
marker.  A sweep directory holds one run directory per (M, seed) combination
under ``runs/`` plus the combined diversity table.  Completed runs are
detected by marker plus snapshot match, so interrupted sweeps resume without
redoing finished work.

All emitted numbers are formatted with ``repr``; files are byte-identical
across executions of the same configuration.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import hashlib
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import corpus, ecosystem, gen, metrics
from .config import RunConfig, SweepSpec, snapshot_run_config
from .ecosystem import IterationRecord
from .errors import RecordError

SUMMARY_VERSION = "# ecolm-summary v1"
SWEEP_VERSION = "# ecolm-sweep v1"
SHARD_VERSION = "ecolm-shard-v1"
COMPLETE_MARKER = "COMPLETE"
FAILED_MARKER = "FAILED"


def _fmt(x: float) -> str:
    return repr(float(x))


def prepare_corpus(cfg: RunConfig):
    """Ingest, blockify, and split per the corpus section of the config."""
    cc, eco = cfg.corpus, cfg.eco
    if cc.text is not None:
        raw = Path(cc.text).read_text(encoding="utf-8")
        vocab, stream = corpus.ingest_text(raw, cc.min_token_freq)
        blocks = corpus.blockify(stream, eco.block_size)
        splits = corpus.make_splits(
            blocks,
            fractions=tuple(cc.fractions),
            subset_fraction=eco.subset_fraction,
            seed=cc.seed,
        )
        return vocab, splits
    # explicit per-split files: vocabulary comes from the train text
    train_raw = Path(cc.train).read_text(encoding="utf-8")
    vocab, train_stream = corpus.ingest_text(train_raw, cc.min_token_freq)
    train_blocks = corpus.blockify(train_stream, eco.block_size)
    train_gen, idx = corpus.subsample_blocks(
        train_blocks, eco.subset_fraction, cc.seed
    )
    valid_blocks = corpus.blockify(
        vocab.encode(Path(cc.validation).read_text(encoding="utf-8").split()),
        eco.block_size,
    )
    test_blocks = corpus.blockify(
        vocab.encode(Path(cc.test).read_text(encoding="utf-8").split()),
        eco.block_size,
    )
    splits = corpus.CorpusSplits(
        train_gen=train_gen,
        validation=valid_blocks,
        test=test_blocks,
        train_gen_index=idx,
    )
    return vocab, splits


def write_shard_file(path: Path, blocks: np.ndarray, vocab_hash: str,
                     model_id: int, t: int) -> None:
    """Token-id block file: one block per line, space-separated ids."""
    lines = [f"# {SHARD_VERSION} vocab={vocab_hash} model={model_id} t={t}"]
    lines.extend(" ".join(str(int(x)) for x in row) for row in blocks)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_shard_file(path: Path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or SHARD_VERSION not in lines[0]:
        raise RecordError(f"not a shard file: {path}")
    return np.array(
        [[int(x) for x in line.split()] for line in lines[1:]], dtype=np.int32
    )


def _summary_rows(cfg: RunConfig, records, baseline) -> str:
    m = cfg.eco.n_models
    header = (
        ["t", "M", "D", "mu_t"]
        + [f"mu_m_{i}" for i in range(m)]
        + ["recall", "precision", "iqr", "std"]
    )
    lines = [SUMMARY_VERSION, ",".join(header)]
    rows = ([baseline] if baseline is not None else []) + list(records)
    for r in rows:
        sup = r.support_pooled
        cells = [str(r.t), str(m), _fmt(m), _fmt(r.mu)]
        per_model = [_fmt(x) for x in r.per_model_ppl]
        cells += per_model + [""] * (m - len(per_model))
        cells += [
            _fmt(sup.recall) if sup else "",
            _fmt(sup.precision) if sup else "",
            _fmt(r.dist.iqr),
            _fmt(r.dist.std),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def execute_run(cfg: RunConfig, out_dir: str | Path) -> ecosystem.RunResult:
    """Run one ecosystem and persist records, summary, and snapshot.

    Partial records survive a failing iteration alongside a FAILED marker.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = snapshot_run_config(cfg)
    (out / "config.cfg").write_text(snapshot, encoding="utf-8")
    for marker in (COMPLETE_MARKER, FAILED_MARKER):
        (out / marker).unlink(missing_ok=True)
    for stale in ("shards", "models"):
        if (out / stale).is_dir():
            for f in (out / stale).iterdir():
                f.unlink()

    vocab, splits = prepare_corpus(cfg)
    vocab.save(out / "vocab.txt")
    vocab_hash = hashlib.sha256(
        (out / "vocab.txt").read_bytes()
    ).hexdigest()[:12]

    generator = gen.generate_dataset
    if cfg.persist_shards:
        shard_dir = out / "shards"
        shard_dir.mkdir(exist_ok=True)
        calls = {"n": 0}

        def generator(model, generation_set, width, length):
            shard = gen.generate_dataset(model, generation_set, width, length)
            t, m = divmod(calls["n"], cfg.eco.n_models)
            calls["n"] += 1
            write_shard_file(
                shard_dir / f"t{t:04d}_m{m:02d}.txt", shard.blocks, vocab_hash, m, t
            )
            return shard

    records: list[IterationRecord] = []
    baseline = None
    with (out / "records.jsonl").open("w", encoding="utf-8") as rec_file:

        def persist(record: IterationRecord) -> None:
            rec_file.write(json.dumps(record.to_dict()) + "\n")
            rec_file.flush()

        try:
            state = ecosystem.initialize(splits, cfg.eco, vocab_size=vocab.size)
            if cfg.eco.baseline:
                baseline = ecosystem.baseline_record(splits, state, cfg.eco)
                persist(baseline)
            for t in range(cfg.eco.iterations):
                state, record = ecosystem.run_iteration(
                    state, cfg.eco, generator=generator
                )
                records.append(record)
                persist(record)
                if cfg.persist_models:
                    model_dir = out / "models"
                    model_dir.mkdir(exist_ok=True)
                    for m, model in enumerate(state.models):
                        model.save(model_dir / f"t{t:04d}_m{m:02d}.txt")
        except Exception as exc:
            (out / FAILED_MARKER).write_text(f"{exc}\n", encoding="utf-8")
            raise

    (out / "summary.csv").write_text(
        _summary_rows(cfg, records, baseline), encoding="utf-8"
    )
    (out / COMPLETE_MARKER).write_text("ok\n", encoding="utf-8")
    return ecosystem.RunResult(config=cfg.eco, records=records, baseline=baseline)


def read_records(run_dir: str | Path):
    """Parse records.jsonl back into IterationRecord objects."""
    path = Path(run_dir) / "records.jsonl"
    if not path.is_file():
        raise RecordError(f"missing records file: {path}")
    records, baseline = [], None
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        try:
            rec = IterationRecord.from_dict(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise RecordError(f"{path}: bad record on line {i + 1}: {exc}") from exc
        if rec.t < 0:
            baseline = rec
        else:
            records.append(rec)
    if not records:
        raise RecordError(f"{path}: contains no iteration records")
    return records, baseline


def run_is_complete(run_dir: Path, snapshot: str) -> bool:
    cfg_file = run_dir / "config.cfg"
    return (
        (run_dir / COMPLETE_MARKER).is_file()
        and cfg_file.is_file()
        and cfg_file.read_text(encoding="utf-8") == snapshot
    )


def _sweep_worker(args) -> str | None:
    cfg, run_dir = args
    try:
        execute_run(cfg, run_dir)
        return None
    except Exception as exc:  # recorded, sweep continues
        return f"{exc.__class__.__name__}: {exc}"


def execute_sweep(
    spec: SweepSpec, out_dir: str | Path, workers: int = 1
) -> list[tuple[RunConfig, Path, str | None]]:
    """Run every (M, seed) combination, skipping completed run directories."""
    out = Path(out_dir)
    runs_root = out / "runs"
    runs_root.mkdir(parents=True, exist_ok=True)

    combos = spec.combos()
    pending, results = [], []
    for cfg in combos:
        run_dir = runs_root / cfg.label
        if run_is_complete(run_dir, snapshot_run_config(cfg)):
            results.append((cfg, run_dir, None))
        else:
            pending.append((cfg, run_dir))

    if workers > 1 and len(pending) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            errors = list(pool.map(_sweep_worker, pending))
    else:
        errors = [_sweep_worker(job) for job in pending]
    results.extend(
        (cfg, run_dir, err) for (cfg, run_dir), err in zip(pending, errors)
    )
    results.sort(key=lambda r: (r[0].eco.n_models, r[0].eco.seed))

    _write_sweep_tables(out, results)
    failures = [(c, d, e) for c, d, e in results if e is not None]
    if failures:
        (out / "failures.txt").write_text(
            "".join(f"{d.name}: {e}\n" for _, d, e in failures), encoding="utf-8"
        )
    return results


def _write_sweep_tables(out: Path, results) -> None:
    lines = [SWEEP_VERSION, "M,D,seed,mu_T,final_rate"]
    by_m: dict[int, list[float]] = {}
    for cfg, run_dir, err in results:
        if err is not None:
            continue
        records, _ = read_records(run_dir)
        traj = [r.mu for r in records]
        mu_agg = metrics.aggregated_mean(traj)
        rate = metrics.perplexity_rate(traj) if len(traj) >= 2 else 0.0
        m = cfg.eco.n_models
        # equal-budget members have equal weights, so diversity equals M
        lines.append(
            f"{m},{_fmt(m)},{cfg.eco.seed},{_fmt(mu_agg)},{_fmt(rate)}"
        )
        by_m.setdefault(m, []).append(mu_agg)
    (out / "sweep_summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    curve = [SWEEP_VERSION, "D,mu_T_mean,n_seeds"]
    for m in sorted(by_m):
        vals = by_m[m]
        curve.append(f"{_fmt(m)},{_fmt(math.fsum(vals) / len(vals))},{len(vals)}")
    (out / "d_vs_mu.csv").write_text("\n".join(curve) + "\n", encoding="utf-8")


def _collect_run_dirs(target: Path) -> list[Path]:
    if (target / "records.jsonl").is_file():
        return [target]
    runs_root = target / "runs"
    if runs_root.is_dir():
        dirs = sorted(
            d for d in runs_root.iterdir() if (d / "records.jsonl").is_file()
        )
        if dirs:
            return dirs
    raise RecordError(f"no run records under {target}")


def _run_meta(run_dir: Path) -> tuple[int, int]:
    # records are self-sufficient for reporting; read just M and the seed so
    # a report never depends on the corpus files still existing
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string((run_dir / "config.cfg").read_text(encoding="utf-8"))
        return int(parser["ecosystem"]["models"]), int(parser["ecosystem"]["seed"])
    except (OSError, KeyError, ValueError, configparser.Error) as exc:
        raise RecordError(f"unreadable config snapshot in {run_dir}: {exc}") from exc


def write_report(target_dir: str | Path) -> Path:
    """Emit plot-ready trajectory, distribution, and diversity-curve data."""
    target = Path(target_dir)
    run_dirs = sorted(_collect_run_dirs(target), key=_run_meta)
    report = target / "report"
    report.mkdir(exist_ok=True)

    traj_lines = ["M,seed,t,mu"]
    first_lines = ["M,seed,bin_lo,bin_hi,count"]
    last_lines = ["M,seed,bin_lo,bin_hi,count"]
    summary_lines = []
    curve: dict[int, list[float]] = {}
    for run_dir in run_dirs:
        m, seed = _run_meta(run_dir)
        records, baseline = read_records(run_dir)
        rows = ([baseline] if baseline else []) + records
        for r in rows:
            traj_lines.append(f"{m},{seed},{r.t},{_fmt(r.mu)}")
        edges = metrics.HIST_EDGES
        for lines, rec in ((first_lines, records[0]), (last_lines, records[-1])):
            for b, count in enumerate(rec.dist.hist):
                lines.append(
                    f"{m},{seed},{_fmt(edges[b])},{_fmt(edges[b + 1])},{count}"
                )
        traj = [r.mu for r in records]
        mu_agg = metrics.aggregated_mean(traj)
        curve.setdefault(m, []).append(mu_agg)
        rate = metrics.perplexity_rate(traj) if len(traj) >= 2 else 0.0
        sup0 = records[0].support_pooled
        supl = records[-1].support_pooled
        summary_lines.append(
            f"M={m} seed={seed}: mu_T={mu_agg:.4f} rate={rate:.4f} "
            f"iqr t0={records[0].dist.iqr:.4f} tN={records[-1].dist.iqr:.4f} "
            f"log_iqr t0={records[0].dist.log_iqr:.4f} "
            f"tN={records[-1].dist.log_iqr:.4f}"
            + (
                f" recall t0={sup0.recall:.4f} tN={supl.recall:.4f}"
                if sup0 and supl
                else ""
            )
        )

    (report / "trajectory.csv").write_text(
        "\n".join(traj_lines) + "\n", encoding="utf-8"
    )
    (report / "dist_first.csv").write_text(
        "\n".join(first_lines) + "\n", encoding="utf-8"
    )
    (report / "dist_last.csv").write_text(
        "\n".join(last_lines) + "\n", encoding="utf-8"
    )
    curve_lines = ["D,mu_T_mean,n_seeds"]
    for m in sorted(curve):
        vals = curve[m]
        curve_lines.append(f"{_fmt(m)},{_fmt(math.fsum(vals) / len(vals))},{len(vals)}")
    (report / "d_vs_mu.csv").write_text(
        "\n".join(curve_lines) + "\n", encoding="utf-8"
    )
    (report / "summary.txt").write_text(
        "\n".join(summary_lines) + "\n", encoding="utf-8"
    )
    return report


def apply_cli_overrides(cfg: RunConfig, args) -> RunConfig:
    """Fold command-line flags into a parsed config before snapshotting."""
    eco = cfg.eco
    if getattr(args, "seed", None) is not None:
        eco = replace(eco, seed=args.seed)
    if getattr(args, "baseline", False):
        eco = replace(eco, baseline=True)
    cfg = replace(cfg, eco=eco)
    if getattr(args, "persist_shards", False):
        cfg = replace(cfg, persist_shards=True)
    if getattr(args, "persist_models", False):
        cfg = replace(cfg, persist_models=True)
    return cfg
