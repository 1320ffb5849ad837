"""Benchmark the compiled kernel lane against the pure-Python fallback.

Builds a synthetic corpus, fits a trigram model, and times block scoring and
beam-search generation on both lanes, verifying bit-identical outputs along
the way.

Usage:
  python benchmarks/bench_kernels.py [--blocks 200] [--block-size 128]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ecolm import corpus, lm
from ecolm._kernels import _pure

try:
    from ecolm._kernels import _ckern
except ImportError:
    _ckern = None


def zipf_stream(n_tokens, n_types, seed):
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, n_types + 1, dtype=np.float64)
    probs = 1.0 / (ranks + 2.7) ** 1.07
    probs /= probs.sum()
    return rng.choice(n_types, size=n_tokens, p=probs).astype(np.int32)


def timed(fn, *args, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return result, best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--blocks", type=int, default=200)
    ap.add_argument("--block-size", type=int, default=128)
    ap.add_argument("--vocab", type=int, default=5000)
    ap.add_argument("--beam-width", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    stream = zipf_stream(args.blocks * args.block_size * 2, args.vocab, args.seed)
    blocks = corpus.blockify(stream, args.block_size)
    train, prompts = blocks[: args.blocks], blocks[args.blocks : 2 * args.blocks]
    model = lm.fit(train, k=3, alpha=0.01, vocab_size=args.vocab)
    print(
        f"model: k=3 V={args.vocab} contexts={model.n_contexts} "
        f"train={args.blocks}x{args.block_size}"
    )

    lanes = [("pure", _pure)]
    if _ckern is not None:
        lanes.append(("compiled", _ckern))
    else:
        print("compiled lane unavailable; timing pure lane only")

    results = {}
    for label, lane in lanes:
        score, t_score = timed(lane.block_log_probs, model, prompts)
        (conts, beam_scores), t_beam = timed(
            lambda: lane.beam_continuations(
                model, prompts, args.beam_width, args.block_size
            ),
            repeats=1 if label == "pure" else 3,
        )
        results[label] = (score, conts, beam_scores, t_score, t_beam)
        print(
            f"{label:>9}: score {args.blocks} blocks in {t_score * 1e3:8.1f} ms | "
            f"beam-generate {args.blocks} blocks in {t_beam * 1e3:8.1f} ms"
        )

    if len(results) == 2:
        p, c = results["pure"], results["compiled"]
        assert np.array_equal(p[0], c[0]), "lane mismatch in scoring"
        assert np.array_equal(p[1], c[1]), "lane mismatch in beam continuations"
        assert np.array_equal(p[2], c[2]), "lane mismatch in beam scores"
        print(
            f"lanes bit-identical; speedup: score x{p[3] / c[3]:.1f}, "
            f"beam x{p[4] / c[4]:.1f}"
        )


if __name__ == "__main__":
    main()
