"""Create a plain-text corpus for demo runs, without any downloads.

Two modes:
  zipf        synthetic pseudo-word text with a Zipf-like type distribution
              (fully deterministic given the seed)
  docstrings  English prose harvested from docstrings of locally installed
              packages (deterministic for a fixed installation)

Usage:
  python scripts/make_demo_corpus.py --out corpus.txt --tokens 200000
  python scripts/make_demo_corpus.py --mode docstrings --out corpus.txt
"""

from __future__ import annotations

import argparse
import importlib
import inspect
from pathlib import Path

import numpy as np

DOC_MODULES = [
    "numpy", "numpy.linalg", "numpy.fft", "numpy.random", "numpy.ma",
    "scipy.stats", "scipy.signal", "scipy.optimize", "scipy.interpolate",
    "scipy.linalg", "scipy.sparse", "scipy.spatial", "scipy.ndimage",
    "scipy.integrate", "scipy.special",
    "json", "argparse", "logging", "unittest", "difflib", "decimal",
    "statistics", "sqlite3", "asyncio", "pathlib", "datetime", "collections",
    "itertools", "functools", "subprocess", "multiprocessing", "pickle",
    "csv", "re", "textwrap", "random", "heapq", "threading",
]


def zipf_corpus(n_tokens: int, n_types: int, seed: int) -> str:
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, n_types + 1, dtype=np.float64)
    probs = 1.0 / (ranks + 2.7) ** 1.07
    probs /= probs.sum()
    ids = rng.choice(n_types, size=n_tokens, p=probs)
    words = [f"w{i:04d}" for i in ids]
    lines = [" ".join(words[i : i + 20]) for i in range(0, len(words), 20)]
    return "\n".join(lines)


def docstring_corpus(min_tokens: int) -> str:
    pieces, seen, count = [], set(), 0
    for name in DOC_MODULES:
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


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", choices=("zipf", "docstrings"), default="zipf")
    ap.add_argument("--out", type=Path, default=Path("corpus.txt"))
    ap.add_argument("--tokens", type=int, default=200_000)
    ap.add_argument("--types", type=int, default=3000, help="zipf vocabulary size")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if args.mode == "zipf":
        text = zipf_corpus(args.tokens, args.types, args.seed)
    else:
        text = docstring_corpus(args.tokens)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(text, encoding="utf-8")
    print(f"wrote {len(text.split())} tokens to {args.out}")


if __name__ == "__main__":
    main()
