"""Run and sweep configuration: a flat key-value file with sections.

The format is INI as understood by :mod:`configparser`.  A run config has
``[corpus]``, ``[ecosystem]`` and optional ``[output]`` sections; a sweep spec
adds ``[sweep]`` with the model counts and seeds to cross.  Relative paths are
resolved against the config file's directory, and snapshots are written with
absolute paths so they re-parse identically from anywhere.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .ecosystem import EcosystemConfig
from .errors import ConfigError


@dataclass(frozen=True)
class CorpusConfig:
    """Where the text comes from and how it is split."""

    text: str | None = None
    train: str | None = None
    validation: str | None = None
    test: str | None = None
    min_token_freq: int = 2
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 1234


@dataclass(frozen=True)
class RunConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    eco: EcosystemConfig = field(default_factory=lambda: EcosystemConfig(n_models=1))
    persist_shards: bool = False
    persist_models: bool = False

    @property
    def label(self) -> str:
        return f"M{self.eco.n_models}_seed{self.eco.seed}"


@dataclass(frozen=True)
class SweepSpec:
    base: RunConfig
    m_list: tuple[int, ...] = (1, 2, 4, 16)
    seeds: tuple[int, ...] = (0,)

    def combos(self) -> list[RunConfig]:
        from dataclasses import replace

        out = []
        for m in self.m_list:
            for s in self.seeds:
                eco = replace(self.base.eco, n_models=m, seed=s)
                out.append(replace(self.base, eco=eco))
        return out


class _SectionReader:
    """Typed access to one config section, accumulating per-key problems."""

    def __init__(self, parser, section, problems):
        self.section = section
        self.data = dict(parser[section]) if parser.has_section(section) else {}
        self.problems = problems

    def _take(self, key):
        return self.data.pop(key, None)

    def str_(self, key, default=None):
        raw = self._take(key)
        return raw if raw is not None else default

    def int_(self, key, default):
        raw = self._take(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            self.problems.append(f"{self.section}.{key}: not an integer: {raw!r}")
            return default

    def float_(self, key, default):
        raw = self._take(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            self.problems.append(f"{self.section}.{key}: not a number: {raw!r}")
            return default

    def bool_(self, key, default):
        raw = self._take(key)
        if raw is None:
            return default
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        self.problems.append(f"{self.section}.{key}: not a boolean: {raw!r}")
        return default

    def ints(self, key, default):
        raw = self._take(key)
        if raw is None:
            return default
        try:
            return tuple(int(x) for x in raw.replace(",", " ").split())
        except ValueError:
            self.problems.append(f"{self.section}.{key}: not an integer list: {raw!r}")
            return default

    def floats(self, key, default):
        raw = self._take(key)
        if raw is None:
            return default
        try:
            return tuple(float(x) for x in raw.replace(",", " ").split())
        except ValueError:
            self.problems.append(f"{self.section}.{key}: not a number list: {raw!r}")
            return default

    def finish(self):
        for key in self.data:
            self.problems.append(f"{self.section}.{key}: unknown key")


def _read_parser(path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return parser


def _resolve(base_dir: Path, value: str | None) -> str | None:
    if value is None:
        return None
    return str((base_dir / value).resolve())


def _build_run_config(parser, base_dir, problems) -> RunConfig:
    cs = _SectionReader(parser, "corpus", problems)
    corpus = CorpusConfig(
        text=_resolve(base_dir, cs.str_("text")),
        train=_resolve(base_dir, cs.str_("train")),
        validation=_resolve(base_dir, cs.str_("validation")),
        test=_resolve(base_dir, cs.str_("test")),
        min_token_freq=cs.int_("min_token_freq", 2),
        fractions=cs.floats("fractions", (0.8, 0.1, 0.1)),
        seed=cs.int_("seed", 1234),
    )
    cs.finish()

    es = _SectionReader(parser, "ecosystem", problems)
    eco = EcosystemConfig(
        n_models=es.int_("models", 1),
        iterations=es.int_("iterations", 10),
        seed=es.int_("seed", 0),
        block_size=es.int_("block_size", 128),
        beam_width=es.int_("beam_width", 5),
        k_grid=es.ints("k_grid", (3,)),
        alpha_grid=es.floats("alpha_grid", (0.1, 0.01, 0.001)),
        refit=es.str_("refit", "fresh"),
        decay=es.float_("decay", 0.0),
        subset_fraction=es.float_("subset_fraction", 0.4),
        support_order=es.int_("support_order", 0),
        baseline=es.bool_("baseline", False),
    )
    es.finish()

    os_ = _SectionReader(parser, "output", problems)
    run_cfg = RunConfig(
        corpus=corpus,
        eco=eco,
        persist_shards=os_.bool_("persist_shards", False),
        persist_models=os_.bool_("persist_models", False),
    )
    os_.finish()
    return run_cfg


def _validate_run_config(cfg: RunConfig, problems: list[str]) -> None:
    c = cfg.corpus
    explicit = (c.train, c.validation, c.test)
    if c.text is None and not all(explicit):
        problems.append(
            "corpus: provide either 'text' or all of 'train', 'validation', 'test'"
        )
    if c.text is not None and any(explicit):
        problems.append("corpus: 'text' excludes explicit split files")
    for key, p in (
        ("text", c.text),
        ("train", c.train),
        ("validation", c.validation),
        ("test", c.test),
    ):
        if p is not None and not Path(p).is_file():
            problems.append(f"corpus.{key}: no such file: {p}")
    if c.min_token_freq < 1:
        problems.append("corpus.min_token_freq: must be >= 1")
    if len(c.fractions) != 3:
        problems.append("corpus.fractions: expected three numbers")
    try:
        cfg.eco.validate()
    except ConfigError as exc:
        problems.append(f"ecosystem: {exc}")


def parse_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    parser = _read_parser(path)
    problems: list[str] = []
    cfg = _build_run_config(parser, path.parent, problems)
    if parser.has_section("sweep"):
        problems.append("sweep: section not allowed in a run config")
    _validate_run_config(cfg, problems)
    if problems:
        raise ConfigError(f"{path}:\n  " + "\n  ".join(problems))
    return cfg


def parse_sweep_spec(path: str | Path) -> SweepSpec:
    path = Path(path)
    parser = _read_parser(path)
    problems: list[str] = []
    base = _build_run_config(parser, path.parent, problems)
    ss = _SectionReader(parser, "sweep", problems)
    spec = SweepSpec(
        base=base,
        m_list=ss.ints("models", (1, 2, 4, 16)),
        seeds=ss.ints("seeds", (base.eco.seed,)),
    )
    ss.finish()
    if not spec.m_list:
        problems.append("sweep.models: must be non-empty")
    if not spec.seeds:
        problems.append("sweep.seeds: must be non-empty")
    _validate_run_config(base, problems)
    if problems:
        raise ConfigError(f"{path}:\n  " + "\n  ".join(problems))
    return spec


def snapshot_run_config(cfg: RunConfig) -> str:
    """Canonical INI rendering; re-parsing yields an identical config."""
    c, e = cfg.corpus, cfg.eco
    lines = ["[corpus]"]
    for key in ("text", "train", "validation", "test"):
        value = getattr(c, key)
        if value is not None:
            lines.append(f"{key} = {value}")
    lines += [
        f"min_token_freq = {c.min_token_freq}",
        "fractions = " + " ".join(repr(f) for f in c.fractions),
        f"seed = {c.seed}",
        "",
        "[ecosystem]",
        f"models = {e.n_models}",
        f"iterations = {e.iterations}",
        f"seed = {e.seed}",
        f"block_size = {e.block_size}",
        f"beam_width = {e.beam_width}",
        "k_grid = " + " ".join(str(k) for k in e.k_grid),
        "alpha_grid = " + " ".join(repr(a) for a in e.alpha_grid),
        f"refit = {e.refit}",
        f"decay = {e.decay!r}",
        f"subset_fraction = {e.subset_fraction!r}",
        f"support_order = {e.support_order}",
        f"baseline = {str(e.baseline).lower()}",
        "",
        "[output]",
        f"persist_shards = {str(cfg.persist_shards).lower()}",
        f"persist_models = {str(cfg.persist_models).lower()}",
    ]
    return "\n".join(lines) + "\n"
