"""Experiment configuration, Monte Carlo reports and report emission.

Reports are written as ``<experiment>.json`` (schema-versioned, config
embedded), ``<experiment>.csv`` (one row per statistic) and one
``<experiment>.<table>.csv`` per data table.  Wall-clock time goes to a
separate ``<experiment>.timing.json`` so that the other files are
byte-identical across re-runs of the same configuration.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from .io import canonical_json, csv_text, write_text

__all__ = [
    "SCHEMA_VERSION",
    "OUTPUT_ENV",
    "ConfigError",
    "ExperimentConfig",
    "Statistic",
    "Table",
    "MCReport",
    "Experiment",
    "EXPERIMENTS",
    "register",
    "gate",
    "load_config",
    "dump_config",
    "resolve_config",
    "run_experiment",
    "emit_report",
    "output_dir_for",
]

SCHEMA_VERSION = 1
OUTPUT_ENV = "SHEETLAB_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid or infeasible experiment configuration."""


def _py(v):
    """Plain JSON-compatible Python value (numpy scalars and arrays unwrapped)."""
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, np.ndarray):
        return [_py(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_py(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _py(x) for k, x in v.items()}
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run.  ``None`` grid/replica fields take the experiment defaults."""

    experiment: str
    m: int | None = None
    n: int | None = None
    dim: int | None = None
    replicas: int | None = None
    seed: int = 0
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output_dir: str | None = None

    def to_dict(self) -> dict:
        return _py(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}; allowed {sorted(known)}")
        if "experiment" not in data:
            raise ConfigError("config needs an 'experiment' name")
        kw = dict(data)
        for key in ("params", "tolerances"):
            if kw.get(key) is None:
                kw[key] = {}
            elif not isinstance(kw[key], dict):
                raise ConfigError(f"'{key}' must be a mapping")
        for key in ("m", "n", "dim", "replicas", "seed"):
            v = kw.get(key)
            if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
                raise ConfigError(f"'{key}' must be an integer, got {v!r}")
        return cls(**kw)

    def hash(self) -> str:
        """sha256 of the canonical JSON of every field except ``output_dir``."""
        d = self.to_dict()
        d.pop("output_dir", None)
        return hashlib.sha256(canonical_json(d).encode()).hexdigest()


def load_config(source) -> ExperimentConfig:
    """Read a YAML (or JSON) key-value config file."""
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig, target=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=True)
    if target is not None:
        write_text(target, text)
    return text


@dataclass(frozen=True)
class Statistic:
    """One reported quantity with its pass rule.

    ``comparator`` is one of ``<``, ``<=``, ``>``, ``>=``, ``==``, ``within_se``
    (``|estimate - target| <= threshold * se`` with target 0) or ``info``
    (reported only, no decision).
    """

    name: str
    estimate: float
    se: float | None = None
    count: int | None = None
    comparator: str = "info"
    threshold: float | None = None
    passed: bool | None = None

    def to_dict(self) -> dict:
        return _py(asdict(self))


_OPS = {
    "<": lambda e, t, se: e < t,
    "<=": lambda e, t, se: e <= t,
    ">": lambda e, t, se: e > t,
    ">=": lambda e, t, se: e >= t,
    "==": lambda e, t, se: e == t,
    "within_se": lambda e, t, se: se is not None and abs(e) <= t * se,
}


def gate(name: str, estimate, comparator: str = "info", threshold=None, se=None, count=None) -> Statistic:
    """Build a :class:`Statistic`, deciding pass/fail from the comparator."""
    estimate = float(estimate)
    se = None if se is None else float(se)
    if comparator == "info":
        return Statistic(name, estimate, se, count, "info", None if threshold is None else float(threshold), None)
    if comparator not in _OPS:
        raise ValueError(f"unknown comparator {comparator!r}")
    ok = bool(_OPS[comparator](estimate, float(threshold), se)) and not math.isnan(estimate)
    return Statistic(name, estimate, se, count, comparator, float(threshold), ok)


@dataclass(frozen=True)
class Table:
    header: tuple
    rows: tuple

    @classmethod
    def of(cls, header: Sequence[str], rows) -> "Table":
        return cls(tuple(header), tuple(tuple(_py(v) for v in r) for r in rows))

    def to_dict(self) -> dict:
        return {"header": list(self.header), "rows": [list(r) for r in self.rows]}


@dataclass(frozen=True)
class MCReport:
    experiment: str
    config: dict
    config_hash: str
    statistics: tuple = ()
    tables: dict = field(default_factory=dict)
    wall_clock: float | None = field(default=None, compare=False)
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.statistics if s.passed is not None)

    def statistic(self, name: str) -> Statistic:
        for s in self.statistics:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "config": self.config,
            "config_hash": self.config_hash,
            "passed": self.passed,
            "statistics": [s.to_dict() for s in self.statistics],
            "tables": {k: self.tables[k].to_dict() for k in sorted(self.tables)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MCReport":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        stats = tuple(Statistic(**s) for s in d["statistics"])
        tables = {k: Table(tuple(v["header"]), tuple(tuple(r) for r in v["rows"])) for k, v in d["tables"].items()}
        return cls(d["experiment"], d["config"], d["config_hash"], stats, tables, None, d["schema_version"])


STAT_HEADER = ("name", "estimate", "se", "count", "comparator", "threshold", "passed")


def emit_report(report: MCReport, out_dir, formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    """Write the report files into ``out_dir`` and return their paths."""
    bad = set(formats) - {"csv", "json"}
    if bad:
        raise ValueError(f"unknown report formats {sorted(bad)}")
    out = Path(out_dir)
    stem = report.experiment
    written = []
    if "json" in formats:
        written.append(write_text(out / f"{stem}.json", report.to_json()))
    if "csv" in formats:
        rows = ([s.name, s.estimate, "" if s.se is None else s.se, "" if s.count is None else s.count,
                 s.comparator, "" if s.threshold is None else s.threshold,
                 "" if s.passed is None else s.passed] for s in report.statistics)
        written.append(write_text(out / f"{stem}.csv", csv_text(STAT_HEADER, rows)))
        for name in sorted(report.tables):
            t = report.tables[name]
            written.append(write_text(out / f"{stem}.{name}.csv", csv_text(t.header, t.rows)))
    if report.wall_clock is not None:
        timing = {"experiment": stem, "config_hash": report.config_hash, "wall_clock_s": report.wall_clock}
        written.append(write_text(out / f"{stem}.timing.json", json.dumps(timing, sort_keys=True) + "\n"))
    return written


# ---------------------------------------------------------------- registry


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    defaults: dict
    run: Callable
    validate: Callable | None = None


EXPERIMENTS: dict[str, Experiment] = {}


def register(name: str, description: str, defaults: dict, validate: Callable | None = None):
    """Decorator adding ``run(cfg) -> (statistics, tables)`` to the registry."""

    def deco(fn):
        EXPERIMENTS[name] = Experiment(name, description, defaults, fn, validate)
        return fn

    return deco


def _load_registry():
    from . import experiments  # noqa: F401  (registers on import)


def resolve_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill defaults and validate, raising :class:`ConfigError` before any sampling."""
    _load_registry()
    exp = EXPERIMENTS.get(cfg.experiment)
    if exp is None:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; choose from {sorted(EXPERIMENTS)}")
    d = exp.defaults
    unknown_p = set(cfg.params) - set(d.get("params", {}))
    if unknown_p:
        raise ConfigError(f"{cfg.experiment}: unknown params {sorted(unknown_p)}; "
                          f"allowed {sorted(d.get('params', {}))}")
    unknown_t = set(cfg.tolerances) - set(d.get("tolerances", {}))
    if unknown_t:
        raise ConfigError(f"{cfg.experiment}: unknown tolerances {sorted(unknown_t)}; "
                          f"allowed {sorted(d.get('tolerances', {}))}")
    full = ExperimentConfig(
        experiment=cfg.experiment,
        m=cfg.m if cfg.m is not None else d.get("m", 1),
        n=cfg.n if cfg.n is not None else d.get("n", 1),
        dim=cfg.dim if cfg.dim is not None else d.get("dim", 1),
        replicas=cfg.replicas if cfg.replicas is not None else d.get("replicas", 1),
        seed=cfg.seed,
        params=_py({**d.get("params", {}), **cfg.params}),
        tolerances=_py({**d.get("tolerances", {}), **cfg.tolerances}),
        output_dir=cfg.output_dir,
    )
    for key in ("m", "n", "dim", "replicas"):
        v = getattr(full, key)
        if v < 1:
            raise ConfigError(f"{key} must be >= 1, got {v}")
    if full.seed < 0 or full.seed >= 2**64:
        raise ConfigError("seed must lie in [0, 2^64)")
    if exp.validate is not None:
        try:
            exp.validate(full)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{cfg.experiment}: {exc}") from exc
    return full


def output_dir_for(cfg: ExperimentConfig, override=None) -> Path:
    """Explicit override, then ``$SHEETLAB_OUTPUT_DIR``, then the config, then ``./sheetlab-out``."""
    for cand in (override, os.environ.get(OUTPUT_ENV), cfg.output_dir):
        if cand:
            return Path(cand)
    return Path("sheetlab-out")


def run_experiment(cfg: ExperimentConfig, emit: bool = False, out_dir=None,
                   formats: Sequence[str] = ("csv", "json")) -> MCReport:
    """Validate, run and (optionally) emit the report of one experiment."""
    full = resolve_config(cfg)
    exp = EXPERIMENTS[full.experiment]
    t0 = time.perf_counter()
    stats, tables = exp.run(full)
    elapsed = time.perf_counter() - t0
    cfg_dict = full.to_dict()
    cfg_dict.pop("output_dir", None)
    report = MCReport(full.experiment, cfg_dict, full.hash(), tuple(stats),
                      {k: v if isinstance(v, Table) else Table.of(*v) for k, v in tables.items()}, elapsed)
    if emit:
        emit_report(report, output_dir_for(full, out_dir), formats)
    return report
