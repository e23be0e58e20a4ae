"""Command line entry point ``sheetlab``.

Exit codes: 0 when every gated statistic passes, 1 when any fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (EXPERIMENTS, OUTPUT_ENV, ConfigError, ExperimentConfig, load_config, output_dir_for,
                      resolve_config, run_experiment)

__all__ = ["main", "parse_grids"]


def parse_grids(text: str) -> list[int]:
    """Parse ``2^8,2^10,4096`` into integers."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        m = re.fullmatch(r"(\d+)\^(\d+)", tok)
        try:
            out.append(int(m.group(1)) ** int(m.group(2)) if m else int(tok))
        except ValueError:
            raise ConfigError(f"cannot parse grid size {tok!r}") from None
    if not out or any(g < 1 for g in out):
        raise ConfigError("grid sizes must be positive")
    return out


def _print_report(rep, stream=None):
    stream = stream or sys.stdout
    print(f"{rep.experiment}  config {rep.config_hash[:12]}  {'PASS' if rep.passed else 'FAIL'}", file=stream)
    for s in rep.statistics:
        mark = {True: "pass", False: "FAIL", None: "info"}[s.passed]
        se = "" if s.se is None else f" +- {s.se:.3g}"
        rule = "" if s.comparator == "info" else f"  [{s.comparator} {s.threshold!r}]"
        print(f"  {mark:4}  {s.name} = {s.estimate!r}{se}{rule}", file=stream)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.replicas is not None:
        cfg = replace(cfg, replicas=args.replicas)
    rep = run_experiment(cfg, emit=True, out_dir=args.output_dir, formats=args.format.split(","))
    _print_report(rep)
    print(f"reports written to {output_dir_for(resolve_config(cfg), args.output_dir)}")
    return 0 if rep.passed else 1


def _cmd_list(args) -> int:
    from .harness import _load_registry

    _load_registry()
    for name in sorted(EXPERIMENTS):
        print(f"{name:16} {EXPERIMENTS[name].description}")
    return 0


def _cmd_demo(args) -> int:
    cfg = ExperimentConfig("counterexample", params={"q_max": args.q})
    rep = run_experiment(cfg, emit=args.output_dir is not None, out_dir=args.output_dir)
    _print_report(rep)
    return 0 if rep.passed else 1


def _cmd_convergence(args) -> int:
    base = load_config(args.config) if args.config else ExperimentConfig(args.experiment)
    if base.experiment != args.experiment:
        raise ConfigError(f"config is for {base.experiment!r}, not {args.experiment!r}")
    if args.replicas is not None:
        base = replace(base, replicas=args.replicas)
    full = resolve_config(base)
    root = output_dir_for(full, args.output_dir) / f"{args.experiment}-convergence"
    ok = True
    for g in parse_grids(args.grids):
        params = dict(base.params)
        if "grids" in full.params:
            params["grids"] = [g]
        cfg = replace(base, m=g if full.m > 1 else full.m, n=g, params=params)
        rep = run_experiment(cfg, emit=True, out_dir=root / f"grid_{g}")
        print(f"--- grid {g}")
        _print_report(rep)
        ok &= rep.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sheetlab", description="Brownian sheet local-time laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a YAML config")
    r.add_argument("config", type=Path)
    r.add_argument("--output-dir", default=None, help=f"overrides ${OUTPUT_ENV} and the config")
    r.add_argument("--format", default="csv,json")
    r.add_argument("--replicas", type=int, default=None)
    r.set_defaults(func=_cmd_run)

    ls = sub.add_parser("list-experiments", help="list registered experiments")
    ls.set_defaults(func=_cmd_list)

    d = sub.add_parser("demo", help="deterministic demonstrations")
    d.add_argument("which", choices=["counterexample"])
    d.add_argument("--q", type=int, default=10**6)
    d.add_argument("--output-dir", default=None)
    d.set_defaults(func=_cmd_demo)

    c = sub.add_parser("convergence", help="re-run an experiment over a list of grid sizes")
    c.add_argument("experiment")
    c.add_argument("--grids", required=True, help="comma list, e.g. 2^8,2^10,2^12")
    c.add_argument("--config", type=Path, default=None)
    c.add_argument("--replicas", type=int, default=None)
    c.add_argument("--output-dir", default=None)
    c.set_defaults(func=_cmd_convergence)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
