"""Command-line entry point: ``run``, ``validate`` and ``benchmarks``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .benchmarks import list_benchmarks
from .errors import ConfigurationError, NumericError
from .harness import final_metric, load_config, run_experiment, write_trace_csv
from .oracle import oracle_suite

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ptrbo", description="Active learning of the PTR measure.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config and write its trace CSV")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default: config 'out' or ./results)")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    val = sub.add_parser("validate", help="Monte-Carlo oracle checks on the config's benchmark")
    val.add_argument("config")
    val.add_argument("--seed", type=int)
    val.add_argument("--samples", type=int, default=20000)
    sub.add_parser("benchmarks", help="list registered benchmarks")
    return ap


def _overrides(cfg, args):
    changes = {}
    for key in ("trials", "seed", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            changes[key] = v
    return cfg.replace(**changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _overrides(load_config(args.config), args)
    out_dir = Path(args.out or cfg.out or "results")
    traces = run_experiment(cfg)
    path = write_trace_csv(traces, out_dir / f"{Path(args.config).stem}_trace.csv")
    metric = "utility_gap" if cfg.task == "opt" else "f1"
    print(f"{cfg.benchmark.name}: T={cfg.T}, trials={cfg.trials}, seed={cfg.seed}")
    for spec in cfg.algorithms:
        vals = final_metric(traces, spec.name, metric)
        vals = vals[np.isfinite(vals)]
        summary = f"{vals.mean():.4f}" if vals.size else "n/a"
        print(f"  {spec.name:<18} mean final {metric} = {summary}")
    print(f"trace written to {path}")
    failed = [tr for tr in traces if tr.status != "ok"]
    for tr in failed:
        print(f"trial {tr.trial}, {tr.algorithm}: {tr.status}", file=sys.stderr)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    results = oracle_suite(cfg.benchmark, cfg.algo_params(cfg.algorithms[0]), n_samples=args.samples, seed=seed)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def cmd_benchmarks(args) -> int:
    for name, desc in list_benchmarks().items():
        print(f"{name:<16} {desc}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "validate": cmd_validate, "benchmarks": cmd_benchmarks}[args.command]
    try:
        return handler(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
