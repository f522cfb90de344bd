"""Command line entry point.

Subcommands ``generate``, ``discover``, ``bench-collie`` and ``report``.
Exit status is 0 on success, 2 for configuration errors and 3 for numeric
failures.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import data
from . import expr as ex
from .bench import BENCH_FIELDS, benchmark_collie
from .collie import RankDeficiencyError
from .config import ConfigError, RunConfig, dump_config, load_config
from .experiments import get_experiment
from .pipeline import ExperimentSummary, run_experiment, summarize, write_rows

__all__ = ["main", "build_parser"]

log = logging.getLogger("dcipher")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class NumericFailure(RuntimeError):
    pass


def _jobs(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("D_CIPHER_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"D_CIPHER_JOBS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _resolve(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    updates = {}
    if args.seed is not None:
        updates["seeds"] = (args.seed,)
    if getattr(args, "ablated", False):
        updates["methods"] = ("ablated",)
    if args.out:
        updates["out"] = args.out
    if updates:
        from dataclasses import replace
        config = replace(config, **updates)
    return config


def _experiment(config: RunConfig):
    try:
        exp = get_experiment(config.equation)
    except KeyError as err:
        raise ConfigError(err.args[0]) from None
    unknown = set(dict(config.theta)) - set(exp.theta)
    if unknown:
        raise ConfigError(f"unknown parameters {sorted(unknown)} for {exp.name}")
    return exp


def _slug(setting: dict) -> str:
    parts = [f"{k}={v}" for k, v in sorted(setting.items()) if k not in ("theta", "dictionary")]
    return "_".join(parts) or "default"


def _generator_options(config: RunConfig) -> dict:
    return {"length_scale": config.length_scale, "amplitude": config.amplitude}


# -- subcommands --------------------------------------------------------------


def cmd_generate(config: RunConfig, jobs: int) -> int:
    exp = _experiment(config)
    out = Path(config.out)
    count = 0
    for setting in config.settings():
        theta = dict(exp.theta, **setting.get("theta", {}))
        for seed in config.seeds:
            ds = exp.generate(seed, noise_ratio=setting.get("noise_ratio"),
                              n_samples=setting.get("n_samples"), grid_step=setting.get("grid_step"),
                              theta=theta, **_generator_options(config))
            target = out / exp.name / _slug(setting) / f"seed_{seed}"
            data.write_dataset(target, ds, exp.variables, exp.fields)
            count += len(ds)
    print(f"wrote {count} sample files under {out}")
    return EXIT_OK


def _run_params(config: RunConfig, exp) -> dict:
    params = {"n_testing": config.n_testing, "integration_step": config.integration_step,
              "search": config.search, "ridge": config.ridge, "fd_step": config.fd_step,
              "generator": _generator_options(config)}
    if config.fixed_g:
        try:
            params["fixed_g"] = ex.parse(config.fixed_g, exp.variables, exp.fields)
        except ValueError as err:
            raise ConfigError(f"fixed_g: {err}") from None
    return params


def _write_log(path: Path, rows: Sequence[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for r in rows:
            head = f"{r['equation']} {r['method']} [{r['setting']}] seed {r['seed']}"
            if r.get("error"):
                fh.write(f"{head}: failed: {r['error']}\n")
            for gen, raw, pen, text in r.get("history", []):
                fh.write(f"{head}: gen {gen}: best raw {raw:.6g} penalized {pen:.6g} expr {text}\n")


def cmd_discover(config: RunConfig, jobs: int) -> int:
    exp = _experiment(config)
    for m in config.methods:
        if m not in ("dcipher", "ablated"):
            raise ConfigError(f"unknown method {m!r}")
    dataset = None
    if config.dataset:
        path = Path(config.dataset)
        if not path.is_dir():
            raise ConfigError(f"dataset directory not found: {path}")
        try:
            dataset = data.read_dataset(path)
        except (FileNotFoundError, ValueError) as err:
            raise ConfigError(f"cannot read dataset: {err}") from None
    for entry in config.dictionary:
        try:
            exp.build_dictionary((entry,))
        except ValueError as err:
            raise ConfigError(f"dictionary entry {entry!r}: {err}") from None
    gp = config.gp_config()
    settings = [{k: v for k, v in s.items() if k in ("theta", "dictionary")} for s in config.settings()][:1] \
        if dataset is not None else config.settings()
    out = Path(config.out)
    rows, summary = run_experiment(exp, settings, config.seeds, config.methods, gp, n_jobs=jobs,
                                   out=out, dataset=dataset, **_run_params(config, exp))
    _write_log(out / "run.log", rows)
    (out / "config.cfg").write_text(dump_config(config), encoding="utf-8")
    _print_summary(summary)
    failed = [r for r in rows if r.get("error")]
    for r in failed:
        print(f"seed {r['seed']} failed: {r['error']}", file=sys.stderr)
    if failed and len(failed) == len(rows):
        raise NumericFailure("every run failed")
    return EXIT_OK


def cmd_bench(config: RunConfig, jobs: int) -> int:
    seed = config.seeds[0] if config.seeds else 0
    rows = benchmark_collie(config.sizes, config.instances, config.rows, seed)
    out = Path(config.out)
    write_rows(out / "collie_bench.csv", rows, BENCH_FIELDS)
    print(f"{'n':>3} {'mean rel err':>13} {'median':>10} {'time ratio':>11}")
    for n in config.sizes:
        sub = [r for r in rows if r["n"] == n]
        rel = np.array([r["relative_error"] for r in sub])
        ratio = np.median([r["exact_seconds"] for r in sub]) / np.median([r["collie_seconds"] for r in sub])
        print(f"{n:>3} {rel.mean():>13.3g} {np.median(rel):>10.3g} {ratio:>11.1f}")
    return EXIT_OK


def _print_summary(summary: Sequence[ExperimentSummary]) -> None:
    if not summary:
        return
    print(f"{'equation':<22} {'method':<8} {'setting':<28} {'n':>3} {'fail':>4} "
          f"{'success':>15} {'beta rmse':>21}")
    for s in summary:
        print(f"{s.equation:<22} {s.method:<8} {s.setting or 'default':<28} {s.n_seeds:>3} {s.n_failed:>4} "
              f"{s.success_mean:>7.3g} ({s.success_std:.2g}) {s.rmse_mean:>10.3g} ({s.rmse_std:.2g})")


def cmd_report(directory: Path) -> int:
    if not directory.is_dir():
        raise ConfigError(f"results directory not found: {directory}")
    rows = []
    for path in sorted(directory.rglob("runs.csv")):
        with path.open(encoding="utf-8", newline="") as fh:
            rows.extend(csv.DictReader(fh))
    summary = summarize(rows)
    if not rows:
        print(f"warning: no runs.csv files under {directory}", file=sys.stderr)
    write_rows(directory / "report.csv", [s.as_row() for s in summary],
               list(ExperimentSummary.__dataclass_fields__))
    _print_summary(summary)
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcipher", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, ablated=False):
        p.add_argument("--config", type=Path, help="run configuration file")
        p.add_argument("--seed", type=int, help="run this seed only")
        p.add_argument("--jobs", type=int, help="worker processes (default: $D_CIPHER_JOBS or all cores)")
        p.add_argument("--out", help="output directory")
        if ablated:
            p.add_argument("--ablated", action="store_true", help="score candidates pointwise instead")

    common(sub.add_parser("generate", help="write synthetic datasets"))
    common(sub.add_parser("discover", help="run equation discovery"), ablated=True)
    common(sub.add_parser("bench-collie", help="CoLLie against the exact solver"))
    rep = sub.add_parser("report", help="aggregate runs.csv files")
    rep.add_argument("results", type=Path, help="directory searched recursively")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.results)
        config = _resolve(args)
        jobs = _jobs(args.jobs)
        handler = {"generate": cmd_generate, "discover": cmd_discover, "bench-collie": cmd_bench}
        return handler[args.command](config, jobs)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, ArithmeticError, np.linalg.LinAlgError, RankDeficiencyError,
            data.NonConvergenceError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
