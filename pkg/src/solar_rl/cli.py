"""Command-line entry point: ``solar-rl generate | experiment | report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from .config import EXPERIMENT_CHOICES, ConfigError, RunConfig, load_config
from .experiments import (
    derive_seed,
    run_fleet_experiment,
    run_transfer,
    simulate_day_by_day,
    simulate_dynamic,
    ExperimentReport,
)
from .reporting import ReportSchemaError, read_report, summarize, write_report
from .traces import TraceError, generate_synthetic, load_trace, write_trace

LOG_ENV = "SOLAR_RL_LOG"
log = logging.getLogger("solar_rl")


class UsageError(Exception):
    """Bad invocation that argparse itself cannot catch."""


def build_traces(cfg: RunConfig):
    """Synthetic traces come from (seed, node id); files are cropped to ``days``."""
    traces = []
    for src in cfg.traces:
        if src.synthetic:
            traces.append(generate_synthetic(
                src.archetype, cfg.days, derive_seed(cfg.seed, "suite", src.node_id),
                utc_offset_hours=cfg.utc_offset_hours, node_id=src.node_id))
        else:
            trace = load_trace(src.path, node_id=src.node_id, utc_offset_hours=cfg.utc_offset_hours)
            if trace.days > cfg.days:
                trace = trace.crop_days(0, cfg.days)
            traces.append(trace)
    return traces


def run_experiment(name: str, traces, cfg: RunConfig) -> ExperimentReport:
    hw, hp, crit, seed = cfg.hardware, cfg.hyperparameters, cfg.convergence, cfg.seed
    if name == "daybyday":
        report = ExperimentReport("daybyday", seed)
        for trace in traces:
            log.info("day-by-day: %s", trace.node_id)
            report.add_node(simulate_day_by_day(trace, hw, hp, crit, seed))
        return report
    if name == "dynamic":
        report = ExperimentReport("dynamic", seed)
        for trace in traces:
            log.info("dynamic interval: %s", trace.node_id)
            report.add_node(simulate_dynamic(
                trace, hw, hp, crit, seed, cap_hours=cfg.dynamic.cap_hours,
                window_days=cfg.dynamic.window_days, compare=cfg.dynamic.compare))
        return report
    if name == "shared":
        log.info("shared policy: %d bases x %d copies", len(traces), cfg.fleet.per_base_count)
        return run_fleet_experiment(traces, hw, hp, crit, seed, cfg.fleet.per_base_count,
                                    cfg.fleet.clusters, cfg.fleet.train_days)
    if name == "transfer":
        log.info("transfer learning on %d bases", len(traces))
        return run_transfer(traces, hw, hp, crit, seed, cfg.transfer.pretrain_days)
    raise UsageError(f"unknown experiment {name!r}")


def _fresh_output(out: Path) -> None:
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise UsageError(f"output directory {out} already exists and is not empty")


def _commit(staging: Path, out: Path) -> None:
    """Move a finished staging directory into place in one rename."""
    if out.exists():
        out.rmdir()
    os.replace(staging, out)


def cmd_generate(cfg: RunConfig, args) -> int:
    out = cfg.output_dir
    _fresh_output(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out.parent))
    try:
        synthetic = [s for s in cfg.traces if s.synthetic]
        if not synthetic:
            raise UsageError("the config lists no synthetic archetypes to generate")
        for src in synthetic:
            trace = generate_synthetic(
                src.archetype, cfg.days, derive_seed(cfg.seed, "suite", src.node_id),
                utc_offset_hours=cfg.utc_offset_hours, node_id=src.node_id)
            write_trace(trace, staging / f"{src.node_id}.csv")
            log.info("wrote %s (%d days)", src.node_id, trace.days)
        _commit(staging, out)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    print(out)
    return 0


def cmd_experiment(cfg: RunConfig, args) -> int:
    out = cfg.output_dir
    _fresh_output(out)
    traces = build_traces(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out.parent))
    try:
        config_echo = cfg.to_dict()
        (staging / "config.json").write_text(json.dumps(config_echo, indent=1, sort_keys=True) + "\n")
        for name in cfg.experiments:
            report = run_experiment(name, traces, cfg)
            write_report(report, staging / name, config_echo, figures=not args.no_figures)
        _commit(staging, out)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    print(out)
    return 0


def cmd_report(args) -> int:
    paths = []
    for p in args.reports:
        p = Path(p)
        if p.is_dir():
            found = sorted(p.glob("*/report.json")) + sorted(p.glob("report.json"))
            if not found:
                raise ReportSchemaError(p, "no report.json found")
            paths.extend(found)
        else:
            paths.append(p)
    print(summarize([read_report(p) for p in paths]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solar-rl", description=__doc__.split(":")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", type=Path, help="output directory (must be new or empty)")
        p.add_argument("--days", type=int, help="simulated days per trace")

    gen = sub.add_parser("generate", help="write synthetic trace CSVs")
    run_flags(gen)
    exp = sub.add_parser("experiment", help="run experiments and write reports")
    run_flags(exp)
    exp.add_argument("--experiment", choices=EXPERIMENT_CHOICES)
    exp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    rep = sub.add_parser("report", help="print summary tables from report files")
    rep.add_argument("reports", nargs="+", help="report.json files or run directories")
    return parser


def _error_record(kind: str, message: str, **extra) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = load_config(args.config, seed=args.seed)
        cfg = cfg.with_overrides(output_dir=args.out, days=args.days,
                                 experiment=getattr(args, "experiment", None))
        if args.command == "generate":
            return cmd_generate(cfg, args)
        return cmd_experiment(cfg, args)
    except ConfigError as exc:
        _error_record("config", exc.message, field=exc.path)
    except ReportSchemaError as exc:
        _error_record("schema", str(exc), file=exc.path)
    except (TraceError, IndexError) as exc:
        _error_record("trace", str(exc))
    except UsageError as exc:
        _error_record("usage", str(exc))
    except OSError as exc:
        _error_record("io", str(exc))
    return 2


if __name__ == "__main__":
    sys.exit(main())
