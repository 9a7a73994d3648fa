"""Writing experiment reports to disk and reading them back for summaries."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .envsim import SLOTS_PER_DAY
from .experiments import REPORT_FORMAT, ExperimentReport

PER_DAY_FIELDS = ("day", "node_id", "arm", "reward", "depleted", "samples_sent")
SUMMARY_FIELDS = ("arm", "node_id", "trainings", "negative_reward_days", "depletion_days",
                  "total_reward", "samples_sent")


class ReportSchemaError(ValueError):
    """A report file is unreadable or not shaped like a report."""

    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")
        self.path = str(path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(x: float):
    """Integers print without a trailing .0 so CSVs stay easy to diff."""
    return int(x) if float(x).is_integer() else repr(float(x))


def per_day_csv(report: ExperimentReport) -> str:
    return _csv_text(PER_DAY_FIELDS, (
        (r.day, r.node_id, r.arm, _num(r.reward), int(r.depleted), r.samples_sent)
        for r in report.per_day))


def summary_csv(report: ExperimentReport) -> str:
    return _csv_text(SUMMARY_FIELDS, (
        (s.arm, s.node_id, s.trainings, s.negative_reward_days, s.depletion_days,
         _num(s.total_reward), s.samples_sent)
        for s in report.summary()))


def reward_plot_csv(report: ExperimentReport) -> str:
    """Day against end-of-day reward, one series per (arm, node)."""
    return _csv_text(("arm", "node_id", "day", "reward"), (
        (r.arm, r.node_id, r.day, _num(r.reward)) for r in report.per_day))


def training_plot_csv(report: ExperimentReport) -> str:
    """Trainings per day and their running total, one series per (arm, node)."""
    rows = []
    for arm in report.arms():
        for node in report.nodes(arm):
            days = [r.day for r in report.rows(arm, node)]
            counts = dict.fromkeys(days, 0)
            for e in report.training_events:
                if e.arm == arm and e.node_id == node:
                    day = days[0] + e.day
                    counts[day] = counts.get(day, 0) + 1
            total = 0
            for day in sorted(counts):
                total += counts[day]
                rows.append((arm, node, day, counts[day], total))
    return _csv_text(("arm", "node_id", "day", "trainings", "cumulative_trainings"), rows)


def interval_plot_csv(report: ExperimentReport) -> str:
    """Every training instant with the interval that led up to it."""
    return _csv_text(("arm", "node_id", "slot", "day", "hour", "interval_hours", "accepted"), (
        (e.arm, e.node_id, e.slot, e.day, _num((e.slot % SLOTS_PER_DAY) / 4), _num(e.interval_hours),
         int(e.accepted))
        for e in report.training_events))


def totals_plot_csv(report: ExperimentReport) -> str:
    """Per-base total reward of the cluster table and the global table."""
    totals = report.extra.get("totals", {})
    clusters = report.extra.get("base_cluster", {})
    rows = []
    for node, by_arm in totals.items():
        cluster, glob = by_arm["cluster"], by_arm["global"]
        ratio = cluster / glob if glob else math.nan
        rows.append((node, clusters.get(node, ""), _num(cluster), _num(glob), repr(ratio)))
    return _csv_text(("node_id", "cluster", "cluster_total", "global_total", "ratio"), rows)


def report_json(report: ExperimentReport, config: dict | None = None) -> str:
    data = report.to_dict()
    if config is not None:
        data["config"] = config
    return json.dumps(data, indent=1, sort_keys=True, allow_nan=False) + "\n"


def table_filename(arm: str, node: str) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in f"{arm}__{node}")
    return f"{safe}.json"


def write_report(report: ExperimentReport, out_dir: Path, config: dict | None = None,
                 figures: bool = True) -> list[Path]:
    """Write every artefact of one experiment into ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    (out_dir / "plots").mkdir(parents=True, exist_ok=True)
    files = {
        "report.json": report_json(report, config),
        "per_day.csv": per_day_csv(report),
        "summary.csv": summary_csv(report),
        "plots/rewards.csv": reward_plot_csv(report),
        "plots/trainings.csv": training_plot_csv(report),
    }
    if report.training_events:
        files["plots/intervals.csv"] = interval_plot_csv(report)
    if "totals" in report.extra:
        files["plots/totals.csv"] = totals_plot_csv(report)
    for (arm, node), table in sorted(report.tables.items()):
        files[f"tables/{table_filename(arm, node)}"] = table.dumps()

    written = []
    for name, text in files.items():
        path = out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)
    if figures:
        from .figures import render_report

        written.extend(render_report(report, out_dir / "figures"))
    return written


def read_report(path) -> dict:
    """Load a ``report.json`` and check it has the fields summaries rely on."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ReportSchemaError(path, f"cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ReportSchemaError(path, f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict) or data.get("format") != REPORT_FORMAT:
        raise ReportSchemaError(path, f"not a {REPORT_FORMAT} document")
    for key, kind in (("experiment", str), ("seed", int), ("nodes", list)):
        if not isinstance(data.get(key), kind):
            raise ReportSchemaError(path, f"field {key!r} missing or not a {kind.__name__}")
    for i, node in enumerate(data["nodes"]):
        if not isinstance(node, dict) or not set(SUMMARY_FIELDS) <= node.keys():
            raise ReportSchemaError(path, f"nodes[{i}] lacks summary fields")
    return data


def summarize(reports: list[dict]) -> str:
    """Plain-text summary tables; adds a reduction column for day-by-day vs dynamic."""
    lines = []
    for data in reports:
        lines.append(f"== {data['experiment']} (seed {data['seed']})")
        lines.append(f"{'arm':<10} {'node':<16} {'trainings':>9} {'neg days':>8} {'total reward':>13}")
        for n in data["nodes"]:
            lines.append(f"{n['arm']:<10} {n['node_id']:<16} {n['trainings']:>9} "
                         f"{n['negative_reward_days']:>8} {n['total_reward']:>13.0f}")
        totals = data.get("extra", {}).get("totals")
        if totals:
            lines.append(f"{'node':<16} {'cluster':>10} {'global':>10} {'gain':>8}")
            for node, t in totals.items():
                gain = (t["cluster"] / t["global"] - 1) * 100 if t["global"] else math.nan
                lines.append(f"{node:<16} {t['cluster']:>10.0f} {t['global']:>10.0f} {gain:>7.0f}%")
        lines.append("")

    by_exp = {d["experiment"]: d for d in reports}
    if "daybyday" in by_exp and "dynamic" in by_exp:
        base = {n["node_id"]: n["trainings"] for n in by_exp["daybyday"]["nodes"]}
        lines.append("== dynamic vs day-by-day trainings")
        lines.append(f"{'node':<16} {'baseline':>8} {'dynamic':>8} {'reduction':>9}")
        for n in by_exp["dynamic"]["nodes"]:
            b = base.get(n["node_id"])
            if not b:
                continue
            lines.append(f"{n['node_id']:<16} {b:>8} {n['trainings']:>8} "
                         f"{(1 - n['trainings'] / b) * 100:>8.0f}%")
        lines.append("")
    return "\n".join(lines)
