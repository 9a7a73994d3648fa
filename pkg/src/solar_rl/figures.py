"""PNG renderings of the plot-data tables (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ExperimentReport  # noqa: E402

# Fixed metadata keeps repeated runs byte-identical.
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_rewards(report: ExperimentReport, path: Path) -> Path:
    """One panel per arm: end-of-day reward of every node, depletion days below zero."""
    arms = report.arms()
    fig, axes = plt.subplots(len(arms), 1, figsize=(9, 2.6 * len(arms)), sharex=True, squeeze=False)
    for ax, arm in zip(axes[:, 0], arms):
        for node in report.nodes(arm):
            rows = report.rows(arm, node)
            ax.plot([r.day for r in rows], [r.reward for r in rows], ".", ms=4, label=node)
        ax.axhline(0, color="0.6", lw=0.8)
        ax.set_ylabel("daily reward")
        ax.set_title(arm, loc="left", fontsize=10)
        ax.legend(fontsize=7, loc="upper left", bbox_to_anchor=(1.01, 1.0))
    axes[-1, 0].set_xlabel("day")
    fig.tight_layout()
    return _save(fig, path)


def plot_trainings(report: ExperimentReport, path: Path) -> Path:
    """Cumulative trainings against day for every (arm, node) that trained."""
    fig, ax = plt.subplots(figsize=(9, 3.5))
    for arm in report.arms():
        for node in report.nodes(arm):
            days = [e.day for e in report.training_events if e.arm == arm and e.node_id == node]
            if not days:
                continue
            first = report.rows(arm, node)[0].day
            ax.step(np.asarray(days) + first, np.arange(1, len(days) + 1), where="post",
                    label=f"{arm}/{node}")
    ax.set_xlabel("day")
    ax.set_ylabel("trainings so far")
    if ax.has_data():
        ax.legend(fontsize=7, loc="upper left", bbox_to_anchor=(1.01, 1.0))
    fig.tight_layout()
    return _save(fig, path)


def plot_totals(report: ExperimentReport, path: Path) -> Path:
    """Grouped bars of total reward: cluster table against the global table."""
    totals = report.extra["totals"]
    nodes = list(totals)
    x = np.arange(len(nodes))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(x - 0.2, [totals[n]["cluster"] for n in nodes], 0.4, label="cluster table")
    ax.bar(x + 0.2, [totals[n]["global"] for n in nodes], 0.4, label="global table")
    ax.set_xticks(x, nodes, fontsize=8)
    ax.set_ylabel("total reward")
    ax.axhline(0, color="0.6", lw=0.8)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def render_report(report: ExperimentReport, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    paths = [plot_rewards(report, out_dir / "rewards.png")]
    if report.training_events:
        paths.append(plot_trainings(report, out_dir / "trainings.png"))
    if "totals" in report.extra:
        paths.append(plot_totals(report, out_dir / "totals.png"))
    return paths
