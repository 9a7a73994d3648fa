"""Scaling methods: day-by-day, dynamic interval, shared cluster tables, transfer."""

from __future__ import annotations

import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .energy import HardwareConfig, NodeEnergyState
from .envsim import SLOTS_PER_DAY, SLOT_SECONDS
from .qlearn import (
    ConvergenceCriterion,
    Hyperparameters,
    QTable,
    day_episodes,
    evaluate_slots,
    interleave,
    rollout,
    train_on_episodes,
)
from .traces import LightTrace, TraceError, augment_trace, slot_series, slot_weekend, weekly_mean_lux

log = logging.getLogger(__name__)

FIXED_FIRST_DAY_ACTION = 1
SLOTS_PER_HOUR = 4
DEFAULT_INTERVAL_CAP_HOURS = 7 * 24
REPORT_FORMAT = "solar-rl/report"
DYNAMIC_COMPARE = ("rerun", "recorded")


def derive_seed(seed: int, *labels) -> int:
    """Independent, reproducible 32-bit stream seed for (seed, labels...)."""
    words = [int(seed) % 2 ** 32] + [zlib.crc32(str(label).encode()) for label in labels]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# --------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class DayRecord:
    day: int
    node_id: str
    arm: str
    reward: float
    depleted: bool
    samples_sent: int


@dataclass(frozen=True)
class TrainingEvent:
    arm: str
    node_id: str
    slot: int
    interval_hours: float
    accepted: bool

    @property
    def day(self) -> int:
        return self.slot // SLOTS_PER_DAY


@dataclass
class NodeSummary:
    arm: str
    node_id: str
    trainings: int
    negative_reward_days: int
    depletion_days: int
    total_reward: float
    samples_sent: int


@dataclass
class ExperimentReport:
    experiment: str
    seed: int
    per_day: list[DayRecord] = field(default_factory=list)
    training_events: list[TrainingEvent] = field(default_factory=list)
    trainings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def add_node(self, run: "NodeRun") -> None:
        for d, (reward, dep, sent) in enumerate(zip(run.day_rewards, run.day_depleted, run.day_samples)):
            self.per_day.append(DayRecord(run.first_day + d, run.node_id, run.arm, float(reward),
                                          bool(dep), int(sent)))
        self.training_events.extend(run.events)
        self.trainings[(run.arm, run.node_id)] = run.trainings
        if run.table is not None:
            self.tables[(run.arm, run.node_id)] = run.table

    def arms(self) -> list[str]:
        return sorted({r.arm for r in self.per_day})

    def nodes(self, arm: str) -> list[str]:
        seen = []
        for r in self.per_day:
            if r.arm == arm and r.node_id not in seen:
                seen.append(r.node_id)
        return seen

    def rows(self, arm: str, node_id: str) -> list[DayRecord]:
        return [r for r in self.per_day if r.arm == arm and r.node_id == node_id]

    def summary(self) -> list[NodeSummary]:
        out = []
        for arm in self.arms():
            for node in self.nodes(arm):
                rows = self.rows(arm, node)
                out.append(NodeSummary(
                    arm, node, int(self.trainings.get((arm, node), 0)),
                    sum(r.reward < 0 for r in rows), sum(r.depleted for r in rows),
                    float(sum(r.reward for r in rows)), sum(r.samples_sent for r in rows)))
        return out

    def node_summary(self, arm: str, node_id: str) -> NodeSummary:
        for s in self.summary():
            if s.arm == arm and s.node_id == node_id:
                return s
        raise KeyError((arm, node_id))

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "experiment": self.experiment,
            "seed": self.seed,
            "nodes": [asdict(s) for s in self.summary()],
            "per_day": [asdict(r) for r in self.per_day],
            "training_events": [asdict(e) | {"day": e.day} for e in self.training_events],
            "extra": self.extra,
        }


@dataclass
class NodeRun:
    arm: str
    node_id: str
    first_day: int
    day_rewards: np.ndarray
    day_depleted: np.ndarray
    day_samples: np.ndarray
    trainings: int
    events: list[TrainingEvent]
    table: QTable | None
    actions: np.ndarray | None = None

    @property
    def negative_reward_days(self) -> int:
        return int((self.day_rewards < 0).sum())


class _Recorder:
    """Accumulates per-slot execution into per-day arrays."""

    def __init__(self, n_slots: int):
        self.rewards = np.zeros(n_slots)
        self.depleted = np.zeros(n_slots, dtype=bool)
        self.samples = np.zeros(n_slots, dtype=np.int64)
        self.actions = np.zeros(n_slots, dtype=np.int64)

    def put(self, lo: int, run) -> None:
        hi = lo + run.rewards.size
        self.rewards[lo:hi] = run.rewards
        self.depleted[lo:hi] = run.depleted
        self.samples[lo:hi] = run.samples
        self.actions[lo:hi] = run.actions

    def finish(self, arm, node_id, first_day, trainings, events, table) -> NodeRun:
        shape = (-1, SLOTS_PER_DAY)
        return NodeRun(arm, node_id, first_day, self.rewards.reshape(shape).sum(axis=1),
                       self.depleted.reshape(shape).any(axis=1), self.samples.reshape(shape).sum(axis=1),
                       trainings, events, table, self.actions)


def _slots(trace: LightTrace):
    return slot_series(trace, SLOT_SECONDS), slot_weekend(trace, SLOT_SECONDS)


# --------------------------------------------------------------------------
# Day-by-day baseline


def simulate_day_by_day(trace: LightTrace, hw: HardwareConfig, hp: Hyperparameters,
                        crit: ConvergenceCriterion, seed: int, prior: QTable | None = None,
                        arm: str = "daybyday", first_day: int = 0) -> NodeRun:
    """Fixed 5-minute sampling on day 0, then retrain nightly on that day's light.

    Each night's session warm-starts from the previous table (or ``prior``).
    Training and execution seeds depend only on (seed, node, day), so a
    zero-valued prior reproduces a cold start exactly.
    """
    if trace.days < 2:
        raise TraceError("day-by-day learning needs at least 2 days")
    lux, weekend = _slots(trace)
    rec = _Recorder(lux.size)
    node = NodeEnergyState.initial(hw)
    table = prior.copy() if prior is not None else QTable()
    events = []

    run = rollout(None, lux[:SLOTS_PER_DAY], weekend[:SLOTS_PER_DAY], node, hw,
                  derive_seed(seed, trace.node_id, "exec", 0), fixed_action=FIXED_FIRST_DAY_ACTION)
    rec.put(0, run)
    node = run.final
    for d in range(1, trace.days):
        lo = d * SLOTS_PER_DAY
        episodes = day_episodes(trace, lo - SLOTS_PER_DAY, lo)
        table = train_on_episodes(table, episodes, hw, hp, crit,
                                  derive_seed(seed, trace.node_id, "train", d)).table
        events.append(TrainingEvent(arm, trace.node_id, lo, 24.0, True))
        run = rollout(table, lux[lo:lo + SLOTS_PER_DAY], weekend[lo:lo + SLOTS_PER_DAY], node, hw,
                      derive_seed(seed, trace.node_id, "exec", d))
        rec.put(lo, run)
        node = run.final
    return rec.finish(arm, trace.node_id, first_day, len(events), events, table)


def run_day_by_day(trace: LightTrace, hw: HardwareConfig, hp: Hyperparameters,
                   crit: ConvergenceCriterion, seed: int) -> ExperimentReport:
    report = ExperimentReport("daybyday", seed)
    report.add_node(simulate_day_by_day(trace, hw, hp, crit, seed))
    return report


# --------------------------------------------------------------------------
# Dynamic training interval


def next_interval(interval_hours: float, improved: bool,
                  cap_hours: float = DEFAULT_INTERVAL_CAP_HOURS, floor_hours: float = 1.0) -> float:
    """Double after a non-worse retrain, halve after a worse one."""
    if improved:
        return min(2 * interval_hours, cap_hours)
    return max(interval_hours / 2, floor_hours)


def simulate_dynamic(trace: LightTrace, hw: HardwareConfig, hp: Hyperparameters,
                     crit: ConvergenceCriterion, seed: int,
                     cap_hours: float = DEFAULT_INTERVAL_CAP_HOURS,
                     window_days: int | None = None, compare: str = "rerun",
                     arm: str = "dynamic") -> NodeRun:
    """Retrain on all light seen so far at an adaptive interval.

    With ``compare="rerun"`` the new and the current table are both replayed
    on the data seen so far; the new one replaces the current one only if it
    earns at least as much, otherwise the old table stays. With
    ``compare="recorded"`` the new table is always deployed and its mean
    daily reward is compared with the figure recorded when the current
    table was adopted. Until the first training the node samples every
    5 minutes.
    """
    if trace.days < 2:
        raise TraceError("dynamic interval learning needs at least 2 days")
    if compare not in DYNAMIC_COMPARE:
        raise ValueError(f"compare must be one of {DYNAMIC_COMPARE}, got {compare!r}")
    lux, weekend = _slots(trace)
    n = lux.size
    rec = _Recorder(n)
    node = NodeEnergyState.initial(hw)
    table = None
    recorded = None
    interval = 1.0
    t = 0
    t_next = SLOTS_PER_HOUR
    events = []
    while t < n:
        hi = min(t_next, n)
        run = rollout(table, lux[t:hi], weekend[t:hi], node, hw,
                      derive_seed(seed, trace.node_id, "exec", t),
                      fixed_action=FIXED_FIRST_DAY_ACTION if table is None else None)
        rec.put(t, run)
        node = run.final
        t = hi
        if t >= n:
            break
        lo = 0 if window_days is None else max(0, t - window_days * SLOTS_PER_DAY)
        k = len(events)
        base = table if table is not None else QTable()
        new = train_on_episodes(base, day_episodes(trace, lo, t), hw, hp, crit,
                                derive_seed(seed, trace.node_id, "train", k)).table
        eval_seed = derive_seed(seed, trace.node_id, "eval", k)
        r_new = evaluate_slots(new, lux[lo:t], weekend[lo:t], hw, eval_seed).total_reward
        if compare == "rerun":
            r_old = evaluate_slots(base, lux[lo:t], weekend[lo:t], hw, eval_seed).total_reward
            improved = r_new >= r_old
            table = new if improved else base
        else:
            daily = r_new * SLOTS_PER_DAY / (t - lo)
            improved = recorded is None or daily >= recorded
            table, recorded = new, daily
        events.append(TrainingEvent(arm, trace.node_id, t, interval, improved))
        interval = next_interval(interval, improved, cap_hours)
        t_next = t + int(round(interval * SLOTS_PER_HOUR))
    return rec.finish(arm, trace.node_id, 0, len(events), events, table)


def run_dynamic_interval(trace: LightTrace, hw: HardwareConfig, hp: Hyperparameters,
                         crit: ConvergenceCriterion, seed: int, **kw) -> ExperimentReport:
    report = ExperimentReport("dynamic", seed)
    report.add_node(simulate_dynamic(trace, hw, hp, crit, seed, **kw))
    return report


# --------------------------------------------------------------------------
# Fleet, clustering and shared tables


@dataclass(frozen=True)
class FleetSpec:
    base_traces: tuple
    per_base_count: int = 200
    seed: int = 0

    def __post_init__(self):
        if not self.base_traces:
            raise ValueError("fleet needs at least one base trace")
        if self.per_base_count < 1:
            raise ValueError("per_base_count must be >= 1")

    @property
    def size(self) -> int:
        return len(self.base_traces) * self.per_base_count


def build_fleet(spec: FleetSpec) -> list[LightTrace]:
    fleet = []
    for base in spec.base_traces:
        fleet.extend(augment_trace(base, spec.per_base_count, derive_seed(spec.seed, "fleet", base.node_id)))
    return fleet


@dataclass(frozen=True)
class ClusterAssignment:
    cluster_count: int
    assignment: dict
    centroids: tuple

    def members(self, cluster: int) -> list[str]:
        return [node for node, c in self.assignment.items() if c == cluster]

    def nearest(self, mean_lux: float) -> int:
        return int(np.argmin([abs(c - mean_lux) for c in self.centroids]))


def cluster_fleet(fleet: Sequence[LightTrace], k: int) -> ClusterAssignment:
    """Equal-size clusters by first-week mean lux (ties by node id).

    When the fleet does not divide evenly the lowest-lux clusters take one
    extra node each.
    """
    if not fleet:
        raise ValueError("cannot cluster an empty fleet")
    if not 1 <= k <= len(fleet):
        raise ValueError(f"k={k} must be between 1 and the fleet size {len(fleet)}")
    means = {tr.node_id: weekly_mean_lux(tr, 0) for tr in fleet}
    if len(means) != len(fleet):
        raise ValueError("node ids in the fleet must be unique")
    order = sorted(means, key=lambda node: (means[node], node))
    size, extra = divmod(len(order), k)
    assignment = {}
    centroids = []
    pos = 0
    for c in range(k):
        count = size + (1 if c < extra else 0)
        group = order[pos:pos + count]
        pos += count
        for node in group:
            assignment[node] = c
        centroids.append(float(np.mean([means[node] for node in group])))
    return ClusterAssignment(k, assignment, tuple(centroids))


def train_shared(members: Sequence[LightTrace], hw, hp, crit, seed, days: int = 7) -> QTable:
    """One table for a group of nodes, replaying their first ``days`` days round-robin."""
    groups = [day_episodes(tr, 0, days * SLOTS_PER_DAY) for tr in members]
    return train_on_episodes(QTable(), interleave(groups), hw, hp, crit, seed).table


def run_shared_policy(bases: Sequence[LightTrace], fleet: Sequence[LightTrace],
                      assignment: ClusterAssignment, hw: HardwareConfig, hp: Hyperparameters,
                      crit: ConvergenceCriterion, seed: int, train_days: int = 7) -> ExperimentReport:
    """Per-cluster tables versus one fleet-wide table, scored on the base traces.

    Members keep fleet order inside each cluster and every table trains with
    the same seed, so a single cluster reproduces the global table exactly.
    """
    by_id = {tr.node_id: tr for tr in fleet}
    if set(by_id) != set(assignment.assignment):
        raise ValueError("cluster assignment does not cover the fleet")
    train_seed = derive_seed(seed, "shared")
    cluster_tables = []
    for c in range(assignment.cluster_count):
        members = [tr for tr in fleet if assignment.assignment[tr.node_id] == c]
        log.info("training cluster %d on %d nodes", c, len(members))
        cluster_tables.append(train_shared(members, hw, hp, crit, train_seed, train_days))
    log.info("training global table on %d nodes", len(fleet))
    global_table = train_shared(list(fleet), hw, hp, crit, train_seed, train_days)

    report = ExperimentReport("shared", seed)
    report.extra["clusters"] = {
        "k": assignment.cluster_count,
        "centroids": list(assignment.centroids),
        "sizes": [len(assignment.members(c)) for c in range(assignment.cluster_count)],
    }
    base_clusters = {}
    for base in bases:
        c = assignment.nearest(weekly_mean_lux(base, 0))
        base_clusters[base.node_id] = c
        lux, weekend = _slots(base)
        eval_seed = derive_seed(seed, base.node_id, "eval")
        for arm, table in (("cluster", cluster_tables[c]), ("global", global_table)):
            rec = _Recorder(lux.size)
            rec.put(0, rollout(table, lux, weekend, NodeEnergyState.initial(hw), hw, eval_seed))
            report.add_node(rec.finish(arm, base.node_id, 0, 0, [], None))
    report.extra["base_cluster"] = base_clusters
    report.extra["totals"] = {
        base.node_id: {arm: report.node_summary(arm, base.node_id).total_reward
                       for arm in ("cluster", "global")}
        for base in bases
    }
    for c, table in enumerate(cluster_tables):
        report.tables[("cluster", f"cluster{c}")] = table
    report.tables[("global", "fleet")] = global_table
    return report


def run_fleet_experiment(bases: Sequence[LightTrace], hw, hp, crit, seed, per_base_count: int = 200,
                         k: int = 5, train_days: int = 7) -> ExperimentReport:
    """Augment the bases into a fleet, cluster it and compare shared tables.

    Only the first ``train_days`` of each base are augmented: clustering and
    training never look further, and full-length copies of a 1000-node fleet
    would not fit comfortably in memory.
    """
    heads = tuple(b.crop_days(0, train_days) for b in bases)
    fleet = build_fleet(FleetSpec(heads, per_base_count, seed))
    assignment = cluster_fleet(fleet, k)
    return run_shared_policy(bases, fleet, assignment, hw, hp, crit, seed, train_days)


# --------------------------------------------------------------------------
# Transfer learning


def pretrain_general(bases: Sequence[LightTrace], hw, hp, crit, seed, days: int = 7) -> QTable:
    return train_shared(bases, hw, hp, crit, derive_seed(seed, "pretrain"), days)


def run_transfer(bases: Sequence[LightTrace], hw: HardwareConfig, hp: Hyperparameters,
                 crit: ConvergenceCriterion, seed: int, pretrain_days: int = 7,
                 prior: QTable | None = None, cold_arm: bool = True) -> ExperimentReport:
    """Day-by-day learning after the first week, warm-started from a general table.

    The cold arm runs the same post-week days from an empty table.
    """
    for b in bases:
        if b.days < pretrain_days + 2:
            raise TraceError(f"{b.node_id}: transfer needs at least {pretrain_days + 2} days")
    general = prior if prior is not None else pretrain_general(bases, hw, hp, crit, seed, pretrain_days)
    report = ExperimentReport("transfer", seed)
    report.tables[("transfer", "general")] = general
    for b in bases:
        post = b.crop_days(pretrain_days, b.days - pretrain_days)
        report.add_node(simulate_day_by_day(post, hw, hp, crit, seed, prior=general,
                                            arm="transfer", first_day=pretrain_days))
        if cold_arm:
            report.add_node(simulate_day_by_day(post, hw, hp, crit, seed, prior=None,
                                                arm="cold", first_day=pretrain_days))
    return report
