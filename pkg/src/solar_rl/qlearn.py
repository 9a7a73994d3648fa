"""Tabular Q-learning over discretised (light, storage, weekend) states."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import _core
from .energy import HardwareConfig, NodeEnergyState
from .envsim import SLOT_SECONDS, SLOTS_PER_DAY
from .traces import LightTrace, TraceError, slot_series, slot_weekend, weekend_mask

STATE_SHAPE = (11, 11, 2)
N_ACTIONS = 4
QTABLE_FORMAT = "solar-rl/qtable"
EPISODE_START = {"reset": _core.START_RESET, "carry": _core.START_CARRY, "random": _core.START_RANDOM}


@dataclass(frozen=True)
class Hyperparameters:
    gamma: float = 0.99
    epsilon_max: float = 1.0
    epsilon_min: float = 0.1
    epsilon_decrement: float = 0.0004
    alpha: float = 0.1

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.epsilon_min <= self.epsilon_max <= 1:
            raise ValueError("require 0 <= epsilon_min <= epsilon_max <= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if not self.epsilon_decrement > 0:
            raise ValueError("epsilon_decrement must be > 0")


@dataclass(frozen=True)
class ConvergenceCriterion:
    """Stop once the mean Q-value has been flat for ``window`` episodes.

    Flat means (max - min) / |latest| over the window is at most
    ``tolerance``. ``max_episodes`` caps sessions that never settle.
    """

    window: int = 50
    tolerance: float = 1e-3
    max_episodes: int = 20000
    episode_start: str = "random"

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_episodes < 0:
            raise ValueError("max_episodes must be >= 0")
        if self.episode_start not in EPISODE_START:
            raise ValueError(f"episode_start must be one of {sorted(EPISODE_START)}")


class QTable:
    """Dense Q-values with a record of which entries have been written.

    Unwritten entries read as 0, matching an empty-table start. States are
    indexed by integer tuples; :class:`~solar_rl.envsim.ObservedState`
    works directly because ``bool`` indexes as 0/1.
    """

    def __init__(self, state_shape: Sequence[int] = STATE_SHAPE, n_actions: int = N_ACTIONS,
                 metadata: dict | None = None):
        self.state_shape = tuple(int(n) for n in state_shape)
        self.n_actions = int(n_actions)
        self.values = np.zeros(self.state_shape + (self.n_actions,))
        self.visited = np.zeros(self.values.shape, dtype=bool)
        self.metadata = dict(metadata or {})

    def _key(self, state) -> tuple:
        return tuple(int(x) for x in state)

    def lookup(self, state, action: int) -> float:
        return float(self.values[self._key(state) + (int(action),)])

    def row(self, state) -> np.ndarray:
        return self.values[self._key(state)]

    def store(self, state, action: int, value: float) -> None:
        idx = self._key(state) + (int(action),)
        self.values[idx] = value
        self.visited[idx] = True

    def __len__(self) -> int:
        return int(self.visited.sum())

    def mean_value(self) -> float:
        return float(self.values.mean())

    def copy(self) -> "QTable":
        other = QTable(self.state_shape, self.n_actions, self.metadata)
        other.values[...] = self.values
        other.visited[...] = self.visited
        return other

    def greedy_policy(self, rng: np.random.Generator):
        return lambda state: select_action(self, state, 0.0, rng)

    def same_entries(self, other: "QTable") -> bool:
        return (self.state_shape == other.state_shape
                and np.array_equal(self.visited, other.visited)
                and np.array_equal(self.values, other.values))

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        entries = {}
        for idx in itertools.product(*(range(n) for n in self.values.shape)):
            if self.visited[idx]:
                entries[",".join(map(str, idx))] = float(self.values[idx])
        return {
            "format": QTABLE_FORMAT,
            "state_shape": list(self.state_shape),
            "n_actions": self.n_actions,
            "metadata": self.metadata,
            "entries": entries,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, data: dict) -> "QTable":
        if data.get("format") != QTABLE_FORMAT:
            raise ValueError(f"not a Q-table document (format={data.get('format')!r})")
        table = cls(data["state_shape"], data["n_actions"], data.get("metadata"))
        for key, value in data["entries"].items():
            idx = tuple(int(x) for x in key.split(","))
            table.store(idx[:-1], idx[-1], float(value))
        return table

    @classmethod
    def load(cls, path) -> "QTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def q_lookup(table: QTable, s, a: int) -> float:
    return table.lookup(s, a)


def select_action(table: QTable, s, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; ties in the greedy branch are broken uniformly."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(table.n_actions))
    row = table.row(s)
    best = np.flatnonzero(row == row.max())
    return int(best[0]) if best.size == 1 else int(rng.choice(best))


def td_target(r: float, next_row: np.ndarray, gamma: float) -> float:
    return r + gamma * float(np.max(next_row))


def q_update(table: QTable, s, a: int, r: float, s_next, hp: Hyperparameters) -> QTable:
    """Move Q(s, a) a fraction ``alpha`` toward r + gamma * max Q(s', .), in place."""
    q_predict = table.lookup(s, a)
    q_target = td_target(r, table.row(s_next), hp.gamma)
    table.store(s, a, q_predict + hp.alpha * (q_target - q_predict))
    return table


def epsilon_at(step: int, hp: Hyperparameters) -> float:
    """Exploration rate after ``step`` decays of a session."""
    return max(hp.epsilon_max - step * hp.epsilon_decrement, hp.epsilon_min)


def decay_epsilon(epsilon: float, hp: Hyperparameters) -> float:
    """One linear decay step, floored at ``epsilon_min``.

    Values on the schedule are recomputed from their step count so that
    2250 decays of 0.0004 from 1.0 give exactly 0.1; repeated subtraction
    would drift by a few ulps.
    """
    steps = (hp.epsilon_max - epsilon) / hp.epsilon_decrement
    k = round(steps)
    if abs(steps - k) <= 1e-6:
        return epsilon_at(k + 1, hp)
    return max(epsilon - hp.epsilon_decrement, hp.epsilon_min)


# --------------------------------------------------------------------------
# Episodes and training


class Episodes(NamedTuple):
    """Day-long replay segments; arrays carry one look-ahead column.

    ``track`` numbers the source trace of each episode so that node state
    can persist across a trace's consecutive days.
    """

    lux: np.ndarray
    weekend: np.ndarray
    length: np.ndarray
    track: np.ndarray
    sources: tuple

    @property
    def count(self) -> int:
        return self.lux.shape[0]


def day_episodes(trace: LightTrace, first_slot: int = 0, end_slot: int | None = None) -> Episodes:
    """Cut slots ``[first_slot, end_slot)`` into day episodes.

    Episodes start on day boundaries; a trailing partial day becomes a short
    episode. The look-ahead after an episode's last slot is the following
    slot when it lies inside the window. Past the window the light is
    unknown and repeats the last slot, while the weekend flag still follows
    the calendar.
    """
    lux = slot_series(trace, SLOT_SECONDS)
    end_slot = lux.size if end_slot is None else end_slot
    if not 0 <= first_slot < end_slot <= lux.size:
        raise TraceError(f"slot window [{first_slot}, {end_slot}) invalid for {lux.size} slots")
    stamps = trace.start + SLOT_SECONDS * np.arange(first_slot, end_slot + 1, dtype=np.int64)
    weekend = weekend_mask(stamps, trace.utc_offset_hours)
    window = np.append(lux[first_slot:end_slot], lux[end_slot - 1])
    starts = list(range(0, end_slot - first_slot, SLOTS_PER_DAY))
    n = len(starts)
    ep_lux = np.zeros((n, SLOTS_PER_DAY + 1))
    ep_wk = np.zeros((n, SLOTS_PER_DAY + 1), dtype=np.bool_)
    ep_len = np.zeros(n, dtype=np.int64)
    for i, lo in enumerate(starts):
        m = min(SLOTS_PER_DAY, end_slot - first_slot - lo)
        ep_lux[i, :m + 1] = window[lo:lo + m + 1]
        ep_wk[i, :m + 1] = weekend[lo:lo + m + 1]
        ep_lux[i, m + 1:] = ep_lux[i, m]
        ep_wk[i, m + 1:] = ep_wk[i, m]
        ep_len[i] = m
    return Episodes(ep_lux, ep_wk, ep_len, np.zeros(n, dtype=np.int64), (trace.node_id,))


def interleave(groups: Sequence[Episodes]) -> Episodes:
    """Round-robin merge: day 0 of every group, then day 1 of every group, ..."""
    order = []
    longest = max(g.count for g in groups)
    for d in range(longest):
        for gi, g in enumerate(groups):
            if d < g.count:
                order.append((gi, d))
    offsets = np.cumsum([0] + [int(g.track.max()) + 1 for g in groups])
    lux = np.stack([groups[g].lux[d] for g, d in order])
    weekend = np.stack([groups[g].weekend[d] for g, d in order])
    length = np.array([groups[g].length[d] for g, d in order], dtype=np.int64)
    track = np.array([groups[g].track[d] + offsets[g] for g, d in order], dtype=np.int64)
    sources = tuple(s for g in groups for s in g.sources)
    return Episodes(lux, weekend, length, track, sources)


class TrainingResult(NamedTuple):
    table: QTable
    episodes_run: int
    mean_history: np.ndarray


def train_on_episodes(table: QTable, episodes: Episodes, hw: HardwareConfig,
                      hp: Hyperparameters, crit: ConvergenceCriterion, seed: int) -> TrainingResult:
    if table.state_shape != STATE_SHAPE or table.n_actions != N_ACTIONS:
        raise ValueError("training requires a full-size state table")
    new = table.copy()
    means = np.zeros(max(crit.max_episodes, 1))
    if crit.max_episodes == 0 or episodes.count == 0:
        return TrainingResult(new, 0, means[:0])
    n = _core.train_kernel(
        new.values, new.visited, episodes.lux, episodes.weekend, episodes.length, episodes.track,
        hw.vector, float(SLOT_SECONDS), hp.gamma, hp.epsilon_max, hp.epsilon_min,
        hp.epsilon_decrement, hp.alpha, crit.window, crit.tolerance, crit.max_episodes,
        _seed32(seed), means, EPISODE_START[crit.episode_start])
    new.metadata = {
        "hyperparameters": asdict(hp),
        "episodes": int(n) + int(table.metadata.get("episodes", 0)),
        "sources": sorted(set(table.metadata.get("sources", [])) | set(episodes.sources)),
    }
    return TrainingResult(new, int(n), means[:n].copy())


def train_on_trace(table: QTable, trace_window: LightTrace, hw: HardwareConfig,
                   hp: Hyperparameters, crit: ConvergenceCriterion, seed: int) -> tuple[QTable, int]:
    """Replay every day of ``trace_window`` until the mean Q-value settles."""
    if trace_window.days < 1:
        raise TraceError("training needs at least one whole day")
    result = train_on_episodes(table, day_episodes(trace_window), hw, hp, crit, seed)
    return result.table, result.episodes_run


# --------------------------------------------------------------------------
# Execution


@dataclass
class Rollout:
    rewards: np.ndarray
    depleted: np.ndarray
    samples: np.ndarray
    actions: np.ndarray
    volts: np.ndarray
    final: NodeEnergyState

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())

    def day_rewards(self) -> np.ndarray:
        return self.rewards.reshape(-1, SLOTS_PER_DAY).sum(axis=1)


def rollout(table: QTable | None, lux: np.ndarray, weekend: np.ndarray, node: NodeEnergyState,
            hw: HardwareConfig, seed: int, fixed_action: int | None = None) -> Rollout:
    """Run a frozen greedy policy (or one fixed action) over consecutive slots."""
    n = lux.size
    values = table.values if table is not None else np.zeros(STATE_SHAPE + (N_ACTIONS,))
    rewards = np.zeros(n)
    depleted = np.zeros(n, dtype=np.bool_)
    samples = np.zeros(n, dtype=np.int64)
    actions = np.zeros(n, dtype=np.int64)
    volts = np.zeros(n)
    fixed = -1 if fixed_action is None else int(fixed_action)
    v, alive = _core.run_kernel(
        values, np.ascontiguousarray(lux, dtype=np.float64), np.ascontiguousarray(weekend, dtype=np.bool_),
        float(node.voltage), bool(node.alive), hw.vector, float(SLOT_SECONDS), fixed,
        _seed32(seed), rewards, depleted, samples, actions, volts)
    last = int(actions[-1]) if n and actions[-1] >= 0 else node.performance_state
    return Rollout(rewards, depleted, samples, actions, volts, NodeEnergyState(v, alive, last))


class PolicyEvaluation(NamedTuple):
    total_reward: float
    depletion_days: int
    samples_sent: int


def evaluate_slots(table: QTable | None, lux: np.ndarray, weekend: np.ndarray, hw: HardwareConfig,
                   seed: int = 0, fixed_action: int | None = None) -> PolicyEvaluation:
    run = rollout(table, lux, weekend, NodeEnergyState.initial(hw), hw, seed, fixed_action)
    n_days = math.ceil(lux.size / SLOTS_PER_DAY)
    padded = np.zeros(n_days * SLOTS_PER_DAY, dtype=bool)
    padded[:lux.size] = run.depleted
    dead_days = int(padded.reshape(n_days, SLOTS_PER_DAY).any(axis=1).sum())
    return PolicyEvaluation(run.total_reward, dead_days, int(run.samples.sum()))


def evaluate_policy(table: QTable | None, trace_window: LightTrace, hw: HardwareConfig,
                    seed: int = 0, fixed_action: int | None = None) -> PolicyEvaluation:
    """Greedy run over every day of the window from a freshly charged node."""
    if trace_window.days < 1:
        raise TraceError("evaluation needs at least one whole day")
    return evaluate_slots(table, slot_series(trace_window, SLOT_SECONDS),
                          slot_weekend(trace_window, SLOT_SECONDS), hw, seed, fixed_action)


# --------------------------------------------------------------------------
# Reference solver


def value_iteration_oracle(transitions: np.ndarray, rewards: np.ndarray, gamma: float,
                           tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Optimal Q for an explicit MDP by Bellman-optimality iteration.

    ``transitions[s, a, s']`` are probabilities and ``rewards[s, a]`` the
    expected immediate reward. Iterates until successive Q differ by less
    than ``tol`` in sup-norm.
    """
    p = np.asarray(transitions, dtype=np.float64)
    r = np.asarray(rewards, dtype=np.float64)
    if p.ndim != 3 or r.shape != p.shape[:2] or p.shape[0] != p.shape[2]:
        raise ValueError("transitions must be (S, A, S) and rewards (S, A)")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r))):
        raise ValueError("MDP contains non-finite entries")
    if not np.allclose(p.sum(axis=2), 1.0):
        raise ValueError("transition rows must sum to 1")
    if not 0 <= gamma < 1:
        raise ValueError("gamma must be in [0, 1)")
    q = np.zeros_like(r)
    for _ in range(max_iter):
        q_new = r + gamma * p @ q.max(axis=1)
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    raise RuntimeError("value iteration did not converge")


def q_learning_mdp(transitions: np.ndarray, rewards: np.ndarray, hp: Hyperparameters,
                   steps: int, seed: int, epsilon: float = 1.0, start: int = 0) -> np.ndarray:
    """Learn Q for an explicit MDP from one long simulated trajectory.

    Uses the same update as trace training with a fixed exploration rate,
    which is what the value-iteration comparison needs: every (s, a) keeps
    being visited.
    """
    p = np.asarray(transitions, dtype=np.float64)
    r = np.asarray(rewards, dtype=np.float64)
    if p.ndim != 3 or r.shape != p.shape[:2] or p.shape[0] != p.shape[2]:
        raise ValueError("transitions must be (S, A, S) and rewards (S, A)")
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must be in [0, 1]")
    q = np.zeros_like(r)
    _core.explicit_q_kernel(np.cumsum(p, axis=2), r, q, hp.gamma, hp.alpha, float(epsilon),
                            int(steps), int(start), _seed32(seed))
    return q


def _seed32(seed: int) -> int:
    return int(seed) % (2 ** 32)
