"""Per-node RL environment stepping in 15-minute decision slots."""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from . import _core
from .energy import HardwareConfig, NodeEnergyState, discretize_light, discretize_voltage
from .traces import LightTrace, TraceRangeError, is_weekend, slot_series

SLOT_SECONDS = 900
SLOTS_PER_DAY = 96
DEPLETION_PENALTY = _core.DEPLETION_PENALTY
ACTIONS = (0, 1, 2, 3)
N_STATES = 11 * 11 * 2


class ObservedState(NamedTuple):
    light_level: int
    storage_level: int
    weekend: bool


class SlotOutcome(NamedTuple):
    reward: float
    next_state: ObservedState
    depleted: bool
    samples_sent: int


class Transition(NamedTuple):
    state: ObservedState
    action: int
    reward: float
    next_state: ObservedState


Policy = Callable[[ObservedState], int]


def all_states():
    for light in range(11):
        for storage in range(11):
            for weekend in (False, True):
                yield ObservedState(light, storage, weekend)


def observe(node: NodeEnergyState, lux: float, timestamp: float, hw: HardwareConfig,
            utc_offset_hours: float = 0.0) -> ObservedState:
    return ObservedState(
        discretize_light(lux),
        discretize_voltage(node.voltage, hw),
        is_weekend(timestamp, utc_offset_hours),
    )


def _check_action(action) -> int:
    if action not in ACTIONS:
        raise ValueError(f"invalid action {action!r}; expected one of {ACTIONS}")
    return int(action)


def _slot_context(trace: LightTrace, slots: np.ndarray, slot_index: int):
    if not 0 <= slot_index < slots.size:
        raise TraceRangeError(f"slot {slot_index} outside trace of {slots.size} slots")
    nxt = min(slot_index + 1, slots.size - 1)
    start = trace.start + slot_index * SLOT_SECONDS
    return slots[slot_index], start, slots[nxt], trace.start + nxt * SLOT_SECONDS


def env_step(node: NodeEnergyState, action: int, trace: LightTrace, slot_index: int,
             hw: HardwareConfig, _slots: np.ndarray | None = None) -> tuple[NodeEnergyState, SlotOutcome]:
    """Apply ``action`` for one slot of ``trace``.

    A dead node ignores the action and earns 0 while it recharges. The
    observation after the final slot of a trace reuses that slot's light.
    """
    action = _check_action(action)
    slots = slot_series(trace, SLOT_SECONDS) if _slots is None else _slots
    lux, _, lux_next, ts_next = _slot_context(trace, slots, slot_index)
    v, alive, reward, depleted, sent = _core.slot_transition(
        float(node.voltage), bool(node.alive), float(lux), action, float(SLOT_SECONDS), hw.vector)
    new_node = NodeEnergyState(v, alive, action if node.alive else node.performance_state)
    next_state = observe(new_node, lux_next, ts_next, hw, trace.utc_offset_hours)
    return new_node, SlotOutcome(reward, next_state, depleted, sent)


class DayResult(NamedTuple):
    node: NodeEnergyState
    day_reward: float
    transitions: list[Transition]
    depletions: int
    samples_sent: int


def run_day(node: NodeEnergyState, policy: Policy, trace: LightTrace, day_index: int,
            hw: HardwareConfig) -> DayResult:
    """Run the 96 slots of one day under ``policy``.

    Transitions are recorded only for slots in which the node was alive and
    actually took the action.
    """
    if not 0 <= day_index < trace.days:
        raise TraceRangeError(f"day {day_index} outside trace of {trace.days} days")
    slots = slot_series(trace, SLOT_SECONDS)
    first = day_index * SLOTS_PER_DAY
    total = 0.0
    depletions = 0
    sent = 0
    transitions = []
    for k in range(first, first + SLOTS_PER_DAY):
        lux = slots[k]
        state = observe(node, lux, trace.start + k * SLOT_SECONDS, hw, trace.utc_offset_hours)
        was_alive = node.alive
        action = policy(state) if was_alive else 0
        node, outcome = env_step(node, action, trace, k, hw, _slots=slots)
        total += outcome.reward
        depletions += outcome.depleted
        sent += outcome.samples_sent
        if was_alive:
            transitions.append(Transition(state, action, outcome.reward, outcome.next_state))
    return DayResult(node, total, transitions, depletions, sent)
