"""Supercapacitor storage, linear PV harvesting and node load model."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from functools import cached_property

import numpy as np

from . import _core
from ._core import PERIODS


@dataclass(frozen=True)
class HardwareConfig:
    """Electrical parameters of one node.

    ``sleep_power``, ``event_energy`` and ``harvest_efficiency`` are
    calibrated so that a full store lasts about a week in the dark when
    sampling every 10 minutes; they are not datasheet values.
    """

    capacitance: float = 1.0
    v_max: float = 5.5
    v_min: float = 2.1
    v_restart: float = 3.0
    divider_resistance: float = 2e7
    sleep_power: float = 5e-6
    event_energy: float = 1.0e-2
    harvest_efficiency: float = 1.0e-6
    v_initial: float = 5.5

    def __post_init__(self):
        if not 0 < self.v_min < self.v_restart <= self.v_max:
            raise ValueError("require 0 < v_min < v_restart <= v_max")
        for name in ("capacitance", "sleep_power", "event_energy", "harvest_efficiency",
                     "divider_resistance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.v_min <= self.v_initial <= self.v_max:
            raise ValueError("v_initial must lie in [v_min, v_max]")

    @cached_property
    def vector(self) -> np.ndarray:
        return np.array([
            self.capacitance, self.v_max, self.v_min, self.v_restart,
            self.divider_resistance, self.sleep_power, self.event_energy,
            self.harvest_efficiency, self.v_initial,
        ], dtype=np.float64)

    @property
    def usable_energy(self) -> float:
        return energy_of_voltage(self.v_max, self) - energy_of_voltage(self.v_min, self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "HardwareConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown hardware field(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class NodeEnergyState:
    voltage: float
    alive: bool = True
    performance_state: int = 0

    @classmethod
    def initial(cls, hw: HardwareConfig) -> "NodeEnergyState":
        return cls(hw.v_initial, True, 0)


def energy_of_voltage(v: float, hw: HardwareConfig) -> float:
    if v < 0:
        raise ValueError(f"negative voltage {v}")
    return 0.5 * hw.capacitance * v * v


def voltage_of_energy(e: float, hw: HardwareConfig) -> float:
    if e < 0:
        raise ValueError(f"negative energy {e}")
    return math.sqrt(2.0 * e / hw.capacitance)


def harvest_power(lux: float, hw: HardwareConfig) -> float:
    if lux < 0:
        raise ValueError(f"negative illuminance {lux}")
    return hw.harvest_efficiency * lux


def sampling_period(performance_state: int) -> float:
    if performance_state not in (0, 1, 2, 3):
        raise ValueError(f"invalid performance state {performance_state!r}")
    return float(PERIODS[performance_state])


def slot_load_energy(performance_state: int, slot_seconds: float, voltage: float,
                     alive: bool, hw: HardwareConfig) -> float:
    """Energy drawn over one slot: sensing events, sleep floor and divider leak."""
    period = sampling_period(performance_state)
    if slot_seconds <= 0:
        raise ValueError("slot_seconds must be > 0")
    return _core.load_energy(period, float(slot_seconds), float(voltage), bool(alive), hw.vector)


def step_energy(state: NodeEnergyState, lux: float, performance_state: int,
                slot_seconds: float, hw: HardwareConfig) -> tuple[NodeEnergyState, bool]:
    period = sampling_period(performance_state)
    if lux < 0:
        raise ValueError(f"negative illuminance {lux}")
    v, alive, depleted, _ = _core.advance(
        float(state.voltage), bool(state.alive), float(lux), period, float(slot_seconds),
        hw.vector)
    return NodeEnergyState(v, alive, performance_state), depleted


def discretize_voltage(v: float, hw: HardwareConfig) -> int:
    if not hw.v_min - 1e-12 <= v <= hw.v_max + 1e-12:
        raise ValueError(f"voltage {v} outside [{hw.v_min}, {hw.v_max}]")
    return _core.storage_level(float(v), hw.v_min, hw.v_max)


def discretize_light(lux: float) -> int:
    if lux < 0:
        raise ValueError(f"negative illuminance {lux}")
    return _core.light_level(float(lux))


def dark_lifetime(hw: HardwareConfig, period: float, v0: float | None = None) -> float:
    """Seconds until a node sampling every ``period`` s in darkness depletes.

    The divider leak makes the drain voltage dependent, so the energy obeys
    dE/dt = -(P + 2E/(C R)), which integrates in closed form.
    """
    v0 = hw.v_max if v0 is None else v0
    p = hw.event_energy / period + hw.sleep_power
    b = 2.0 / (hw.capacitance * hw.divider_resistance)
    e0 = energy_of_voltage(v0, hw)
    e_min = energy_of_voltage(hw.v_min, hw)
    return math.log((e0 + p / b) / (e_min + p / b)) / b


def simulate_dark_lifetime(hw: HardwareConfig, period: float, step: float = 600.0,
                           v0: float | None = None, limit_days: float = 60.0) -> float:
    """Step-wise counterpart of :func:`dark_lifetime` using the slot model."""
    vec = hw.vector
    v = hw.v_max if v0 is None else v0
    t = 0.0
    while t < limit_days * 86400:
        v_next, _, depleted, _ = _core.advance(v, True, 0.0, float(period), step, vec)
        if depleted:
            e0 = energy_of_voltage(v, hw)
            drain = _core.load_energy(float(period), step, v, True, vec) / step
            return t + (e0 - energy_of_voltage(hw.v_min, hw)) / drain
        v = v_next
        t += step
    return math.inf
