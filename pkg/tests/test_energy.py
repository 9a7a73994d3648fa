import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from solar_rl.energy import (
    HardwareConfig,
    NodeEnergyState,
    dark_lifetime,
    discretize_light,
    discretize_voltage,
    energy_of_voltage,
    harvest_power,
    simulate_dark_lifetime,
    slot_load_energy,
    step_energy,
    voltage_of_energy,
)

HW = HardwareConfig()
volts = st.floats(HW.v_min, HW.v_max)
lux_values = st.floats(0, 5000)
# below ~1e-154 the square underflows, which says nothing about the model
any_volts = st.floats(0, 5.5).filter(lambda v: v == 0 or v > 1e-100)
states = st.integers(0, 3)


def test_energy_of_voltage_examples():
    assert energy_of_voltage(5.5, HW) == pytest.approx(15.125, abs=1e-12)
    assert energy_of_voltage(2.1, HW) == pytest.approx(2.205, abs=1e-12)
    assert energy_of_voltage(0, HW) == 0
    with pytest.raises(ValueError):
        energy_of_voltage(-0.1, HW)


def test_voltage_of_energy_examples():
    assert voltage_of_energy(15.125, HW) == pytest.approx(5.5, rel=1e-12)
    assert voltage_of_energy(0, HW) == 0
    assert voltage_of_energy(2.205, HW) == pytest.approx(2.1, rel=1e-12)
    with pytest.raises(ValueError):
        voltage_of_energy(-1, HW)


def test_usable_energy():
    assert HW.usable_energy == pytest.approx(12.92, abs=1e-9)


def test_harvest_power_examples():
    assert harvest_power(0, HW) == 0
    assert harvest_power(2000, HW) == pytest.approx(2e-3)
    assert harvest_power(500, HW) == pytest.approx(5e-4)
    with pytest.raises(ValueError):
        harvest_power(-1, HW)


def test_slot_load_state3():
    # 60 events of 10 mJ, 900 s of 5 uW sleep, divider leak at 3.8 V
    expected = 60 * 0.01 + 5e-6 * 900 + 3.8 ** 2 / 2e7 * 900
    got = slot_load_energy(3, 900, 3.8, True, HW)
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(0.6051, abs=1e-4)


def test_slot_load_state0_is_one_event():
    sleep_and_divider = 5e-6 * 900 + 4.0 ** 2 / 2e7 * 900
    assert slot_load_energy(0, 900, 4.0, True, HW) - sleep_and_divider == pytest.approx(0.01)


def test_slot_load_dead_is_divider_only():
    assert slot_load_energy(3, 900, 2.1, False, HW) == pytest.approx(2.1 ** 2 / 2e7 * 900, rel=1e-12)
    assert slot_load_energy(3, 900, 2.1, False, HW) == pytest.approx(1.98e-4, rel=0.01)


def test_slot_load_invalid_state():
    with pytest.raises(ValueError):
        slot_load_energy(4, 900, 3.0, True, HW)


def test_step_energy_examples():
    full = NodeEnergyState(5.5)
    dark, dep = step_energy(full, 0, 0, 900, HW)
    assert dark.voltage < 5.5 and not dep
    bright, dep = step_energy(full, 2000, 3, 900, HW)
    assert bright.voltage == 5.5 and not dep
    low, dep = step_energy(NodeEnergyState(2.11), 0, 3, 900, HW)
    assert dep and not low.alive


def test_dead_node_revives_only_at_restart():
    dead = NodeEnergyState(2.1, alive=False)
    nxt, dep = step_energy(dead, 100, 0, 900, HW)
    assert not dep and not nxt.alive and nxt.voltage < HW.v_restart
    # strong light long enough to pass the restart threshold
    while not nxt.alive:
        nxt, _ = step_energy(nxt, 2000, 0, 900, HW)
    assert nxt.voltage >= HW.v_restart


def test_discretize_voltage():
    assert discretize_voltage(2.1, HW) == 0
    assert discretize_voltage(5.5, HW) == 10
    assert discretize_voltage(3.8, HW) == 5
    with pytest.raises(ValueError):
        discretize_voltage(5.6, HW)
    with pytest.raises(ValueError):
        discretize_voltage(2.0, HW)


def test_discretize_light():
    assert discretize_light(0) == 0
    assert discretize_light(2500) == 10
    assert discretize_light(1000) == 5
    assert discretize_light(199.999) == 0
    with pytest.raises(ValueError):
        discretize_light(-5)


def test_discretizers_surjective():
    assert {discretize_light(200 * k + 1) for k in range(12)} == set(range(11))
    step = (HW.v_max - HW.v_min) / 10
    assert {discretize_voltage(HW.v_min + step * k, HW) for k in range(11)} == set(range(11))


def test_hardware_validation():
    with pytest.raises(ValueError):
        HardwareConfig(v_restart=2.0)
    with pytest.raises(ValueError):
        HardwareConfig(event_energy=0)
    with pytest.raises(KeyError):
        HardwareConfig.from_dict({"capacitence": 1})
    assert HardwareConfig.from_dict({"capacitance": 2}).capacitance == 2.0


def test_dark_lifetime_closed_form_matches_stepping():
    closed = dark_lifetime(HW, 600)
    stepped = simulate_dark_lifetime(HW, 600, step=60)
    assert stepped == pytest.approx(closed, rel=2e-3)
    assert 6.3 <= closed / 86400 <= 7.7


@settings(max_examples=200)
@given(any_volts, st.floats(0.1, 10))
def test_voltage_energy_round_trip(v, c):
    hw = HardwareConfig(capacitance=c)
    assert voltage_of_energy(energy_of_voltage(v, hw), hw) == pytest.approx(v, rel=1e-9)


@settings(max_examples=200)
@given(any_volts, any_volts)
def test_energy_strictly_increasing(a, b):
    assume(a < b)
    assert energy_of_voltage(a, HW) < energy_of_voltage(b, HW)


@settings(max_examples=200)
@given(st.floats(0, 1e5), st.floats(0, 1e5))
def test_discretize_light_monotone(a, b):
    lo, hi = sorted((a, b))
    assert discretize_light(lo) <= discretize_light(hi)
    assert 0 <= discretize_light(lo) <= 10


@settings(max_examples=200)
@given(volts, volts)
def test_discretize_voltage_monotone(a, b):
    lo, hi = sorted((a, b))
    assert discretize_voltage(lo, HW) <= discretize_voltage(hi, HW)


@settings(max_examples=300)
@given(volts, states, st.booleans())
def test_dark_step_never_charges(v, ps, alive):
    assume(alive or v < HW.v_restart)
    nxt, _ = step_energy(NodeEnergyState(v, alive), 0.0, ps, 900, HW)
    assert nxt.voltage <= v


@settings(max_examples=300)
@given(volts, lux_values, states, st.booleans())
def test_step_respects_bounds_and_dead_invariant(v, lux, ps, alive):
    assume(alive or v < HW.v_restart)
    nxt, dep = step_energy(NodeEnergyState(v, alive), lux, ps, 900, HW)
    assert HW.v_min <= nxt.voltage <= HW.v_max
    if not nxt.alive:
        assert nxt.voltage < HW.v_restart
    if dep:
        assert alive and not nxt.alive


@settings(max_examples=300)
@given(volts, lux_values, states)
def test_energy_bookkeeping_without_clamp(v, lux, ps):
    nxt, dep = step_energy(NodeEnergyState(v), lux, ps, 900, HW)
    e0 = energy_of_voltage(v, HW)
    net = harvest_power(lux, HW) * 900 - slot_load_energy(ps, 900, v, True, HW)
    e1 = e0 + net
    assume(not dep and energy_of_voltage(HW.v_min, HW) < e1 < energy_of_voltage(HW.v_max, HW))
    assert energy_of_voltage(nxt.voltage, HW) - e0 == pytest.approx(net, rel=1e-9, abs=1e-12)


@settings(max_examples=200)
@given(volts, lux_values, states)
def test_depletion_matches_crossing_rule(v, lux, ps):
    _, dep = step_energy(NodeEnergyState(v), lux, ps, 900, HW)
    harvest = harvest_power(lux, HW) * 900
    load = slot_load_energy(ps, 900, v, True, HW)
    crosses = energy_of_voltage(v, HW) + harvest - load <= energy_of_voltage(HW.v_min, HW)
    assert dep == (crosses and load > harvest)


def test_lifetime_monotone_in_period():
    lifetimes = [dark_lifetime(HW, p) for p in (15, 60, 300, 600, 900)]
    assert lifetimes == sorted(lifetimes)
    assert math.isfinite(lifetimes[-1])
