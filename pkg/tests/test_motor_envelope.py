"""Motor operating region: membership, saturation, envelope geometry."""

import numpy as np
import pytest

from morlab.motor_envelope import (
    EnvelopePolygon,
    MotorSpec,
    OperatingPoint,
    TorqueCurrentMap,
    contains,
    current_to_torque,
    envelope_polygon,
    feasible_torque_interval,
    required_voltage,
    saturate_torque,
    torque_to_current,
    voltage_torque_band,
)

from oracles import monte_carlo_envelope_area, saturation_oracle

# Test fixture constants, chosen so the voltage band crosses the peak band
# inside the speed range of interest (stall torque 81 N*m >> peak 30 N*m).
SPEC = MotorSpec(resistance=0.2, torque_constant=0.2, velocity_constant=10.0,
                 bus_voltage=81.0, peak_torque=30.0)


def test_required_voltage_zero_point():
    assert required_voltage(SPEC, OperatingPoint(0.0, 0.0)) == 0.0


def test_required_voltage_arithmetic():
    # R/Kt * tau + omega/Kv = 0.2/0.2*10 + 100/10 = 20 V
    assert required_voltage(SPEC, OperatingPoint(10.0, 100.0)) == pytest.approx(20.0)


def test_required_voltage_stall_boundary():
    stall = SPEC.torque_constant * SPEC.bus_voltage / SPEC.resistance
    assert required_voltage(SPEC, OperatingPoint(stall, 0.0)) == pytest.approx(
        SPEC.bus_voltage)


def test_interval_at_zero_speed_is_peak_band():
    iv = feasible_torque_interval(SPEC, 0.0)
    assert not iv.empty
    assert iv.lower == pytest.approx(-SPEC.peak_torque)
    assert iv.upper == pytest.approx(SPEC.peak_torque)


def test_interval_upper_vanishes_at_no_load_speed():
    iv = feasible_torque_interval(SPEC, SPEC.velocity_constant * SPEC.bus_voltage)
    assert iv.upper == pytest.approx(0.0, abs=1e-12)
    assert not iv.empty


def test_interval_empty_beyond_reachback_speed():
    omega = SPEC.velocity_constant * (
        SPEC.bus_voltage
        + SPEC.resistance * SPEC.peak_torque / SPEC.torque_constant) * 1.01
    assert feasible_torque_interval(SPEC, omega).empty


def test_interval_point_symmetry():
    for omega in np.linspace(-2500.0, 2500.0, 41):
        a = feasible_torque_interval(SPEC, omega)
        b = feasible_torque_interval(SPEC, -omega)
        assert a.empty == b.empty
        assert a.lower == pytest.approx(-b.upper)
        assert a.upper == pytest.approx(-b.lower)


def test_contains_boundary_closed():
    assert contains(SPEC, OperatingPoint(0.0, 0.0))
    # Point on both boundaries at once.
    omega = SPEC.velocity_constant * (
        SPEC.bus_voltage - SPEC.resistance * SPEC.peak_torque / SPEC.torque_constant)
    assert contains(SPEC, OperatingPoint(SPEC.peak_torque, omega), tol=0.0)


def test_contains_rejects_overvoltage():
    omega = 1.5 * SPEC.bus_voltage * SPEC.velocity_constant
    assert not contains(SPEC, OperatingPoint(0.0, omega))


def test_saturate_inside_is_identity():
    tau, clipped = saturate_torque(SPEC, 12.0, 50.0)
    assert tau == 12.0
    assert not clipped


def test_saturate_idempotent():
    rng = np.random.default_rng(3)
    cmd = rng.uniform(-3 * SPEC.peak_torque, 3 * SPEC.peak_torque, 500)
    omega = rng.uniform(-2500.0, 2500.0, 500)
    once, _ = saturate_torque(SPEC, cmd, omega)
    twice, clipped = saturate_torque(SPEC, once, omega)
    assert np.array_equal(once, twice)
    assert not clipped.any()


def test_saturate_stall_peak_binds_first():
    tau, clipped = saturate_torque(SPEC, 2 * SPEC.peak_torque, 0.0)
    assert tau == pytest.approx(SPEC.peak_torque)
    assert clipped


def test_saturate_high_speed_voltage_bound():
    omega = 700.0  # voltage upper bound here is below the command
    _, vhi = voltage_torque_band(SPEC, omega)
    assert vhi < 25.0
    tau, clipped = saturate_torque(SPEC, 25.0, omega)
    assert tau == pytest.approx(float(vhi))
    assert clipped


def test_saturate_matches_bruteforce_oracle_on_grid():
    taus = np.linspace(-2 * SPEC.peak_torque, 2 * SPEC.peak_torque, 500)
    omegas = np.linspace(-2 * SPEC.velocity_constant * SPEC.bus_voltage,
                         2 * SPEC.velocity_constant * SPEC.bus_voltage, 500)
    tau_grid, omega_grid = np.meshgrid(taus, omegas)
    got, _ = saturate_torque(SPEC, tau_grid, omega_grid)
    want = saturation_oracle(SPEC.resistance, SPEC.torque_constant,
                             SPEC.velocity_constant, SPEC.bus_voltage,
                             SPEC.peak_torque, tau_grid, omega_grid)
    assert np.max(np.abs(got - want)) <= 1e-9


def test_saturate_membership_fuzz():
    rng = np.random.default_rng(7)
    n = 100_000
    cmd = rng.uniform(-3 * SPEC.peak_torque, 3 * SPEC.peak_torque, n)
    omega = rng.uniform(-2.5 * SPEC.velocity_constant * SPEC.bus_voltage,
                        2.5 * SPEC.velocity_constant * SPEC.bus_voltage, n)
    tau, _ = saturate_torque(SPEC, cmd, omega)
    lo, hi = voltage_torque_band(SPEC, omega)
    nonempty = np.maximum(lo, -SPEC.peak_torque) <= np.minimum(hi, SPEC.peak_torque)
    ok = contains(SPEC, OperatingPoint(tau, omega), tol=1e-9)
    assert np.all(ok[nonempty])


def test_envelope_is_point_symmetric_ccw_parallelogram():
    poly = envelope_polygon(SPEC)
    xy = poly.as_array()
    assert xy.shape == (4, 2)
    assert np.allclose(xy, -np.roll(xy, 2, axis=0))
    assert poly.area() > 0  # shoelace positive <=> counterclockwise
    # Each vertex sits on both boundaries.
    for v in poly.vertices:
        assert abs(abs(v.torque) - SPEC.peak_torque) < 1e-12
        assert abs(abs(required_voltage(SPEC, v)) - SPEC.bus_voltage) < 1e-9


def test_envelope_vertices_feasible():
    poly = envelope_polygon(SPEC)
    for v in poly.vertices:
        assert contains(SPEC, v, tol=1e-12)


def test_envelope_area_against_monte_carlo():
    poly = envelope_polygon(SPEC)
    mc = monte_carlo_envelope_area(SPEC.resistance, SPEC.torque_constant,
                                   SPEC.velocity_constant, SPEC.bus_voltage,
                                   SPEC.peak_torque, n=1_000_000, seed=11)
    assert poly.area() == pytest.approx(mc, rel=0.01)


def test_second_quadrant_wider_than_first():
    # Braking at speed admits more torque magnitude than driving.
    omega = 600.0  # past the knee where the voltage line cuts below tau_peak
    iv = feasible_torque_interval(SPEC, omega)
    first = max(0.0, iv.upper)
    second = max(0.0, -iv.lower)
    assert second > first


def test_current_map_zero_and_linear_limit():
    lin = TorqueCurrentMap(0.0, 1.0 / SPEC.torque_constant)
    assert torque_to_current(lin, 0.0) == 0.0
    assert torque_to_current(lin, 3.0) == pytest.approx(3.0 / SPEC.torque_constant)


def test_current_map_odd_and_monotone():
    cmap = TorqueCurrentMap(quad_a=0.04, lin_b=5.0)
    taus = np.linspace(-40.0, 40.0, 801)
    cur = torque_to_current(cmap, taus)
    assert np.allclose(cur, -torque_to_current(cmap, -taus))
    assert np.all(np.diff(cur) > 0)


def test_current_map_roundtrip():
    cmap = TorqueCurrentMap(quad_a=0.04, lin_b=5.0)
    rng = np.random.default_rng(5)
    taus = rng.uniform(-SPEC.peak_torque, SPEC.peak_torque, 1000)
    back = current_to_torque(cmap, torque_to_current(cmap, taus))
    assert np.max(np.abs(back - taus)) <= 1e-12


def test_current_map_rejects_bad_coefficients():
    with pytest.raises(ValueError):
        TorqueCurrentMap(quad_a=-0.1, lin_b=1.0)
    with pytest.raises(ValueError):
        TorqueCurrentMap(quad_a=0.0, lin_b=0.0)


def test_current_map_rejects_nonfinite_current():
    with pytest.raises(ValueError):
        current_to_torque(TorqueCurrentMap(0.0, 1.0), float("nan"))


def test_motor_spec_validation():
    with pytest.raises(ValueError):
        MotorSpec(resistance=-1.0, torque_constant=0.2, velocity_constant=10.0,
                  bus_voltage=81.0, peak_torque=30.0)


def test_default_current_map_is_linear_in_kt():
    assert SPEC.current_map == TorqueCurrentMap(0.0, 1.0 / SPEC.torque_constant)
