"""Actuation pipeline: PD torques, per-motor saturation, space roundtrip."""

import numpy as np
import pytest

from morlab.actuation import (
    PDConfig,
    deployment_current,
    pd_torque,
    run_pipeline,
)
from morlab.gear_coupling import CouplingMatrix, joint_to_motor_velocity
from morlab.motor_envelope import (
    MotorSpec,
    OperatingPoint,
    TorqueCurrentMap,
    contains,
)

MOTOR = MotorSpec(resistance=0.2, torque_constant=0.2, velocity_constant=10.0,
                  bus_voltage=24.0, peak_torque=4.0)
COUPLING = CouplingMatrix(9.0, 9.0)
PD = PDConfig()


def test_pd_zero_error_zero_rate():
    assert pd_torque(PD, np.zeros(2), np.zeros(2), np.zeros(2)) == pytest.approx(0.0)


def test_pd_position_gain():
    out = pd_torque(PD, np.array([0.1]), np.array([0.0]), np.array([0.0]))
    assert out[0] == pytest.approx(5.0)


def test_pd_damping_gain():
    out = pd_torque(PD, np.array([0.0]), np.array([0.0]), np.array([2.0]))
    assert out[0] == pytest.approx(-2.0)


def test_pd_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        pd_torque(PD, np.zeros(3), np.zeros(2), np.zeros(2))


def test_no_clip_is_bitwise_pd_passthrough():
    q = np.array([0.1, -0.2, 0.3, -0.4])
    qd = np.array([0.5, -0.5, 0.2, 0.1])
    q_des = q + 0.01  # small errors, far inside every region
    applied, report = run_pipeline(MOTOR, COUPLING, PD, q_des, q, qd)
    expect = pd_torque(PD, q_des, q, qd)
    assert np.array_equal(applied, expect)
    assert not report.clipped.any()
    assert np.array_equal(report.pre_clip, report.post_clip)


def test_knee_clip_changes_coupled_hip_joint_only_that_leg():
    # Large knee error on leg 0 drives its KFE motor past peak torque while
    # leg 1 stays quiet.  The clipped knee reacts through the shared housing,
    # so the hip joint torque of leg 0 changes too; leg 1 passes through.
    q = np.zeros(4)
    qd = np.zeros(4)
    q_des = np.array([0.0, 2.0, 0.0, 0.001])
    applied, report = run_pipeline(MOTOR, COUPLING, PD, q_des, q, qd)
    pd_path = pd_torque(PD, q_des, q, qd)
    assert list(report.clipped) == [False, True, False, False]
    assert applied[0] != pd_path[0]        # coupled hip changed
    assert applied[1] != pd_path[1]        # clipped knee changed
    assert np.array_equal(applied[2:], pd_path[2:])  # untouched leg bitwise


def test_enforce_off_returns_pd_but_still_reports():
    q = np.zeros(2)
    qd = np.zeros(2)
    q_des = np.array([0.0, 3.0])
    applied, report = run_pipeline(MOTOR, COUPLING, PD, q_des, q, qd,
                                   enforce=False)
    assert np.array_equal(applied, pd_torque(PD, q_des, q, qd))
    assert report.clipped.any()


def test_report_consistency_and_membership_fuzz():
    rng = np.random.default_rng(29)
    n = 100_000
    q = rng.uniform(-1.5, 1.5, (n, 4))
    qd = rng.uniform(-30.0, 30.0, (n, 4))
    q_des = rng.uniform(-2.5, 2.5, (n, 4))
    applied, report = run_pipeline(MOTOR, COUPLING, PD, q_des, q, qd)
    # clipped <=> pre != post, exactly.
    assert np.array_equal(report.clipped, report.pre_clip != report.post_clip)
    # Post-clip motor points are members of the region wherever the slice is
    # non-empty (emptiness can only come from extreme motor speeds).
    omega_m = joint_to_motor_velocity(
        COUPLING, qd.reshape(n, 2, 2)).reshape(n, 4)
    lo = np.maximum(-MOTOR.peak_torque,
                    MOTOR.torque_constant / MOTOR.resistance
                    * (-MOTOR.bus_voltage - omega_m / MOTOR.velocity_constant))
    hi = np.minimum(MOTOR.peak_torque,
                    MOTOR.torque_constant / MOTOR.resistance
                    * (MOTOR.bus_voltage - omega_m / MOTOR.velocity_constant))
    ok = contains(MOTOR, OperatingPoint(report.post_clip, omega_m), tol=1e-9)
    assert np.all(ok[lo <= hi])


def test_applied_torque_reflects_saturated_motor_torques():
    # When a clip fires, the applied joint torque equals the dual transform
    # of the saturated motor torques.
    q = np.zeros(2)
    qd = np.zeros(2)
    q_des = np.array([0.0, 2.0])
    applied, report = run_pipeline(MOTOR, COUPLING, PD, q_des, q, qd)
    expect = COUPLING.matrix_b_inv.T @ report.post_clip
    assert np.allclose(applied, expect, atol=1e-12)


class _Robot:
    def __init__(self):
        self.motor = MOTOR
        self.leg_coupling = COUPLING
        self.pd = PD


def test_deployment_current_zero_and_linear():
    robot = _Robot()
    assert np.allclose(deployment_current(robot, np.zeros(4)), 0.0)
    out = deployment_current(robot, np.array([MOTOR.torque_constant]))
    assert out[0] == pytest.approx(1.0)


def test_deployment_current_quadratic_exceeds_linear():
    robot = _Robot()
    cmap = TorqueCurrentMap(quad_a=0.5, lin_b=1.0 / MOTOR.torque_constant)
    robot.motor = MotorSpec(resistance=0.2, torque_constant=0.2,
                            velocity_constant=10.0, bus_voltage=24.0,
                            peak_torque=4.0, current_map=cmap)
    tau = np.array([3.5])
    quad = deployment_current(robot, tau)
    linear = tau / MOTOR.torque_constant
    assert quad[0] > linear[0]


def test_deployment_current_rejects_out_of_domain():
    with pytest.raises(ValueError):
        deployment_current(_Robot(), np.array([2.0 * MOTOR.peak_torque]))
