"""Command pipeline: desired joint positions -> PD -> motor space -> clip -> joint space.

Per control step the policy's desired joint positions become PD torques (the
desired joint velocity is fixed at zero), the torques and measured joint
velocities are transformed into motor space per leg, each motor command is
saturated into its operating region at the measured motor speed, and the
saturated motor torques come back to joint space.

Legs whose motors did not clip pass the PD torque through bitwise instead of
taking the space roundtrip; the roundtrip is only float-identity to ~1e-16
and exact transparency is what makes constraint-on/constraint-off
trajectories identical below clip onset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gear_coupling import CouplingMatrix
from .motor_envelope import MotorSpec, saturate_torque, torque_to_current

__all__ = [
    "PDConfig",
    "SaturationReport",
    "pd_torque",
    "run_pipeline",
    "apply_pipeline",
    "deployment_current",
]


@dataclass(frozen=True)
class PDConfig:
    """Joint-space PD gains; desired joint velocity is fixed at zero."""

    kp: float = 50.0  # [N*m/rad]
    kd: float = 1.0   # [N*m*s/rad]

    def __post_init__(self) -> None:
        if not self.kp > 0.0:
            raise ValueError(f"kp must be > 0, got {self.kp}")
        if not self.kd >= 0.0:
            raise ValueError(f"kd must be >= 0, got {self.kd}")


@dataclass(frozen=True)
class SaturationReport:
    """Per-motor clip bookkeeping for one control step (batched over envs).

    Arrays have shape (..., n_motors) with per-leg motor pairs adjacent in
    the same (hfe, kfe) order as the joint layout.  This feeds the
    violation-ratio metric: every motor command counts once per step.
    """

    pre_clip: np.ndarray   # motor torque commands before the clamp [N*m]
    post_clip: np.ndarray  # motor torques actually applied [N*m]
    clipped: np.ndarray    # exact pre != post flags

    @property
    def violation_count(self) -> int:
        return int(np.count_nonzero(self.clipped))

    @property
    def command_count(self) -> int:
        return int(self.clipped.size)


def pd_torque(pd: PDConfig, q_desired, q, q_dot) -> np.ndarray:
    """Joint torques kp*(q_desired - q) - kd*q_dot."""
    q_desired = np.asarray(q_desired, dtype=float)
    q = np.asarray(q, dtype=float)
    q_dot = np.asarray(q_dot, dtype=float)
    if not (q_desired.shape == q.shape == q_dot.shape):
        raise ValueError(
            f"shape mismatch: {q_desired.shape}, {q.shape}, {q_dot.shape}")
    return pd.kp * (q_desired - q) - pd.kd * q_dot


def run_pipeline(motor: MotorSpec, coupling: CouplingMatrix, pd: PDConfig,
                 q_desired, q, q_dot, enforce: bool = True):
    """Full actuation path over (..., n_legs*2) joint arrays.

    Returns (applied joint torques, SaturationReport).  With enforce off the
    PD torques are applied untouched; the report is still populated so the
    violation ratio can be logged for unconstrained runs.
    """
    tau_pd = pd_torque(pd, q_desired, q, q_dot)
    if tau_pd.shape[-1] % 2 != 0:
        raise ValueError(f"expected hfe/kfe joint pairs, got {tau_pd.shape}")
    pairs = tau_pd.shape[:-1] + (tau_pd.shape[-1] // 2, 2)

    tau_j = tau_pd.reshape(pairs)
    omega_j = np.asarray(q_dot, dtype=float).reshape(pairs)
    torque_dual = coupling.matrix_b_inv.T if coupling.use_inverse_transpose_dual \
        else coupling.matrix_b.T
    tau_m = np.einsum("ij,...j->...i", torque_dual, tau_j)
    omega_m = np.einsum("ij,...j->...i", coupling.matrix_b_inv, omega_j)

    tau_m_sat, clipped = saturate_torque(motor, tau_m, omega_m)
    tau_m_sat = np.asarray(tau_m_sat)
    clipped = np.asarray(clipped)
    report = SaturationReport(
        pre_clip=tau_m.reshape(tau_pd.shape),
        post_clip=tau_m_sat.reshape(tau_pd.shape),
        clipped=clipped.reshape(tau_pd.shape))

    if not enforce:
        return tau_pd, report

    back = coupling.matrix_b.T if coupling.use_inverse_transpose_dual \
        else coupling.matrix_b_inv.T
    tau_j_sat = np.einsum("ij,...j->...i", back, tau_m_sat)
    leg_touched = clipped.any(axis=-1, keepdims=True)
    applied = np.where(leg_touched, tau_j_sat, tau_j)
    return applied.reshape(tau_pd.shape), report


def apply_pipeline(robot, q_desired, state, enforce: bool = True):
    """Pipeline over a robot model and sim state (sagittal hfe/kfe joints)."""
    return run_pipeline(robot.motor, robot.leg_coupling, robot.pd,
                        q_desired, state.joint_pos, state.joint_vel,
                        enforce=enforce)


def deployment_current(robot, motor_torques) -> np.ndarray:
    """Per-motor drive currents for applied motor torques [A].

    Rejects torques beyond the peak rating: the tau-i fit was collected
    inside it and the drive would refuse the command anyway.
    """
    motor_torques = np.asarray(motor_torques, dtype=float)
    limit = robot.motor.peak_torque * (1.0 + 1e-9)
    if np.any(np.abs(motor_torques) > limit):
        raise ValueError("motor torque outside the tau-i map domain")
    return torque_to_current(robot.motor.current_map, motor_torques)
