"""The locomotion reward suite: fourteen terms with published coefficients.

Tracking terms reward forward-velocity and yaw-rate agreement; the rest are
penalties shaping impact mitigation (contact velocity at touchdown), stance
quality (slip, clearance), posture (orientation, joint position, base
motion), effort (torque, speed), and command smoothness.  The gait term pays
a flat bonus for the two diagonal trot support patterns.

Leg index order is fixed: RR, RL, FR, FL.  The touchdown attribution flag
k_contact is 1 only at the step immediately before a foot makes contact, so
rewards are finalized one step late by whoever consumes them (the rollout
collector); no foresight exists at act time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RewardConfig",
    "StepObservation",
    "RewardBreakdown",
    "TERM_NAMES",
    "compute_reward_terms",
    "compute_rewards",
    "gait_reward",
    "mark_precontact",
]

TERM_NAMES = (
    "linear_velocity",
    "angular_velocity",
    "contact_velocity",
    "foot_slip",
    "foot_clearance",
    "orientation",
    "joint_torque",
    "joint_position",
    "joint_speed",
    "joint_acceleration",
    "action_smoothness1",
    "action_smoothness2",
    "base_motion",
    "gait",
)


@dataclass(frozen=True)
class RewardConfig:
    """Term coefficients; defaults are the published values.

    The published coefficient table omits the foot-clearance coefficient even
    though the term is listed, so c_clearance carries our default (negative,
    keeping it a penalty) and is config-overridable like the rest.
    """

    c_v: float = 6.0
    c_yaw_rate: float = 3.0
    c_gait: float = 1.2
    c_contact: float = -6.0
    c_slip: float = -0.16
    c_orientation: float = -3.0
    c_torque: float = -2e-4
    c_position: float = -0.75
    c_speed: float = -3e-4
    c_acceleration: float = -0.67e-2
    c_base: float = -4.0
    c_smooth1: float = -2.5
    c_smooth2: float = -0.8
    c_clearance: float = -0.5
    desired_foot_clearance: float = 0.12   # swing-apex target height [m]
    q_nominal: tuple = (0.0,) * 8          # [rad]


@dataclass(frozen=True)
class StepObservation:
    """Everything one step's reward consumes; fields in world frame.

    v_xy / foot_vxy are horizontal-plane velocities, (x, y) with y the
    lateral axis; the planar simulator feeds (vx, 0).
    """

    v_xy: tuple                 # body linear velocity [m/s]
    v_desired_xy: tuple
    yaw_rate: float             # [rad/s]
    yaw_rate_desired: float
    contacts: tuple             # per-foot boolean, order RR, RL, FR, FL
    precontact: tuple           # k_contact flags, same order
    foot_vz: tuple              # foot vertical velocity [m/s]
    foot_vxy: tuple             # per-foot (vx, vy) [m/s]
    foot_height: tuple          # world foot height [m]
    body_z_axis: tuple          # unit vector
    world_z_axis: tuple         # unit vector
    joint_torque: tuple         # applied joint torques [N*m]
    joint_pos: tuple            # [rad]
    joint_vel: tuple            # [rad/s]
    joint_vel_prev: tuple
    q_des: tuple                # desired joint positions, current and history [rad]
    q_des_prev: tuple
    q_des_prev2: tuple
    base_vz: float              # [m/s]
    roll_rate: float            # [rad/s]
    pitch_rate: float           # [rad/s]


@dataclass(frozen=True)
class RewardBreakdown:
    terms: dict
    total: float


def compute_reward_terms(cfg: RewardConfig, *, v_xy, v_desired_xy, yaw_rate,
                         yaw_rate_desired, contacts, precontact, foot_vz,
                         foot_vxy, foot_height, body_z_axis, world_z_axis,
                         joint_torque, joint_pos, joint_vel, joint_vel_prev,
                         q_des, q_des_prev, q_des_prev2, base_vz, roll_rate,
                         pitch_rate) -> dict:
    """All fourteen terms over arrays with arbitrary leading batch axes.

    Vector fields carry their component axis last: v_xy (..., 2), per-foot
    fields (..., 4), foot_vxy (..., 4, 2), axes (..., 3), joints (..., n).
    Returns a dict of term arrays, keys in TERM_NAMES order.
    """
    v_xy = np.asarray(v_xy, dtype=float)
    v_desired_xy = np.asarray(v_desired_xy, dtype=float)
    yaw_rate = np.asarray(yaw_rate, dtype=float)
    yaw_rate_desired = np.asarray(yaw_rate_desired, dtype=float)
    contact_mask = np.asarray(contacts, dtype=bool)
    pre_mask = np.asarray(precontact, dtype=float)
    foot_vz = np.asarray(foot_vz, dtype=float)
    foot_vxy = np.asarray(foot_vxy, dtype=float)
    foot_height = np.asarray(foot_height, dtype=float)
    body_z = np.asarray(body_z_axis, dtype=float)
    world_z = np.asarray(world_z_axis, dtype=float)
    tau = np.asarray(joint_torque, dtype=float)
    q = np.asarray(joint_pos, dtype=float)
    qd = np.asarray(joint_vel, dtype=float)
    qd_prev = np.asarray(joint_vel_prev, dtype=float)
    a0 = np.asarray(q_des, dtype=float)
    a1 = np.asarray(q_des_prev, dtype=float)
    a2 = np.asarray(q_des_prev2, dtype=float)
    q_nom = np.asarray(cfg.q_nominal, dtype=float)

    terms = {}
    dv = v_desired_xy - v_xy
    terms["linear_velocity"] = cfg.c_v * np.exp(-np.sum(dv * dv, axis=-1))
    dyaw = yaw_rate_desired - yaw_rate
    terms["angular_velocity"] = cfg.c_yaw_rate * np.exp(-1.5 * dyaw * dyaw)

    terms["contact_velocity"] = cfg.c_contact * np.sum(
        pre_mask * foot_vz * foot_vz, axis=-1)
    vxy_sq = np.sum(foot_vxy * foot_vxy, axis=-1)
    terms["foot_slip"] = cfg.c_slip * np.sum(
        np.where(contact_mask, vxy_sq, 0.0), axis=-1)
    clearance_err = foot_height - cfg.desired_foot_clearance
    terms["foot_clearance"] = cfg.c_clearance * np.sum(
        np.where(contact_mask, 0.0,
                 clearance_err * clearance_err * vxy_sq ** 0.25), axis=-1)

    cross = np.cross(body_z, world_z)
    dot = np.sum(body_z * world_z, axis=-1)
    angle = np.arctan2(np.linalg.norm(np.atleast_1d(cross), axis=-1), dot)
    terms["orientation"] = cfg.c_orientation * angle * angle

    terms["joint_torque"] = cfg.c_torque * np.sum(tau * tau, axis=-1)
    dq = q - q_nom
    terms["joint_position"] = cfg.c_position * np.sum(dq * dq, axis=-1)
    terms["joint_speed"] = cfg.c_speed * np.sum(qd * qd, axis=-1)
    dqd = qd - qd_prev
    terms["joint_acceleration"] = cfg.c_acceleration * np.sum(dqd * dqd, axis=-1)
    d1 = a0 - a1
    terms["action_smoothness1"] = cfg.c_smooth1 * np.sum(d1 * d1, axis=-1)
    d2 = a0 - 2.0 * a1 + a2
    terms["action_smoothness2"] = cfg.c_smooth2 * np.sum(d2 * d2, axis=-1)

    terms["base_motion"] = cfg.c_base * (
        0.8 * np.asarray(base_vz, dtype=float) ** 2
        + 0.2 * np.abs(np.asarray(roll_rate, dtype=float))
        + 0.2 * np.abs(np.asarray(pitch_rate, dtype=float)))

    rr, rl, fr, fl = (contact_mask[..., 0], contact_mask[..., 1],
                      contact_mask[..., 2], contact_mask[..., 3])
    trot = (rr & fl & ~rl & ~fr) | (~rr & ~fl & rl & fr)
    terms["gait"] = np.where(trot, cfg.c_gait, 0.0)
    return terms


def compute_rewards(cfg: RewardConfig, obs: StepObservation) -> RewardBreakdown:
    """Per-term breakdown plus total for one observation."""
    terms = compute_reward_terms(
        cfg,
        v_xy=obs.v_xy, v_desired_xy=obs.v_desired_xy,
        yaw_rate=obs.yaw_rate, yaw_rate_desired=obs.yaw_rate_desired,
        contacts=obs.contacts, precontact=obs.precontact,
        foot_vz=obs.foot_vz, foot_vxy=obs.foot_vxy,
        foot_height=obs.foot_height,
        body_z_axis=obs.body_z_axis, world_z_axis=obs.world_z_axis,
        joint_torque=obs.joint_torque, joint_pos=obs.joint_pos,
        joint_vel=obs.joint_vel, joint_vel_prev=obs.joint_vel_prev,
        q_des=obs.q_des, q_des_prev=obs.q_des_prev, q_des_prev2=obs.q_des_prev2,
        base_vz=obs.base_vz, roll_rate=obs.roll_rate, pitch_rate=obs.pitch_rate)
    scalar = {name: float(terms[name]) for name in TERM_NAMES}
    return RewardBreakdown(terms=scalar, total=float(sum(scalar.values())))


def gait_reward(cfg: RewardConfig, contacts) -> float:
    """C_gait iff the support pattern is one of the two diagonal trot pairs."""
    rr, rl, fr, fl = (bool(c) for c in contacts)
    trot = (rr and fl and not rl and not fr) or (rl and fr and not rr and not fl)
    return cfg.c_gait if trot else 0.0


def mark_precontact(contact_history) -> np.ndarray:
    """Touchdown attribution flags from a (T, ...) boolean contact history.

    flag[t] = foot not in contact at t and in contact at t+1.  The final
    step's flag is 0: its successor is unknown inside this history, which is
    exactly the one-step-late finalization the collector performs.
    """
    c = np.asarray(contact_history, dtype=bool)
    if c.shape[0] < 2:
        raise ValueError("need at least two steps of contact history")
    flags = np.zeros(c.shape, dtype=bool)
    flags[:-1] = ~c[:-1] & c[1:]
    return flags
