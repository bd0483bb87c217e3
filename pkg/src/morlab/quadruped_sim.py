"""Desk-scale planar quadruped: robot model, episodes, curriculum, vector env.

The robot runs in the sagittal plane with four independent planar legs in
the fixed order RR, RL, FR, FL (see dynamics).  The default stance is the
front-back symmetric X configuration: rear knees bend backward, front knees
forward, which keeps the PD-held stand statically stable well inside the
friction cone.

Episode protocol: 4.0 s episodes at a 0.01 s control period (400 steps),
4 physics substeps of 2.5 ms per control step.  On an episode that ran its
full length, the next episode reuses the final state with probability 0.25
(command redrawn until the jump is at most 2 m/s, no ramp); otherwise the
robot restarts standing at rest with the command ramped linearly from zero
over the first second.  Forward-velocity commands are sampled uniformly
from curriculum bounds that widen linearly over the first 80% of planned
training iterations, while the tracking reward scale rises 0.5 -> 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import SimpleNamespace

import numpy as np

from .actuation import PDConfig, apply_pipeline
from .dynamics import (NUM_COORDS, NUM_LEGS, PlanarParams, foot_heights,
                       foot_jacobian, forward_kinematics, step_dynamics)
from .gear_coupling import CouplingMatrix, joint_to_motor_velocity
from .motor_envelope import MotorSpec

__all__ = [
    "StepFault",
    "RobotModel",
    "SimState",
    "Command",
    "CurriculumConfig",
    "CurriculumState",
    "advance_curriculum",
    "sample_command",
    "randomize_model",
    "stand_state",
    "step",
    "reset",
    "observe",
    "ground_truth",
    "terminate",
    "VectorQuadrupedEnv",
    "OBS_DIM",
    "GROUND_TRUTH_DIM",
    "ACTION_DIM",
]

# Lightweight-foot design change: calf mass and pitch inertia factors.
FOOT_VARIANTS = {
    "original": (1.0, 1.0),
    "lightweight": (0.380, 0.374),
}

CONTROL_DT = 0.01       # [s]
PHYSICS_DT = 0.0025     # [s]
# Any generalized speed beyond this is a failed state, not locomotion:
# freezing there keeps one bad substep from poisoning the step's rewards
# with astronomically large (yet finite) velocities.
RUNAWAY_SPEED = 100.0   # [rad/s or m/s]
EPISODE_SECONDS = 4.0
EPISODE_STEPS = round(EPISODE_SECONDS / CONTROL_DT)

ACTION_DIM = 8
FRAME_DIM = 16          # joint positions + velocities
OBS_DIM = 3 * FRAME_DIM + 2 + ACTION_DIM + 1
GROUND_TRUTH_DIM = 10   # body velocity (2) + foot heights (4) + contacts (4)


class StepFault(RuntimeError):
    """Simulation produced a non-finite state; the episode must end."""


@dataclass(frozen=True)
class RobotModel:
    """Plant, actuation, and stance description of one robot."""

    torso_mass: float = 45.0                 # [kg]
    torso_inertia: float = 1.5               # [kg*m^2]
    torso_com: tuple = (0.0, 0.0)            # body frame [m]
    hip_x: tuple = (-0.22, -0.22, 0.22, 0.22)
    thigh_length: float = 0.25               # [m]
    calf_length: float = 0.25
    thigh_mass: float = 2.0                  # [kg]
    calf_mass: float = 0.7
    thigh_inertia: float = 0.012             # [kg*m^2]
    calf_inertia: float = 0.004
    foot_variant: str = "original"
    friction: float = 0.8
    gravity: float = 9.81
    q_nominal: tuple = (0.6, -1.2, 0.6, -1.2, -0.6, 1.2, -0.6, 1.2)  # [rad]
    motor: MotorSpec = field(default_factory=lambda: MotorSpec(
        resistance=0.2, torque_constant=0.2, velocity_constant=4.0,
        bus_voltage=24.0, peak_torque=4.0))
    leg_coupling: CouplingMatrix = field(
        default_factory=lambda: CouplingMatrix(9.0, 9.0))
    haa_ratio: float = 9.0                   # abduction stage; envelope tooling
    pd: PDConfig = field(default_factory=PDConfig)

    def __post_init__(self):
        if self.foot_variant not in FOOT_VARIANTS:
            raise ValueError(f"unknown foot variant {self.foot_variant!r}")
        for name in ("torso_mass", "torso_inertia", "thigh_length",
                     "calf_length", "thigh_mass", "calf_mass",
                     "thigh_inertia", "calf_inertia", "friction"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def effective_calf_mass(self) -> float:
        return self.calf_mass * FOOT_VARIANTS[self.foot_variant][0]

    @property
    def effective_calf_inertia(self) -> float:
        return self.calf_inertia * FOOT_VARIANTS[self.foot_variant][1]

    def planar_params(self, torso_mass=None, torso_inertia=None,
                      torso_com=None) -> PlanarParams:
        """Dynamics constants; torso overrides allow per-env batch arrays."""
        return PlanarParams(
            torso_mass=self.torso_mass if torso_mass is None else torso_mass,
            torso_inertia=(self.torso_inertia if torso_inertia is None
                           else torso_inertia),
            torso_com=self.torso_com if torso_com is None else torso_com,
            hip_x=self.hip_x,
            thigh_length=self.thigh_length, calf_length=self.calf_length,
            thigh_mass=self.thigh_mass, calf_mass=self.effective_calf_mass,
            thigh_inertia=self.thigh_inertia,
            calf_inertia=self.effective_calf_inertia,
            friction=self.friction, gravity=self.gravity)

    def stand_height(self) -> float:
        q = np.zeros(NUM_COORDS)
        q[3:] = self.q_nominal
        return float(-np.min(foot_heights(self.planar_params(), q)))


@dataclass
class SimState:
    """One robot's mechanical state (arrays broadcast to batches)."""

    q: np.ndarray            # (..., 11): x, z, pitch, 4x(hfe, kfe)
    v: np.ndarray            # (..., 11)
    time: np.ndarray         # [s]
    contacts: np.ndarray     # (..., legs) bool
    impulses: np.ndarray     # (..., legs, 2) contact-solver warm start

    @property
    def base_pose(self):
        return self.q[..., 0:3]

    @property
    def joint_pos(self):
        return self.q[..., 3:]

    @property
    def joint_vel(self):
        return self.v[..., 3:]


@dataclass(frozen=True)
class Command:
    forward_velocity: float   # [m/s]
    yaw_rate: float = 0.0     # fixed 0 in the planar reduction


@dataclass(frozen=True)
class CurriculumConfig:
    start_bounds: tuple = (-0.3, 1.5)    # [m/s]
    final_bounds: tuple = (-1.4, 7.0)
    widen_fraction: float = 0.8          # of planned iterations
    tracking_scale_start: float = 0.5


@dataclass(frozen=True)
class CurriculumState:
    cmd_lo: float
    cmd_hi: float
    iteration: int
    tracking_scale: float


def advance_curriculum(cfg: CurriculumConfig, iteration: int,
                       total_iterations: int) -> CurriculumState:
    """Piecewise-linear widening over the first widen_fraction of training."""
    horizon = max(cfg.widen_fraction * total_iterations, 1.0)
    p = min(max(iteration, 0) / horizon, 1.0)
    lo = cfg.start_bounds[0] + p * (cfg.final_bounds[0] - cfg.start_bounds[0])
    hi = cfg.start_bounds[1] + p * (cfg.final_bounds[1] - cfg.start_bounds[1])
    scale = cfg.tracking_scale_start + p * (1.0 - cfg.tracking_scale_start)
    return CurriculumState(cmd_lo=lo, cmd_hi=hi, iteration=iteration,
                           tracking_scale=scale)


def sample_command(curriculum: CurriculumState, rng) -> Command:
    return Command(float(rng.uniform(curriculum.cmd_lo, curriculum.cmd_hi)))


def randomize_model(model: RobotModel, rng, mass_band=0.10,
                    inertia_band=0.10, com_band=0.03) -> RobotModel:
    """Perturb torso mass, inertia, and CoM within the given bands."""
    com = np.asarray(model.torso_com, dtype=float)
    return replace(
        model,
        torso_mass=model.torso_mass * (1.0 + rng.uniform(-mass_band,
                                                         mass_band)),
        torso_inertia=model.torso_inertia * (1.0 + rng.uniform(-inertia_band,
                                                               inertia_band)),
        torso_com=tuple(com + rng.uniform(-com_band, com_band, size=2)))


def stand_state(model: RobotModel, rng=None, joint_noise=0.0) -> SimState:
    """Standing at rest, lowest foot exactly on the ground."""
    q = np.zeros(NUM_COORDS)
    q[3:] = model.q_nominal
    if rng is not None and joint_noise > 0.0:
        q[3:] += rng.uniform(-joint_noise, joint_noise, size=ACTION_DIM)
    p = model.planar_params()
    q[1] = -np.min(foot_heights(p, q))
    h = foot_heights(p, q)
    return SimState(q=q, v=np.zeros(NUM_COORDS), time=np.asarray(0.0),
                    contacts=h <= p.penetration_tol,
                    impulses=np.zeros((NUM_LEGS, 2)))


def step(model: RobotModel, state: SimState, joint_torques,
         dt=PHYSICS_DT) -> SimState:
    """One physics substep of a single robot; raises StepFault on blowup."""
    p = model.planar_params()
    q, v, res = step_dynamics(p, state.q, state.v, joint_torques, dt,
                              state.impulses)
    if np.any(res.fault):
        raise StepFault("non-finite state after physics substep")
    return SimState(q=q, v=v, time=state.time + dt, contacts=res.contacts,
                    impulses=res.impulses)


def reset(model: RobotModel, curriculum: CurriculumState, rng, previous=None,
          reuse_probability=0.25, max_command_delta=2.0, ramp_seconds=1.0,
          joint_noise=0.0):
    """Start the next episode.  Returns (SimState, Command, ramp_duration).

    previous, when given, is (final SimState, Command) of an episode that
    ran its full length; with probability 0.25 that state carries over and
    only the command changes (redrawn until the jump is at most 2 m/s, and
    applied without a ramp).  Fresh starts stand at rest and ramp the
    command linearly from zero over ramp_seconds.
    """
    if previous is not None and rng.random() < reuse_probability:
        prev_state, prev_cmd = previous
        while True:
            cmd = sample_command(curriculum, rng)
            if abs(cmd.forward_velocity
                   - prev_cmd.forward_velocity) <= max_command_delta:
                break
        return prev_state, cmd, 0.0
    state = stand_state(model, rng, joint_noise)
    return state, sample_command(curriculum, rng), ramp_seconds


def observe(joint_frames, pitch, prev_action, command_effective) -> np.ndarray:
    """Assemble the policy observation.

    joint_frames: (..., 3, 16) of [joint_pos, joint_vel] for the current and
    two previous control steps; pitch (...,); prev_action (..., 8);
    command_effective (...,) the ramped forward-velocity target.
    """
    frames = np.asarray(joint_frames, dtype=float)
    flat = frames.reshape(frames.shape[:-2] + (3 * FRAME_DIM,))
    pitch = np.asarray(pitch, dtype=float)
    gravity_dir = np.stack((-np.sin(pitch), -np.cos(pitch)), axis=-1)
    cmd = np.asarray(command_effective, dtype=float)[..., None]
    return np.concatenate(
        (flat, gravity_dir, np.asarray(prev_action, dtype=float), cmd),
        axis=-1)


def ground_truth(model: RobotModel, state: SimState) -> np.ndarray:
    """Estimator targets: body velocity (x, z), foot heights, contact flags."""
    p = model.planar_params()
    h = foot_heights(p, state.q)
    return np.concatenate(
        (state.v[..., 0:2], h, (h <= p.penetration_tol).astype(float)),
        axis=-1)


def terminate(state: SimState, min_height=0.18, max_pitch=1.0) -> np.ndarray:
    """Fallen, over-pitched, or numerically faulted."""
    finite = (np.all(np.isfinite(state.q), axis=-1)
              & np.all(np.isfinite(state.v), axis=-1))
    return ((state.q[..., 1] < min_height)
            | (np.abs(state.q[..., 2]) > max_pitch)
            | ~finite)


class VectorQuadrupedEnv:
    """N independently-evolving robots stepped in lockstep.

    Each environment owns its state; batching is a vectorization detail and
    results are identical to stepping the robots one at a time in index
    order.  Episodes auto-reset: terminations restart standing immediately,
    full-length episodes apply the 25% state-reuse rule.
    """

    def __init__(self, model: RobotModel, n_envs: int, seed: int, *,
                 mor_constraint=True, randomize_bands=None,
                 joint_reset_noise=0.03, action_scale=0.3,
                 min_height=0.18, max_pitch=1.0, collect_motor_trace=False,
                 episode_steps=EPISODE_STEPS):
        self.model = model
        self.n = int(n_envs)
        self.rng = np.random.default_rng(seed)
        self.mor_constraint = bool(mor_constraint)
        self.action_scale = float(action_scale)
        self.joint_reset_noise = float(joint_reset_noise)
        self.min_height = float(min_height)
        self.max_pitch = float(max_pitch)
        self.collect_motor_trace = bool(collect_motor_trace)
        self.episode_steps = int(episode_steps)

        if randomize_bands is None:
            self.params = model.planar_params()
        else:
            variants = [randomize_model(model, self.rng, **randomize_bands)
                        for _ in range(self.n)]
            self.params = model.planar_params(
                torso_mass=np.array([m.torso_mass for m in variants]),
                torso_inertia=np.array([m.torso_inertia for m in variants]),
                torso_com=np.array([m.torso_com for m in variants]))

        self.q_nominal = np.asarray(model.q_nominal, dtype=float)
        self.curriculum = advance_curriculum(CurriculumConfig(), 0, 1)
        self._hard_reset()

    # -- lifecycle ---------------------------------------------------------

    def set_curriculum(self, curriculum: CurriculumState):
        self.curriculum = curriculum

    def _fresh_arrays(self, idx):
        """Reset envs listed in idx to fresh standing starts."""
        for i in idx:
            state, cmd, ramp = reset(self.model, self.curriculum, self.rng,
                                     previous=None,
                                     joint_noise=self.joint_reset_noise)
            self._install(i, state, cmd, ramp)

    def _install(self, i, state: SimState, cmd: Command, ramp: float):
        self.q[i] = state.q
        self.v[i] = state.v
        self.contacts[i] = state.contacts
        self.impulses[i] = state.impulses
        self.command[i] = cmd.forward_velocity
        self.ramp[i] = ramp
        self.episode_step[i] = 0
        frame = np.concatenate((self.q[i, 3:], self.v[i, 3:]))
        self.frames[i] = frame
        self.prev_action[i] = 0.0
        self.q_des_prev[i] = self.q_nominal
        self.q_des_prev2[i] = self.q_nominal
        self.joint_vel_prev[i] = self.v[i, 3:]

    def _hard_reset(self):
        n = self.n
        self.q = np.zeros((n, NUM_COORDS))
        self.v = np.zeros((n, NUM_COORDS))
        self.contacts = np.zeros((n, NUM_LEGS), dtype=bool)
        self.impulses = np.zeros((n, NUM_LEGS, 2))
        self.command = np.zeros(n)
        self.ramp = np.zeros(n)
        self.episode_step = np.zeros(n, dtype=int)
        self.frames = np.zeros((n, 3, FRAME_DIM))
        self.prev_action = np.zeros((n, ACTION_DIM))
        self.q_des_prev = np.tile(self.q_nominal, (n, 1))
        self.q_des_prev2 = np.tile(self.q_nominal, (n, 1))
        self.joint_vel_prev = np.zeros((n, ACTION_DIM))
        self._fresh_arrays(range(n))
        self._refresh_foot_cache()

    def reset_all(self):
        self._hard_reset()
        return self.observation()

    # -- stepping ----------------------------------------------------------

    def effective_command(self) -> np.ndarray:
        """Ramped forward-velocity target at the current episode time."""
        t = self.episode_step * CONTROL_DT
        factor = np.where(self.ramp > 0.0,
                          np.minimum(t / np.maximum(self.ramp, 1e-9), 1.0),
                          1.0)
        return self.command * factor

    def observation(self) -> np.ndarray:
        return observe(self.frames, self.q[:, 2], self.prev_action,
                       self.effective_command())

    def ground_truth(self) -> np.ndarray:
        return np.concatenate(
            (self.v[:, 0:2], self._foot_h,
             (self._foot_h <= self.params.penetration_tol).astype(float)),
            axis=-1)

    def _refresh_foot_cache(self):
        fk = forward_kinematics(self.params, self.q)
        jac = foot_jacobian(self.params, fk)
        self._foot_h = fk.foot[..., 1]
        self._foot_v = np.einsum("...lci,...i->...lc", jac, self.v)

    def step(self, action):
        """Advance one control step.  Returns (obs, reward_inputs, done, info).

        reward_inputs holds everything the reward suite consumes for this
        transition except the touchdown flags, which depend on the next
        step's contacts; the rollout collector derives them from the
        contact history.  done is terminated | truncated; both flags are in
        info along with saturation counts.
        """
        action = np.asarray(action, dtype=float)
        q_des = self.q_nominal + self.action_scale * action
        cmd_eff = self.effective_command()

        violations = 0
        commands = 0
        motor_trace = [] if self.collect_motor_trace else None
        fault = np.zeros(self.n, dtype=bool)
        for _ in range(round(CONTROL_DT / PHYSICS_DT)):
            joint_state = SimpleNamespace(joint_pos=self.q[:, 3:],
                                          joint_vel=self.v[:, 3:])
            tau, report = apply_pipeline(self.model, q_des, joint_state,
                                         enforce=self.mor_constraint)
            if motor_trace is not None:
                # Motor speeds at which the saturation was evaluated.
                omega_m = joint_to_motor_velocity(
                    self.model.leg_coupling,
                    self.v[:, 3:].reshape(self.n, NUM_LEGS, 2))
                motor_trace.append(
                    (report.pre_clip.copy(), report.post_clip.copy(),
                     omega_m.reshape(self.n, ACTION_DIM)))
            q_new, v_new, res = step_dynamics(
                self.params, self.q, self.v, tau, PHYSICS_DT, self.impulses)
            bad = res.fault | (np.abs(v_new).max(axis=-1) > RUNAWAY_SPEED)
            self.q = np.where(bad[:, None], self.q, q_new)
            self.v = np.where(bad[:, None], self.v, v_new)
            self.impulses = np.where(bad[:, None, None], self.impulses,
                                     res.impulses)
            self.contacts = np.where(bad[:, None], self.contacts,
                                     res.contacts)
            fault |= bad
            violations += report.violation_count
            commands += report.command_count

        self._refresh_foot_cache()
        pitch = self.q[:, 2]
        reward_inputs = {
            "v_xy": np.stack((self.v[:, 0], np.zeros(self.n)), axis=-1),
            "v_desired_xy": np.stack((cmd_eff, np.zeros(self.n)), axis=-1),
            "yaw_rate": np.zeros(self.n),
            "yaw_rate_desired": np.zeros(self.n),
            "contacts": self.contacts.copy(),
            "foot_vz": self._foot_v[..., 1].copy(),
            "foot_vxy": np.stack(
                (self._foot_v[..., 0], np.zeros((self.n, NUM_LEGS))),
                axis=-1),
            "foot_height": self._foot_h.copy(),
            "body_z_axis": np.stack(
                (-np.sin(pitch), np.zeros(self.n), np.cos(pitch)), axis=-1),
            "world_z_axis": np.broadcast_to(
                np.array([0.0, 0.0, 1.0]), (self.n, 3)).copy(),
            "joint_torque": tau.copy(),
            "joint_pos": self.q[:, 3:].copy(),
            "joint_vel": self.v[:, 3:].copy(),
            "joint_vel_prev": self.joint_vel_prev.copy(),
            "q_des": q_des.copy(),
            "q_des_prev": self.q_des_prev.copy(),
            "q_des_prev2": self.q_des_prev2.copy(),
            "base_vz": self.v[:, 1].copy(),
            "roll_rate": np.zeros(self.n),
            "pitch_rate": self.v[:, 2].copy(),
        }

        self.episode_step += 1
        terminated = ((self.q[:, 1] < self.min_height)
                      | (np.abs(pitch) > self.max_pitch) | fault)
        truncated = (self.episode_step >= self.episode_steps) & ~terminated

        # Histories advance with the post-step state before any resets.
        self.frames[:, 2] = self.frames[:, 1]
        self.frames[:, 1] = self.frames[:, 0]
        self.frames[:, 0] = np.concatenate((self.q[:, 3:], self.v[:, 3:]),
                                           axis=-1)
        self.prev_action = action.copy()
        self.q_des_prev2 = self.q_des_prev
        self.q_des_prev = q_des
        self.joint_vel_prev = self.v[:, 3:].copy()
        terminal_obs = self.observation()

        done = terminated | truncated
        for i in np.flatnonzero(done):
            previous = None
            if truncated[i]:
                state_i = SimState(q=self.q[i].copy(), v=self.v[i].copy(),
                                   time=np.asarray(0.0),
                                   contacts=self.contacts[i].copy(),
                                   impulses=self.impulses[i].copy())
                previous = (state_i, Command(float(self.command[i])))
            state, cmd, ramp = reset(self.model, self.curriculum, self.rng,
                                     previous=previous,
                                     joint_noise=self.joint_reset_noise)
            self._install(i, state, cmd, ramp)
        if np.any(done):
            self._refresh_foot_cache()

        info = {
            "terminated": terminated,
            "truncated": truncated,
            "violations": violations,
            "commands": commands,
            "terminal_observation": terminal_obs,
            "motor_trace": motor_trace,
        }
        return self.observation(), reward_inputs, done, info
