"""Acceptance gate: one test per criterion at its stated tolerance.

Run with `pytest -v tests/test_acceptance.py` for one pass/fail line per
criterion.  Criteria 5 and 6 share one session-scoped set of desk-scale
training runs (3 seeds x constraint on/off, several minutes total); the
other criteria are seconds each.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from morlab.config import load_config
from morlab.dynamics import (PlanarParams, foot_heights, mechanical_energy,
                             step_dynamics)
from morlab.gear_coupling import (CouplingMatrix, joint_to_motor_torque,
                                  joint_to_motor_velocity,
                                  motor_to_joint_torque,
                                  motor_to_joint_velocity)
from morlab.learner import (TrainConfig, NetworkSpec, delta_reward_mor,
                            estimator_loss_and_grad, ppo_policy_loss_and_grad,
                            train, value_loss_and_grad)
from morlab.motor_envelope import (MotorSpec, OperatingPoint, contains,
                                   saturate_torque, voltage_torque_band)
from morlab.networks import MLP, GaussianPolicy
from morlab.quadruped_sim import EPISODE_STEPS, CONTROL_DT, RobotModel
from morlab.rewards import (RewardConfig, TERM_NAMES, compute_rewards,
                            gait_reward)

from oracles import (finite_difference_gradient, reward_table_oracle,
                     saturation_oracle, static_stand_oracle)
from test_dynamics import Q_STAND_JOINTS, settle, stand_state
from test_rewards import TROT_A, TROT_B, make_obs

DESK_INI = "configs/desk.ini"


def _report(criterion, detail):
    print(f"[criterion {criterion}] PASS: {detail}")


# -- criterion 1: saturation against a brute-force oracle ---------------------

def test_criterion_1_envelope_oracle():
    """saturate_torque matches a nearest-feasible-point oracle to 1e-9 on a
    500x500 grid, and 1e5 fuzzed commands land inside the region; <10 s."""
    spec = MotorSpec(resistance=0.2, torque_constant=0.2,
                     velocity_constant=4.0, bus_voltage=24.0, peak_torque=4.0)
    t0 = time.perf_counter()

    taus = np.linspace(-2 * spec.peak_torque, 2 * spec.peak_torque, 500)
    omegas = np.linspace(-2 * spec.velocity_constant * spec.bus_voltage,
                         2 * spec.velocity_constant * spec.bus_voltage, 500)
    tau_g, omega_g = np.meshgrid(taus, omegas)
    got, _ = saturate_torque(spec, tau_g, omega_g)
    want = saturation_oracle(spec.resistance, spec.torque_constant,
                             spec.velocity_constant, spec.bus_voltage,
                             spec.peak_torque, tau_g, omega_g)
    worst = float(np.max(np.abs(got - want)))
    assert worst <= 1e-9

    rng = np.random.default_rng(20260815)
    n = 100_000
    cmd = rng.uniform(-3 * spec.peak_torque, 3 * spec.peak_torque, n)
    omega = rng.uniform(-2.5 * spec.velocity_constant * spec.bus_voltage,
                        2.5 * spec.velocity_constant * spec.bus_voltage, n)
    tau, _ = saturate_torque(spec, cmd, omega)
    lo, hi = voltage_torque_band(spec, omega)
    nonempty = (np.maximum(lo, -spec.peak_torque)
                <= np.minimum(hi, spec.peak_torque))
    inside = contains(spec, OperatingPoint(tau, omega), tol=1e-9)
    assert np.all(inside[nonempty])

    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    _report(1, f"grid max err {worst:.2e}, {int(nonempty.sum())} fuzzed "
               f"members, {elapsed:.2f} s")


# -- criterion 2: gearbox power conservation ----------------------------------

def test_criterion_2_gearbox_conservation():
    """Torque dual conserves tau.w to 1e-12 relative and both transform
    pairs round-trip to 1e-12 on 1e4 random draws; <1 s."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    coupling = CouplingMatrix(9.0, 9.0)
    w_joint = rng.uniform(-20.0, 20.0, size=(10_000, 2))
    t_joint = rng.uniform(-50.0, 50.0, size=(10_000, 2))

    w_motor = joint_to_motor_velocity(coupling, w_joint)
    t_motor = joint_to_motor_torque(coupling, t_joint)
    p_joint = np.sum(t_joint * w_joint, axis=-1)
    p_motor = np.sum(t_motor * w_motor, axis=-1)
    scale = np.maximum(np.abs(p_joint), 1.0)
    worst_power = float(np.max(np.abs(p_motor - p_joint) / scale))
    assert worst_power <= 1e-12

    w_back = motor_to_joint_velocity(coupling, w_motor)
    t_back = motor_to_joint_torque(coupling, t_motor)
    worst_round = max(
        float(np.max(np.abs(w_back - w_joint)
                     / np.maximum(np.abs(w_joint), 1.0))),
        float(np.max(np.abs(t_back - t_joint)
                     / np.maximum(np.abs(t_joint), 1.0))))
    assert worst_round <= 1e-12

    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _report(2, f"power err {worst_power:.2e}, roundtrip err "
               f"{worst_round:.2e}, {elapsed:.3f} s")


# -- criterion 3: reward table against an independent evaluator ---------------

def test_criterion_3_reward_oracle():
    """All 14 terms match the independent evaluator to 1e-12 on 1e4 random
    observations; the gait term scores its coefficient on exactly the two
    diagonal patterns out of all 16; <5 s."""
    t0 = time.perf_counter()
    cfg = RewardConfig()
    rng = np.random.default_rng(42)
    assert len(TERM_NAMES) == 14
    for _ in range(10_000):
        obs = make_obs(rng)
        got = compute_rewards(cfg, obs).terms
        want = reward_table_oracle(cfg, obs)
        for name in TERM_NAMES:
            assert abs(got[name] - want[name]) <= 1e-12 * max(
                1.0, abs(want[name])), name

    winners = []
    for code in range(16):
        contacts = tuple(bool((code >> i) & 1) for i in range(4))
        val = gait_reward(cfg, contacts)
        assert val in (0.0, cfg.c_gait)
        if val == cfg.c_gait:
            winners.append(contacts)
    assert cfg.c_gait == 1.2
    assert sorted(winners) == sorted([TROT_A, TROT_B])

    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _report(3, f"14 terms x 1e4 draws at 1e-12, 2/16 gait winners, "
               f"{elapsed:.2f} s")


# -- criterion 4: sample bookkeeping -------------------------------------------

def test_criterion_4_sample_bookkeeping():
    """Full-scale config yields exactly 160,000 samples per iteration; the
    desk config yields exactly env_count x 400."""
    assert EPISODE_STEPS == round(4.0 / CONTROL_DT) == 400
    full_scale = TrainConfig(env_count=400, steps_per_env=EPISODE_STEPS)
    assert full_scale.samples_per_iteration == 160_000
    desk = load_config(DESK_INI).train
    assert desk.steps_per_env == 400
    assert desk.samples_per_iteration == desk.env_count * 400
    _report(4, f"400 envs -> 160000; desk {desk.env_count} envs -> "
               f"{desk.samples_per_iteration}")


# -- criteria 5 and 6: desk-scale training arms --------------------------------

@pytest.fixture(scope="session")
def desk_arms():
    """Three seeds x constraint on/off, trained from the shipped desk config.

    Returns (config, {(seed, mor): (history, bundle)}, {mor: seconds}).
    """
    cfg = load_config(DESK_INI)
    runs = {}
    arm_seconds = {True: 0.0, False: 0.0}
    for mor in (True, False):
        for seed in (0, 1, 2):
            tc = replace(cfg.train, seed=seed, mor_constraint=mor)
            t0 = time.perf_counter()
            history, bundle = train(cfg.robot, tc, reward_config=cfg.reward)
            arm_seconds[mor] += time.perf_counter() - t0
            runs[(seed, mor)] = (history, bundle)
    return cfg, runs, arm_seconds


def _final_fifth_violation(history):
    k = max(1, round(0.2 * len(history)))
    return float(np.mean([m.violation_ratio for m in history[-k:]]))


def test_criterion_5_violation_ratio_separation(desk_arms):
    """Desk training (32 envs, [64, 32] nets, 3 seeds, <=30 min per arm):
    the mean violation ratio over the final 20% of iterations is strictly
    lower with the constraint than without, for every seed pairing."""
    cfg, runs, arm_seconds = desk_arms
    assert cfg.train.env_count == 32
    assert cfg.train.networks == NetworkSpec(policy_hidden=(64, 32),
                                             value_hidden=(64, 32),
                                             estimator_hidden=(64, 32))
    assert arm_seconds[True] <= 1800.0
    assert arm_seconds[False] <= 1800.0

    with_mor = {s: _final_fifth_violation(runs[(s, True)][0])
                for s in (0, 1, 2)}
    without = {s: _final_fifth_violation(runs[(s, False)][0])
               for s in (0, 1, 2)}
    assert max(with_mor.values()) < min(without.values()), (
        f"with={with_mor} without={without}")
    _report(5, f"final-20% violation ratio with={with_mor} "
               f"without={without}; arm times "
               f"{arm_seconds[True]:.0f}/{arm_seconds[False]:.0f} s")


def test_criterion_6_delta_reward_mor(desk_arms):
    """For a desk policy trained without the constraint: zero evaluation gap
    (exactly, by trajectory identity) at commands with no clip events, a
    positive gap at the top achievable commands, and the contact-excluded
    aggregate shows the same sign pattern."""
    cfg, runs, _ = desk_arms
    _, bundle = runs[(0, False)]
    top = cfg.train.curriculum.final_bounds[1]
    commands = [round(c, 3) for c in np.arange(0.0, top + 1e-9, 0.5)]
    if commands[-1] < top:
        commands.append(top)
    rows = delta_reward_mor(cfg.robot, bundle, commands)

    clean = [r for r in rows if r["clip_events"] == 0]
    assert clean, f"no clip-free commands in {rows}"
    for r in clean:
        assert r["delta_reward"] == 0.0, r
        assert r["delta_reward_no_contact"] == 0.0, r

    walked = [r for r in rows
              if np.isfinite(r["delta_reward"]) and r["clip_events"] > 0]
    assert walked, f"no clipping commands in {rows}"
    top_row = max(walked, key=lambda r: r["command"])
    assert top_row["delta_reward"] > 0.0, rows
    assert top_row["delta_reward_no_contact"] > 0.0, rows
    _report(6, f"{len(clean)} exact-zero rows; top command "
               f"{top_row['command']} delta {top_row['delta_reward']:.3f} "
               f"(no-contact {top_row['delta_reward_no_contact']:.3f}, "
               f"{top_row['clip_events']} clips)")


# -- criterion 7: physics sanity ------------------------------------------------

def test_criterion_7_physics_sanity():
    """Ballistic energy drift <=0.1% over 1 s of flight, foot penetration
    never beyond 1e-6 m, and the static stand settles within 5 mm of the
    independent energy-minimization oracle."""
    p = PlanarParams()
    dt = 0.0025

    # Tumbling flight, 1 s: energy drift within 0.1%.
    q = np.zeros(11)
    q[1] = 8.0
    q[3:] = Q_STAND_JOINTS
    v = np.zeros(11)
    v[1], v[2] = 1.0, 3.0
    v[3:] = np.tile([2.0, -2.0], 4)
    e0 = mechanical_energy(p, q, v)
    for _ in range(round(1.0 / dt)):
        q, v, res = step_dynamics(p, q, v, np.zeros(8), dt)
        assert not np.any(res.active)
    drift = abs(mechanical_energy(p, q, v) - e0) / abs(e0)
    assert drift <= 1e-3

    # Drop onto the floor: no penetration beyond 1e-6 at any substep
    # (asserted inside settle) and a quiet final state.
    assert p.penetration_tol == 1e-6
    q, v = stand_state(p)
    q[1] += 0.2
    q, v, res = settle(p, q, v, Q_STAND_JOINTS, kp=50.0, kd=3.0, seconds=3.0)
    assert np.all(res.contacts)

    # Static stand: within +-5 mm of the equilibrium oracle.
    from morlab.dynamics import forward_kinematics
    q0, v0 = stand_state(p)
    q1, v1, res = settle(p, q0, v0, Q_STAND_JOINTS, kp=50.0, kd=3.0,
                         seconds=3.5)
    fk = forward_kinematics(p, q1)
    oracle = static_stand_oracle(
        torso_mass=float(p.torso_mass), torso_com=np.asarray(p.torso_com),
        hip_x=p.hip_x, thigh_length=p.thigh_length,
        calf_length=p.calf_length, thigh_mass=p.thigh_mass,
        calf_mass=p.calf_mass, gravity=p.gravity, kp=50.0,
        q_desired=Q_STAND_JOINTS, foot_anchor_x=fk.foot[:, 0],
        z_guess=q1[1])
    err = abs(q1[1] - oracle["z"])
    assert err <= 5e-3
    assert np.linalg.norm(v1) < 5e-3
    _report(7, f"flight drift {drift:.2e}, stand height err {err*1000:.2f} mm")


# -- criterion 8: gradient checks ------------------------------------------------

def test_criterion_8_gradient_checks():
    """Analytic gradients match central finite differences to 1e-4 relative
    on [8, 8] networks over 10 samples, for all three losses."""
    rng = np.random.default_rng(11)
    n, obs_dim, act_dim = 10, 5, 3
    obs = rng.normal(size=(n, obs_dim))

    def rel_err(analytic, numeric):
        return float(np.max(np.abs(analytic - numeric)
                            / np.maximum(np.abs(numeric), 1e-3)))

    policy = GaussianPolicy(obs_dim, (8, 8), act_dim, rng,
                            final_scale=1.0)
    actions = policy.sample(obs, rng)[0]
    logp_old = policy.log_prob(obs, actions) + rng.normal(
        scale=0.05, size=n)
    adv = rng.normal(size=n)

    def policy_loss(params):
        saved = policy.get_params()
        policy.set_params(params)
        loss, _ = ppo_policy_loss_and_grad(policy, obs, actions, logp_old,
                                           adv, 0.2, 0.01)
        policy.set_params(saved)
        return loss

    _, p_grad = ppo_policy_loss_and_grad(policy, obs, actions, logp_old,
                                         adv, 0.2, 0.01)
    p_err = rel_err(p_grad, finite_difference_gradient(
        policy_loss, policy.get_params()))
    assert p_err <= 1e-4

    value = MLP([obs_dim, 8, 8, 1], rng)
    returns = rng.normal(size=n)

    def value_loss(params):
        saved = value.get_params()
        value.set_params(params)
        loss, _ = value_loss_and_grad(value, obs, returns)
        value.set_params(saved)
        return loss

    _, v_grad = value_loss_and_grad(value, obs, returns)
    v_err = rel_err(v_grad, finite_difference_gradient(
        value_loss, value.get_params()))
    assert v_err <= 1e-4

    estimator = MLP([obs_dim, 8, 8, 10], rng)
    targets = np.concatenate(
        (rng.normal(size=(n, 6)), (rng.random((n, 4)) < 0.5).astype(float)),
        axis=1)

    def est_loss(params):
        saved = estimator.get_params()
        estimator.set_params(params)
        loss, _ = estimator_loss_and_grad(estimator, obs, targets,
                                          n_regress=6)
        estimator.set_params(saved)
        return loss

    _, e_grad = estimator_loss_and_grad(estimator, obs, targets, n_regress=6)
    e_err = rel_err(e_grad, finite_difference_gradient(
        est_loss, estimator.get_params()))
    assert e_err <= 1e-4
    _report(8, f"rel errs policy {p_err:.2e}, value {v_err:.2e}, "
               f"estimator {e_err:.2e}")


# -- criterion 9: seeded determinism ---------------------------------------------

def test_criterion_9_deterministic_metrics(tmp_path):
    """Two seeded train() runs write byte-identical metrics CSVs."""
    model = RobotModel()
    tc = TrainConfig(iterations=2, env_count=2, steps_per_env=30, seed=9,
                     networks=NetworkSpec(policy_hidden=(16, 16),
                                          value_hidden=(16, 16),
                                          estimator_hidden=(16, 16)))
    paths = []
    for k in range(2):
        path = tmp_path / f"metrics_{k}.csv"
        train(model, tc, metrics_path=path)
        paths.append(path)
    first, second = (p.read_bytes() for p in paths)
    assert first == second
    _report(9, f"{len(first)} identical bytes over "
               f"{tc.iterations} iterations")
