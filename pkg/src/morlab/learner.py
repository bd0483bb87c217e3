"""Concurrent locomotion training: PPO policy/value plus a supervised
state estimator, with operating-region violation bookkeeping.

The policy acts on the estimator-augmented observation: the 59-dim
proprioceptive vector (normalized by running statistics) concatenated with
the estimator's 10 outputs (body velocity, foot heights, contact
probabilities).  The estimator trains on simulator ground truth collected
in the same rollouts (concurrent training).  The clipped-surrogate update
uses generalized advantage estimation; discount 0.99, lambda 0.95, clip
0.2, lr 3e-4 defaults.

Per-iteration metrics include the violation ratio: the fraction of motor
torque commands that fell outside the operating region before clipping,
counted identically whether or not the constraint is enforced.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .motor_envelope import torque_to_current
from .networks import LOG_2PI, MLP, Adam, GaussianPolicy
from .quadruped_sim import (ACTION_DIM, CONTROL_DT, GROUND_TRUTH_DIM,
                            OBS_DIM, PHYSICS_DT, CurriculumConfig,
                            RobotModel, VectorQuadrupedEnv,
                            advance_curriculum)
from .rewards import RewardConfig, compute_reward_terms

__all__ = [
    "NetworkSpec",
    "TrainConfig",
    "IterationMetrics",
    "RolloutBatch",
    "TrainedBundle",
    "EvalResult",
    "ObsNormalizer",
    "METRICS_HEADER",
    "CONTACT_TERM_NAMES",
    "ppo_policy_loss_and_grad",
    "value_loss_and_grad",
    "estimator_loss_and_grad",
    "compute_advantages",
    "collect_rollouts",
    "ppo_update",
    "estimator_update",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "policy_action",
    "evaluate_policy",
    "delta_reward_mor",
    "cost_of_transport",
    "format_float",
]

METRICS_HEADER = ("iter,mean_reward,violation_ratio,cmd_lo,cmd_hi,"
                  "policy_loss,value_loss,estimator_loss")

# Reward terms that consume contact flags; hardware contact estimates are
# noisy, so evaluation also reports the aggregate with these excluded.
CONTACT_TERM_NAMES = ("contact_velocity", "foot_slip", "foot_clearance",
                      "gait")

POLICY_IN_DIM = OBS_DIM + GROUND_TRUTH_DIM
ESTIMATOR_REGRESSION_DIM = 6   # body velocity (2) + foot heights (4)


@dataclass(frozen=True)
class NetworkSpec:
    """Hidden-layer widths; desk-scale defaults, larger sizes reachable."""

    policy_hidden: tuple = (64, 32)
    value_hidden: tuple = (64, 32)
    estimator_hidden: tuple = (64, 32)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 60
    env_count: int = 32
    seed: int = 0
    steps_per_env: int = 400          # one 4 s episode window per iteration
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 4
    minibatches: int = 4
    entropy_coef: float = 0.0
    reward_scale: float = 0.01        # on GAE/returns only; metrics stay raw
    action_scale: float = 0.3         # [rad] per unit action
    action_clip: float = 4.0          # symmetric rail on raw actions
    init_log_std: float = -1.0
    mor_constraint: bool = True
    gait_reward: bool = True
    randomize: bool = True
    networks: NetworkSpec = field(default_factory=NetworkSpec)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)

    @property
    def samples_per_iteration(self) -> int:
        return self.env_count * self.steps_per_env


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    mean_reward: float
    violation_ratio: float
    cmd_lo: float
    cmd_hi: float
    policy_loss: float
    value_loss: float
    estimator_loss: float

    def csv_row(self) -> str:
        vals = (self.mean_reward, self.violation_ratio, self.cmd_lo,
                self.cmd_hi, self.policy_loss, self.value_loss,
                self.estimator_loss)
        return ",".join([str(self.iteration)]
                        + [format_float(v) for v in vals])


def format_float(x) -> str:
    """CSV numeric formatting: 9 significant digits."""
    return f"{float(x):.9g}"


class ObsNormalizer:
    """Running mean/variance normalization over a fixed observation dim."""

    def __init__(self, dim: int, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.clip = float(clip)

    def update(self, batch) -> None:
        batch = np.asarray(batch, dtype=float).reshape(-1, self.mean.size)
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        total = self.count + n
        delta = b_mean - self.mean
        new_mean = self.mean + delta * (n / total)
        m_a = self.var * self.count
        m_b = b_var * n
        new_var = (m_a + m_b + delta * delta * self.count * n / total) / total
        self.mean, self.var, self.count = new_mean, new_var, total

    def __call__(self, obs) -> np.ndarray:
        z = (np.asarray(obs, dtype=float) - self.mean) / np.sqrt(
            self.var + 1e-8)
        return np.clip(z, -self.clip, self.clip)


# -- losses (analytic gradients over flat parameter vectors) ----------------

def ppo_policy_loss_and_grad(policy: GaussianPolicy, obs, actions, logp_old,
                             advantages, clip_ratio, entropy_coef=0.0):
    """Clipped-surrogate loss and its gradient in policy.get_params() order."""
    obs = np.asarray(obs, dtype=float)
    mu, cache = policy.net.forward(obs)
    std = np.exp(policy.log_std)
    z = (np.asarray(actions) - mu) / std
    logp = (-0.5 * np.sum(z * z, axis=-1) - np.sum(policy.log_std)
            - 0.5 * policy.action_dim * LOG_2PI)
    ratio = np.exp(logp - logp_old)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages
    objective = np.minimum(unclipped, clipped)
    entropy = np.sum(policy.log_std) + 0.5 * policy.action_dim * (
        1.0 + LOG_2PI)
    n = obs.shape[0]
    loss = -objective.mean() - entropy_coef * entropy

    # The clipped branch has zero derivative wherever it wins the min.
    active = (unclipped <= clipped).astype(float)
    dlogp = -(active * ratio * advantages) / n
    g_mu = dlogp[:, None] * (z / std)
    g_log_std = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
    g_log_std -= entropy_coef
    return loss, np.concatenate((policy.net.backward(cache, g_mu),
                                 g_log_std))


def value_loss_and_grad(net: MLP, obs, returns):
    """Mean squared error to the empirical returns."""
    out, cache = net.forward(np.asarray(obs, dtype=float))
    err = out[..., 0] - returns
    loss = float(np.mean(err * err))
    grad = net.backward(cache, (2.0 / err.size) * err[:, None])
    return loss, grad


def estimator_loss_and_grad(net: MLP, obs, targets,
                            n_regress=ESTIMATOR_REGRESSION_DIM):
    """Squared error on regression outputs + cross entropy on contact logits.

    Loss is the per-sample sum of both parts averaged over the batch.
    """
    obs = np.asarray(obs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    out, cache = net.forward(obs)
    reg_err = out[:, :n_regress] - targets[:, :n_regress]
    logits = out[:, n_regress:]
    labels = targets[:, n_regress:]
    # Stable binary cross entropy with logits.
    bce = (np.maximum(logits, 0.0) - logits * labels
           + np.log1p(np.exp(-np.abs(logits))))
    n = obs.shape[0]
    loss = float((np.sum(reg_err * reg_err) + np.sum(bce)) / n)
    sigma = 1.0 / (1.0 + np.exp(-logits))
    grad_out = np.concatenate((2.0 * reg_err, sigma - labels),
                              axis=-1) / n
    return loss, net.backward(cache, grad_out)


# -- rollouts ----------------------------------------------------------------

@dataclass
class RolloutBatch:
    policy_in: np.ndarray      # (T, N, policy input dim), normalizer applied
    obs_norm: np.ndarray       # (T, N, obs dim) estimator inputs
    obs_raw: np.ndarray        # (T, N, obs dim) for normalizer updates
    actions: np.ndarray        # (T, N, 8)
    log_probs: np.ndarray      # (T, N)
    values: np.ndarray         # (T, N)
    v_next: np.ndarray         # (T, N) bootstrap value for each step
    rewards: np.ndarray        # (T, N)
    terminated: np.ndarray     # (T, N) bool
    truncated: np.ndarray      # (T, N) bool
    ground_truth: np.ndarray   # (T, N, 10)
    violations: int
    commands: int
    reward_term_means: dict

    @property
    def violation_ratio(self) -> float:
        return self.violations / max(self.commands, 1)

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())


def _policy_input(normalizer, estimator, obs_raw):
    obs_n = normalizer(obs_raw)
    est_out, _ = estimator.forward(obs_n)
    return obs_n, est_out, np.concatenate((obs_n, est_out), axis=-1)


def collect_rollouts(env: VectorQuadrupedEnv, policy, value_net, estimator,
                     normalizer, reward_cfg: RewardConfig, tracking_scale,
                     rng, steps=None, action_clip=4.0) -> RolloutBatch:
    """Roll the vector env under the sampled policy for one window.

    Rewards are computed in one vectorized pass at the end; the touchdown
    (precontact) flags come from the stored contact history, masked at
    episode boundaries where the successor contacts belong to a different
    episode.
    """
    T = env.episode_steps if steps is None else int(steps)
    n = env.n
    obs = env.observation()
    obs_raw = np.empty((T, n, OBS_DIM))
    obs_norm = np.empty((T, n, OBS_DIM))
    policy_in = np.empty((T, n, POLICY_IN_DIM))
    actions = np.empty((T, n, ACTION_DIM))
    log_probs = np.empty((T, n))
    values = np.empty((T, n))
    gts = np.empty((T, n, GROUND_TRUTH_DIM))
    terminated = np.empty((T, n), dtype=bool)
    truncated = np.empty((T, n), dtype=bool)
    terminal_obs = np.empty((T, n, OBS_DIM))
    inputs = []
    violations = 0
    commands = 0

    for t in range(T):
        obs_raw[t] = obs
        o_n, _, p_in = _policy_input(normalizer, estimator, obs)
        obs_norm[t] = o_n
        policy_in[t] = p_in
        a, logp = policy.sample(p_in, rng)
        a = np.clip(a, -action_clip, action_clip)
        actions[t] = a
        log_probs[t] = logp
        values[t] = value_net(p_in)[..., 0]
        gts[t] = env.ground_truth()
        obs, reward_inputs, done, info = env.step(a)
        inputs.append(reward_inputs)
        terminated[t] = info["terminated"]
        truncated[t] = info["truncated"]
        terminal_obs[t] = info["terminal_observation"]
        violations += info["violations"]
        commands += info["commands"]

    # Bootstrap values: zero past terminations, terminal-state value past
    # truncations, the next step's value otherwise.
    _, _, p_term = _policy_input(normalizer, estimator,
                                 terminal_obs.reshape(-1, OBS_DIM))
    v_term = value_net(p_term)[..., 0].reshape(T, n)
    _, _, p_last = _policy_input(normalizer, estimator, obs)
    v_last = value_net(p_last)[..., 0]
    v_after = np.concatenate((values[1:], v_last[None]), axis=0)
    v_next = np.where(terminated, 0.0, np.where(truncated, v_term, v_after))

    stacked = {k: np.stack([ri[k] for ri in inputs])
               for k in inputs[0].keys()}
    contacts = stacked.pop("contacts")
    done = terminated | truncated
    precontact = np.zeros_like(contacts, dtype=bool)
    precontact[:-1] = ~contacts[:-1] & contacts[1:] & ~done[:-1, :, None]
    terms = compute_reward_terms(reward_cfg, contacts=contacts,
                                 precontact=precontact, **stacked)
    terms["linear_velocity"] = terms["linear_velocity"] * tracking_scale
    terms["angular_velocity"] = terms["angular_velocity"] * tracking_scale
    rewards = sum(terms.values())
    term_means = {k: float(v.mean()) for k, v in terms.items()}

    return RolloutBatch(policy_in=policy_in, obs_norm=obs_norm,
                        obs_raw=obs_raw, actions=actions,
                        log_probs=log_probs, values=values, v_next=v_next,
                        rewards=rewards, terminated=terminated,
                        truncated=truncated, ground_truth=gts,
                        violations=violations, commands=commands,
                        reward_term_means=term_means)


def compute_advantages(batch: RolloutBatch, gamma, lam):
    """Generalized advantage estimation; returns (advantages, returns)."""
    T = batch.rewards.shape[0]
    adv = np.zeros_like(batch.rewards)
    done = batch.terminated | batch.truncated
    carry = 0.0
    for t in range(T - 1, -1, -1):
        delta = (batch.rewards[t] + gamma * batch.v_next[t]
                 - batch.values[t])
        carry = delta + gamma * lam * np.where(done[t], 0.0, carry)
        adv[t] = carry
    return adv, adv + batch.values


# -- updates -----------------------------------------------------------------

def _minibatch_slices(n_samples, n_minibatches, perm):
    size = n_samples // n_minibatches
    for k in range(n_minibatches):
        lo = k * size
        hi = n_samples if k == n_minibatches - 1 else lo + size
        yield perm[lo:hi]


def ppo_update(policy, value_net, policy_opt, value_opt,
               batch: RolloutBatch, cfg: TrainConfig, rng):
    """Clipped-surrogate epochs over shuffled minibatches.

    Advantages are normalized over the full batch.  Returns the mean policy
    and value losses across all minibatch steps.
    """
    adv, returns = compute_advantages(batch, cfg.gamma, cfg.gae_lambda)
    m = adv.size
    flat_obs = batch.policy_in.reshape(m, -1)
    flat_act = batch.actions.reshape(m, batch.actions.shape[-1])
    flat_logp = batch.log_probs.reshape(m)
    flat_adv = (adv.reshape(m) - adv.mean()) / (adv.std() + 1e-8)
    flat_ret = returns.reshape(m)

    p_losses, v_losses = [], []
    for _ in range(cfg.epochs):
        perm = rng.permutation(m)
        for idx in _minibatch_slices(m, cfg.minibatches, perm):
            p_loss, p_grad = ppo_policy_loss_and_grad(
                policy, flat_obs[idx], flat_act[idx], flat_logp[idx],
                flat_adv[idx], cfg.clip_ratio, cfg.entropy_coef)
            policy.set_params(policy_opt.step(policy.get_params(), p_grad))
            v_loss, v_grad = value_loss_and_grad(value_net, flat_obs[idx],
                                                 flat_ret[idx])
            value_net.set_params(value_opt.step(value_net.get_params(),
                                                v_grad))
            p_losses.append(p_loss)
            v_losses.append(v_loss)
    return float(np.mean(p_losses)), float(np.mean(v_losses))


def estimator_update(estimator, estimator_opt, batch: RolloutBatch,
                     cfg: TrainConfig, rng):
    """Supervised epochs on (normalized obs -> ground truth) pairs."""
    m = batch.obs_norm.shape[0] * batch.obs_norm.shape[1]
    flat_obs = batch.obs_norm.reshape(m, -1)
    flat_gt = batch.ground_truth.reshape(m, -1)
    losses = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(m)
        for idx in _minibatch_slices(m, cfg.minibatches, perm):
            loss, grad = estimator_loss_and_grad(estimator, flat_obs[idx],
                                                 flat_gt[idx])
            estimator.set_params(estimator_opt.step(estimator.get_params(),
                                                    grad))
            losses.append(loss)
    return float(np.mean(losses))


# -- training orchestration ---------------------------------------------------

@dataclass
class TrainedBundle:
    policy: GaussianPolicy
    value: MLP
    estimator: MLP
    normalizer: ObsNormalizer
    config: TrainConfig
    reward_config: RewardConfig


def _build_networks(cfg: TrainConfig, rng):
    spec = cfg.networks
    policy = GaussianPolicy(POLICY_IN_DIM, spec.policy_hidden, ACTION_DIM,
                            rng, init_log_std=cfg.init_log_std)
    value = MLP([POLICY_IN_DIM, *spec.value_hidden, 1], rng)
    estimator = MLP([OBS_DIM, *spec.estimator_hidden, GROUND_TRUTH_DIM], rng)
    return policy, value, estimator


def train(model: RobotModel, cfg: TrainConfig, *, reward_config=None,
          metrics_path=None, checkpoint_path=None, progress=None):
    """Full training run; returns (list of IterationMetrics, TrainedBundle).

    metrics_path, when given, receives one CSV row per iteration under the
    fixed header.  progress, when given, is called with each
    IterationMetrics as it is produced.
    """
    seq = np.random.SeedSequence(cfg.seed)
    env_seed, net_seed, rollout_seed, update_seed = seq.spawn(4)
    if reward_config is None:
        # Joint deviations are measured from the robot's stance.
        reward_config = RewardConfig(q_nominal=tuple(model.q_nominal))
    reward_cfg = reward_config
    if not cfg.gait_reward:
        reward_cfg = replace(reward_cfg, c_gait=0.0)

    env = VectorQuadrupedEnv(
        model, cfg.env_count, env_seed,
        mor_constraint=cfg.mor_constraint,
        randomize_bands={} if cfg.randomize else None,
        action_scale=cfg.action_scale)

    policy, value, estimator = _build_networks(
        cfg, np.random.default_rng(net_seed))
    normalizer = ObsNormalizer(OBS_DIM)
    policy_opt = Adam(policy.n_params, cfg.learning_rate)
    value_opt = Adam(value.n_params, cfg.learning_rate)
    estimator_opt = Adam(estimator.n_params, cfg.learning_rate)
    rollout_rng = np.random.default_rng(rollout_seed)
    update_rng = np.random.default_rng(update_seed)

    metrics_file = None
    if metrics_path is not None:
        metrics_file = open(metrics_path, "w")
        metrics_file.write(METRICS_HEADER + "\n")

    history = []
    try:
        for it in range(cfg.iterations):
            cur = advance_curriculum(cfg.curriculum, it, cfg.iterations)
            env.set_curriculum(cur)
            batch = collect_rollouts(env, policy, value, estimator,
                                     normalizer, reward_cfg,
                                     cur.tracking_scale, rollout_rng,
                                     steps=cfg.steps_per_env,
                                     action_clip=cfg.action_clip)
            est_loss = estimator_update(estimator, estimator_opt, batch,
                                        cfg, update_rng)
            # Returns of O(hundreds) swamp the value regression at this
            # learning rate, so the RL objective sees scaled rewards; the
            # reported metrics stay in raw per-step units.
            raw_mean = batch.mean_reward
            scaled = replace(batch, rewards=batch.rewards * cfg.reward_scale)
            p_loss, v_loss = ppo_update(policy, value, policy_opt,
                                        value_opt, scaled, cfg, update_rng)
            normalizer.update(batch.obs_raw)
            row = IterationMetrics(
                iteration=it, mean_reward=raw_mean,
                violation_ratio=batch.violation_ratio,
                cmd_lo=cur.cmd_lo, cmd_hi=cur.cmd_hi,
                policy_loss=p_loss, value_loss=v_loss,
                estimator_loss=est_loss)
            history.append(row)
            if metrics_file is not None:
                metrics_file.write(row.csv_row() + "\n")
                metrics_file.flush()
            if progress is not None:
                progress(row)
    finally:
        if metrics_file is not None:
            metrics_file.close()

    bundle = TrainedBundle(policy=policy, value=value, estimator=estimator,
                           normalizer=normalizer, config=cfg,
                           reward_config=reward_cfg)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, bundle)
    return history, bundle


def _config_hash(cfg: TrainConfig) -> str:
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()


CHECKPOINT_VERSION = 1


def save_checkpoint(path, bundle: TrainedBundle) -> None:
    cfg = bundle.config
    np.savez(
        path,
        version=CHECKPOINT_VERSION,
        config_hash=_config_hash(cfg),
        config_json=json.dumps(dataclasses.asdict(cfg), default=list),
        reward_json=json.dumps(dataclasses.asdict(bundle.reward_config),
                               default=list),
        policy_sizes=np.array(bundle.policy.net.sizes),
        policy_params=bundle.policy.get_params(),
        value_sizes=np.array(bundle.value.sizes),
        value_params=bundle.value.get_params(),
        estimator_sizes=np.array(bundle.estimator.sizes),
        estimator_params=bundle.estimator.get_params(),
        norm_mean=bundle.normalizer.mean,
        norm_var=bundle.normalizer.var,
        norm_count=bundle.normalizer.count)


def _tuplify(obj):
    return tuple(_tuplify(v) if isinstance(v, list) else v for v in obj) \
        if isinstance(obj, list) else obj


def load_checkpoint(path) -> TrainedBundle:
    data = np.load(path, allow_pickle=False)
    version = int(data["version"])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    cfg_dict = json.loads(str(data["config_json"]))
    cfg_dict["networks"] = NetworkSpec(
        **{k: _tuplify(v) for k, v in cfg_dict["networks"].items()})
    cfg_dict["curriculum"] = CurriculumConfig(
        **{k: _tuplify(v) for k, v in cfg_dict["curriculum"].items()})
    cfg = TrainConfig(**cfg_dict)
    if str(data["config_hash"]) != _config_hash(cfg):
        raise ValueError("checkpoint config hash mismatch")
    reward_dict = json.loads(str(data["reward_json"]))
    reward_dict["q_nominal"] = _tuplify(reward_dict["q_nominal"])
    reward_cfg = RewardConfig(**reward_dict)

    rng = np.random.default_rng(0)
    policy = GaussianPolicy(int(data["policy_sizes"][0]),
                            tuple(int(s) for s in data["policy_sizes"][1:-1]),
                            int(data["policy_sizes"][-1]), rng)
    policy.set_params(data["policy_params"])
    value = MLP([int(s) for s in data["value_sizes"]], rng)
    value.set_params(data["value_params"])
    estimator = MLP([int(s) for s in data["estimator_sizes"]], rng)
    estimator.set_params(data["estimator_params"])
    normalizer = ObsNormalizer(OBS_DIM)
    normalizer.mean = data["norm_mean"].copy()
    normalizer.var = data["norm_var"].copy()
    normalizer.count = float(data["norm_count"])
    return TrainedBundle(policy=policy, value=value, estimator=estimator,
                         normalizer=normalizer, config=cfg,
                         reward_config=reward_cfg)


# -- evaluation ---------------------------------------------------------------

def policy_action(bundle: TrainedBundle, obs_raw) -> np.ndarray:
    """Deterministic (mean) action for raw observations."""
    _, _, p_in = _policy_input(bundle.normalizer, bundle.estimator, obs_raw)
    a = bundle.policy.mean(p_in)
    rail = bundle.config.action_clip
    return np.clip(a, -rail, rail)


@dataclass(frozen=True)
class EvalResult:
    command: float
    avg_reward: float
    avg_reward_no_contact: float
    cost_of_transport: float | None
    achieved_speed: float
    clip_events: int
    converged: bool
    fell: bool


def cost_of_transport(motor_trace, model: RobotModel, distance,
                      dt=PHYSICS_DT):
    """Mechanical positive work plus joule heating over weight x distance.

    motor_trace is an iterable of (motor torques, motor speeds) samples at
    spacing dt, in applied (post-clip) torques; currents come from the
    torque-current map (infeasible torques extrapolate the fit).  Zero
    distance leaves the quantity undefined, reported as None.
    """
    if abs(distance) < 1e-9:
        return None
    energy = 0.0
    for tau, omega in motor_trace:
        tau = np.asarray(tau, dtype=float)
        omega = np.asarray(omega, dtype=float)
        current = torque_to_current(model.motor.current_map, tau)
        power = (np.maximum(tau * omega, 0.0)
                 + current * current * model.motor.resistance)
        energy += dt * float(power.sum())
    total_mass = model.torso_mass + 4 * (model.thigh_mass
                                         + model.effective_calf_mass)
    return energy / (total_mass * model.gravity * abs(distance))


def evaluate_policy(model: RobotModel, bundle: TrainedBundle, command, *,
                    mor_constraint, seed=0, accel=1.0, hold_seconds=0.5,
                    window_seconds=3.0, max_seconds=20.0) -> EvalResult:
    """Steady-state evaluation at one forward-velocity command.

    The command ramps from zero at `accel`; measurement starts after the
    speed stays within max(5% of command, 0.05 m/s) of the target for
    hold_seconds (or at a fallback deadline if it never converges), then
    runs for window_seconds.  Rewards average the full suite at tracking
    scale 1; the contact-excluded aggregate drops the terms that consume
    contact flags.  clip_events counts infeasible motor commands over the
    entire run in both modes.
    """
    env = VectorQuadrupedEnv(
        model, 1, seed, mor_constraint=mor_constraint,
        randomize_bands=None, joint_reset_noise=0.0,
        collect_motor_trace=True, episode_steps=10 ** 9,
        action_scale=bundle.config.action_scale)
    env.command[:] = command
    env.ramp[:] = abs(command) / accel if command else 0.0

    hold_steps = round(hold_seconds / CONTROL_DT)
    window_steps = round(window_seconds / CONTROL_DT)
    max_steps = round(max_seconds / CONTROL_DT)
    # If tracking never settles, measure the tail window anyway.
    fallback_start = max_steps - window_steps - 1

    tol = max(0.05 * abs(command), 0.05)
    held = 0
    started = False
    converged = False
    fell = False
    clip_events = 0
    window_inputs = []   # window_steps rows + one to finalize touchdowns
    window_trace = []
    window_x = []        # torso x after each measured row
    x_start = None

    obs = env.observation()
    for k in range(max_steps):
        if not started and (held >= hold_steps or k >= fallback_start):
            started = True
            converged = held >= hold_steps
            x_start = float(env.q[0, 0])
        a = policy_action(bundle, obs)
        obs, reward_inputs, done, info = env.step(a)
        clip_events += info["violations"]
        if bool(done[0]):
            fell = True
            break
        if started:
            window_inputs.append(reward_inputs)
            if len(window_inputs) <= window_steps:
                window_trace.extend(info["motor_trace"])
                window_x.append(float(env.q[0, 0]))
            else:
                break
        held = held + 1 if abs(float(env.v[0, 0]) - command) <= tol else 0

    # The final row only closes the contact history; at least one measured
    # row plus that closer is needed for a result.
    n_measure = min(len(window_inputs) - 1, window_steps)
    if n_measure < 1 or x_start is None:
        return EvalResult(command=float(command), avg_reward=float("nan"),
                          avg_reward_no_contact=float("nan"),
                          cost_of_transport=None, achieved_speed=float("nan"),
                          clip_events=clip_events, converged=False,
                          fell=fell)

    stacked = {k: np.stack([ri[k] for ri in window_inputs])
               for k in window_inputs[0].keys()}
    contacts = stacked.pop("contacts")
    precontact = np.zeros_like(contacts, dtype=bool)
    precontact[:-1] = ~contacts[:-1] & contacts[1:]
    terms = compute_reward_terms(bundle.reward_config,
                                 contacts=contacts, precontact=precontact,
                                 **stacked)
    total = sum(terms.values())[:n_measure]
    no_contact = sum(v for kk, v in terms.items()
                     if kk not in CONTACT_TERM_NAMES)[:n_measure]

    distance = window_x[n_measure - 1] - x_start
    measured_seconds = n_measure * CONTROL_DT
    substeps_per_step = round(CONTROL_DT / PHYSICS_DT)
    trace = [(post, om) for _pre, post, om
             in window_trace[:n_measure * substeps_per_step]]
    cot = cost_of_transport(trace, model, distance)
    return EvalResult(command=float(command),
                      avg_reward=float(total.mean()),
                      avg_reward_no_contact=float(no_contact.mean()),
                      cost_of_transport=cot,
                      achieved_speed=float(distance / measured_seconds),
                      clip_events=clip_events, converged=converged,
                      fell=fell)


def delta_reward_mor(model: RobotModel, bundle: TrainedBundle, commands, *,
                     seed=0, **eval_kwargs):
    """Per-command evaluation gap: unconstrained minus constrained.

    Below clip onset the two runs are trajectory-identical, so both deltas
    are exactly zero.  Returns a list of dicts with both aggregates and the
    constrained run's clip count.
    """
    rows = []
    for cmd in commands:
        on = evaluate_policy(model, bundle, cmd, mor_constraint=True,
                             seed=seed, **eval_kwargs)
        off = evaluate_policy(model, bundle, cmd, mor_constraint=False,
                              seed=seed, **eval_kwargs)
        rows.append({
            "command": float(cmd),
            "delta_reward": off.avg_reward - on.avg_reward,
            "delta_reward_no_contact": (off.avg_reward_no_contact
                                        - on.avg_reward_no_contact),
            "clip_events": on.clip_events,
            "achieved_on": on.achieved_speed,
            "achieved_off": off.achieved_speed,
        })
    return rows
