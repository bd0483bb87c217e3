"""Plain-text run configuration: sectioned key = value files.

Five sections: motors, robot, rewards, curriculum, training.  Every key is
validated at load time against its module's constructor invariants; unknown
sections or keys are rejected.  Omitted keys take the package defaults.
Serialization writes every key explicitly, so load -> save -> load is an
identity.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

from .gear_coupling import CouplingMatrix
from .motor_envelope import MotorSpec, TorqueCurrentMap
from .quadruped_sim import CurriculumConfig, RobotModel
from .actuation import PDConfig
from .learner import NetworkSpec, TrainConfig
from .rewards import RewardConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "loads_config",
           "save_config", "dumps_config", "default_config"]


class ConfigError(ValueError):
    """Malformed run configuration (unknown key, bad value, bad section)."""


@dataclass(frozen=True)
class RunConfig:
    robot: RobotModel
    reward: RewardConfig
    train: TrainConfig


def default_config() -> RunConfig:
    robot = RobotModel()
    return RunConfig(robot=robot,
                     reward=RewardConfig(q_nominal=robot.q_nominal),
                     train=TrainConfig())


def _parse_float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not a number: {raw!r}")


def _parse_int(section, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not an integer: {raw!r}")


_BOOLEANS = {"true": True, "yes": True, "on": True, "1": True,
             "false": False, "no": False, "off": False, "0": False}


def _parse_bool(section, key, raw):
    try:
        return _BOOLEANS[raw.strip().lower()]
    except KeyError:
        raise ConfigError(f"[{section}] {key}: not a boolean: {raw!r}")


def _parse_floats(section, key, raw, count):
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != count:
        raise ConfigError(
            f"[{section}] {key}: expected {count} values, got {len(parts)}")
    return tuple(_parse_float(section, key, p) for p in parts)


def _parse_ints_any(section, key, raw):
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ConfigError(f"[{section}] {key}: expected at least one value")
    return tuple(_parse_int(section, key, p) for p in parts)


# Section -> key -> (parser tag, extra).  Tags drive both load and dump.
_SCHEMA = {
    "motors": {
        "resistance_ohm": "float",
        "kt_nm_per_a": "float",
        "kv_rad_s_per_v": "float",
        "bus_voltage_v": "float",
        "peak_torque_nm": "float",
        "current_quad_a": "float",
        "current_lin_b": "float",
        "g_haa": "float",
        "g_hfe": "float",
        "g_kfe": "float",
        "use_inverse_transpose_dual": "bool",
    },
    "robot": {
        "torso_mass_kg": "float",
        "torso_inertia_kgm2": "float",
        "torso_com_x_m": "float",
        "torso_com_z_m": "float",
        "hip_x_m": "floats4",
        "thigh_length_m": "float",
        "calf_length_m": "float",
        "thigh_mass_kg": "float",
        "calf_mass_kg": "float",
        "thigh_inertia_kgm2": "float",
        "calf_inertia_kgm2": "float",
        "foot_variant": "str",
        "friction": "float",
        "gravity_m_s2": "float",
        "kp_nm_per_rad": "float",
        "kd_nms_per_rad": "float",
        "q_nominal_rad": "floats8",
    },
    "rewards": {
        "c_v": "float",
        "c_yaw_rate": "float",
        "c_gait": "float",
        "c_contact": "float",
        "c_slip": "float",
        "c_clearance": "float",
        "c_orientation": "float",
        "c_torque": "float",
        "c_position": "float",
        "c_speed": "float",
        "c_acceleration": "float",
        "c_base": "float",
        "c_smooth1": "float",
        "c_smooth2": "float",
        "desired_foot_clearance_m": "float",
    },
    "curriculum": {
        "cmd_lo_start": "float",
        "cmd_hi_start": "float",
        "cmd_lo_final": "float",
        "cmd_hi_final": "float",
        "widen_fraction": "float",
        "tracking_scale_start": "float",
    },
    "training": {
        "iterations": "int",
        "env_count": "int",
        "seed": "int",
        "steps_per_env": "int",
        "gamma": "float",
        "gae_lambda": "float",
        "clip_ratio": "float",
        "learning_rate": "float",
        "epochs": "int",
        "minibatches": "int",
        "entropy_coef": "float",
        "reward_scale": "float",
        "action_scale": "float",
        "action_clip": "float",
        "init_log_std": "float",
        "mor_constraint": "bool",
        "gait_reward": "bool",
        "randomize": "bool",
        "policy_hidden": "ints",
        "value_hidden": "ints",
        "estimator_hidden": "ints",
    },
}


def _parse_value(section, key, raw):
    tag = _SCHEMA[section][key]
    if tag == "float":
        return _parse_float(section, key, raw)
    if tag == "int":
        return _parse_int(section, key, raw)
    if tag == "bool":
        return _parse_bool(section, key, raw)
    if tag == "floats4":
        return _parse_floats(section, key, raw, 4)
    if tag == "floats8":
        return _parse_floats(section, key, raw, 8)
    if tag == "ints":
        return _parse_ints_any(section, key, raw)
    return raw.strip()


def _read_sections(parser: configparser.ConfigParser):
    values = {name: {} for name in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[section][key] = _parse_value(section, key, raw)
    return values


def _assemble(values) -> RunConfig:
    m = values["motors"]
    defaults = RobotModel()
    motor_kwargs = {}
    for field, key in (("resistance", "resistance_ohm"),
                       ("torque_constant", "kt_nm_per_a"),
                       ("velocity_constant", "kv_rad_s_per_v"),
                       ("bus_voltage", "bus_voltage_v"),
                       ("peak_torque", "peak_torque_nm")):
        motor_kwargs[field] = m.get(key, getattr(defaults.motor, field))
    if "current_quad_a" in m or "current_lin_b" in m:
        lin_default = 1.0 / motor_kwargs["torque_constant"]
        motor_kwargs["current_map"] = TorqueCurrentMap(
            m.get("current_quad_a", 0.0), m.get("current_lin_b", lin_default))
    try:
        motor = MotorSpec(**motor_kwargs)
        coupling = CouplingMatrix(
            m.get("g_hfe", defaults.leg_coupling.g_hfe),
            m.get("g_kfe", defaults.leg_coupling.g_kfe),
            use_inverse_transpose_dual=m.get("use_inverse_transpose_dual", False))
    except ValueError as e:
        raise ConfigError(f"[motors] {e}")

    r = values["robot"]
    try:
        pd = PDConfig(kp=r.get("kp_nm_per_rad", defaults.pd.kp),
                      kd=r.get("kd_nms_per_rad", defaults.pd.kd))
        robot = RobotModel(
            torso_mass=r.get("torso_mass_kg", defaults.torso_mass),
            torso_inertia=r.get("torso_inertia_kgm2", defaults.torso_inertia),
            torso_com=(r.get("torso_com_x_m", defaults.torso_com[0]),
                       r.get("torso_com_z_m", defaults.torso_com[1])),
            hip_x=r.get("hip_x_m", defaults.hip_x),
            thigh_length=r.get("thigh_length_m", defaults.thigh_length),
            calf_length=r.get("calf_length_m", defaults.calf_length),
            thigh_mass=r.get("thigh_mass_kg", defaults.thigh_mass),
            calf_mass=r.get("calf_mass_kg", defaults.calf_mass),
            thigh_inertia=r.get("thigh_inertia_kgm2", defaults.thigh_inertia),
            calf_inertia=r.get("calf_inertia_kgm2", defaults.calf_inertia),
            foot_variant=r.get("foot_variant", defaults.foot_variant),
            friction=r.get("friction", defaults.friction),
            gravity=r.get("gravity_m_s2", defaults.gravity),
            q_nominal=r.get("q_nominal_rad", defaults.q_nominal),
            motor=motor, leg_coupling=coupling,
            haa_ratio=m.get("g_haa", defaults.haa_ratio), pd=pd)
    except ValueError as e:
        raise ConfigError(f"[robot] {e}")

    w = values["rewards"]
    reward_defaults = RewardConfig(q_nominal=robot.q_nominal)
    try:
        reward = RewardConfig(
            c_v=w.get("c_v", reward_defaults.c_v),
            c_yaw_rate=w.get("c_yaw_rate", reward_defaults.c_yaw_rate),
            c_gait=w.get("c_gait", reward_defaults.c_gait),
            c_contact=w.get("c_contact", reward_defaults.c_contact),
            c_slip=w.get("c_slip", reward_defaults.c_slip),
            c_clearance=w.get("c_clearance", reward_defaults.c_clearance),
            c_orientation=w.get("c_orientation",
                                reward_defaults.c_orientation),
            c_torque=w.get("c_torque", reward_defaults.c_torque),
            c_position=w.get("c_position", reward_defaults.c_position),
            c_speed=w.get("c_speed", reward_defaults.c_speed),
            c_acceleration=w.get("c_acceleration",
                                 reward_defaults.c_acceleration),
            c_base=w.get("c_base", reward_defaults.c_base),
            c_smooth1=w.get("c_smooth1", reward_defaults.c_smooth1),
            c_smooth2=w.get("c_smooth2", reward_defaults.c_smooth2),
            desired_foot_clearance=w.get(
                "desired_foot_clearance_m",
                reward_defaults.desired_foot_clearance),
            q_nominal=robot.q_nominal)
    except ValueError as e:
        raise ConfigError(f"[rewards] {e}")

    c = values["curriculum"]
    cur_defaults = CurriculumConfig()
    try:
        curriculum = CurriculumConfig(
            start_bounds=(c.get("cmd_lo_start", cur_defaults.start_bounds[0]),
                          c.get("cmd_hi_start",
                                cur_defaults.start_bounds[1])),
            final_bounds=(c.get("cmd_lo_final", cur_defaults.final_bounds[0]),
                          c.get("cmd_hi_final",
                                cur_defaults.final_bounds[1])),
            widen_fraction=c.get("widen_fraction",
                                 cur_defaults.widen_fraction),
            tracking_scale_start=c.get("tracking_scale_start",
                                       cur_defaults.tracking_scale_start))
    except ValueError as e:
        raise ConfigError(f"[curriculum] {e}")

    t = values["training"]
    train_defaults = TrainConfig()
    try:
        networks = NetworkSpec(
            policy_hidden=t.get("policy_hidden",
                                train_defaults.networks.policy_hidden),
            value_hidden=t.get("value_hidden",
                               train_defaults.networks.value_hidden),
            estimator_hidden=t.get("estimator_hidden",
                                   train_defaults.networks.estimator_hidden))
        train = TrainConfig(
            iterations=t.get("iterations", train_defaults.iterations),
            env_count=t.get("env_count", train_defaults.env_count),
            seed=t.get("seed", train_defaults.seed),
            steps_per_env=t.get("steps_per_env",
                                train_defaults.steps_per_env),
            gamma=t.get("gamma", train_defaults.gamma),
            gae_lambda=t.get("gae_lambda", train_defaults.gae_lambda),
            clip_ratio=t.get("clip_ratio", train_defaults.clip_ratio),
            learning_rate=t.get("learning_rate",
                                train_defaults.learning_rate),
            epochs=t.get("epochs", train_defaults.epochs),
            minibatches=t.get("minibatches", train_defaults.minibatches),
            entropy_coef=t.get("entropy_coef", train_defaults.entropy_coef),
            reward_scale=t.get("reward_scale", train_defaults.reward_scale),
            action_scale=t.get("action_scale", train_defaults.action_scale),
            action_clip=t.get("action_clip", train_defaults.action_clip),
            init_log_std=t.get("init_log_std", train_defaults.init_log_std),
            mor_constraint=t.get("mor_constraint",
                                 train_defaults.mor_constraint),
            gait_reward=t.get("gait_reward", train_defaults.gait_reward),
            randomize=t.get("randomize", train_defaults.randomize),
            networks=networks, curriculum=curriculum)
    except ValueError as e:
        raise ConfigError(f"[training] {e}")

    for name in ("iterations", "env_count", "steps_per_env", "epochs",
                 "minibatches"):
        if getattr(train, name) <= 0:
            raise ConfigError(f"[training] {name} must be positive")
    return RunConfig(robot=robot, reward=reward, train=train)


def loads_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e))
    return _assemble(_read_sections(parser))


def load_config(path) -> RunConfig:
    with open(path) as f:
        return loads_config(f.read())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps_config(cfg: RunConfig) -> str:
    robot, reward, train = cfg.robot, cfg.reward, cfg.train
    cur = train.curriculum
    sections = {
        "motors": {
            "resistance_ohm": robot.motor.resistance,
            "kt_nm_per_a": robot.motor.torque_constant,
            "kv_rad_s_per_v": robot.motor.velocity_constant,
            "bus_voltage_v": robot.motor.bus_voltage,
            "peak_torque_nm": robot.motor.peak_torque,
            "current_quad_a": robot.motor.current_map.quad_a,
            "current_lin_b": robot.motor.current_map.lin_b,
            "g_haa": robot.haa_ratio,
            "g_hfe": robot.leg_coupling.g_hfe,
            "g_kfe": robot.leg_coupling.g_kfe,
            "use_inverse_transpose_dual": robot.leg_coupling.use_inverse_transpose_dual,
        },
        "robot": {
            "torso_mass_kg": robot.torso_mass,
            "torso_inertia_kgm2": robot.torso_inertia,
            "torso_com_x_m": robot.torso_com[0],
            "torso_com_z_m": robot.torso_com[1],
            "hip_x_m": robot.hip_x,
            "thigh_length_m": robot.thigh_length,
            "calf_length_m": robot.calf_length,
            "thigh_mass_kg": robot.thigh_mass,
            "calf_mass_kg": robot.calf_mass,
            "thigh_inertia_kgm2": robot.thigh_inertia,
            "calf_inertia_kgm2": robot.calf_inertia,
            "foot_variant": robot.foot_variant,
            "friction": robot.friction,
            "gravity_m_s2": robot.gravity,
            "kp_nm_per_rad": robot.pd.kp,
            "kd_nms_per_rad": robot.pd.kd,
            "q_nominal_rad": robot.q_nominal,
        },
        "rewards": {
            "c_v": reward.c_v,
            "c_yaw_rate": reward.c_yaw_rate,
            "c_gait": reward.c_gait,
            "c_contact": reward.c_contact,
            "c_slip": reward.c_slip,
            "c_clearance": reward.c_clearance,
            "c_orientation": reward.c_orientation,
            "c_torque": reward.c_torque,
            "c_position": reward.c_position,
            "c_speed": reward.c_speed,
            "c_acceleration": reward.c_acceleration,
            "c_base": reward.c_base,
            "c_smooth1": reward.c_smooth1,
            "c_smooth2": reward.c_smooth2,
            "desired_foot_clearance_m": reward.desired_foot_clearance,
        },
        "curriculum": {
            "cmd_lo_start": cur.start_bounds[0],
            "cmd_hi_start": cur.start_bounds[1],
            "cmd_lo_final": cur.final_bounds[0],
            "cmd_hi_final": cur.final_bounds[1],
            "widen_fraction": cur.widen_fraction,
            "tracking_scale_start": cur.tracking_scale_start,
        },
        "training": {
            "iterations": train.iterations,
            "env_count": train.env_count,
            "seed": train.seed,
            "steps_per_env": train.steps_per_env,
            "gamma": train.gamma,
            "gae_lambda": train.gae_lambda,
            "clip_ratio": train.clip_ratio,
            "learning_rate": train.learning_rate,
            "epochs": train.epochs,
            "minibatches": train.minibatches,
            "entropy_coef": train.entropy_coef,
            "reward_scale": train.reward_scale,
            "action_scale": train.action_scale,
            "action_clip": train.action_clip,
            "init_log_std": train.init_log_std,
            "mor_constraint": train.mor_constraint,
            "gait_reward": train.gait_reward,
            "randomize": train.randomize,
            "policy_hidden": train.networks.policy_hidden,
            "value_hidden": train.networks.value_hidden,
            "estimator_hidden": train.networks.estimator_hidden,
        },
    }
    lines = []
    for name, kv in sections.items():
        lines.append(f"[{name}]")
        for key, value in kv.items():
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)


def save_config(path, cfg: RunConfig) -> None:
    with open(path, "w") as f:
        f.write(dumps_config(cfg))


def apply_overrides(cfg: RunConfig, *, seed=None, mor_constraint=None,
                    gait_reward=None, foot_variant=None,
                    iterations=None) -> RunConfig:
    """Command-line overrides on top of a loaded configuration."""
    robot, train = cfg.robot, cfg.train
    if foot_variant is not None:
        robot = replace(robot, foot_variant=foot_variant)
    train_updates = {}
    if seed is not None:
        train_updates["seed"] = int(seed)
    if mor_constraint is not None:
        train_updates["mor_constraint"] = bool(mor_constraint)
    if gait_reward is not None:
        train_updates["gait_reward"] = bool(gait_reward)
    if iterations is not None:
        train_updates["iterations"] = int(iterations)
    if train_updates:
        train = replace(train, **train_updates)
    return RunConfig(robot=robot, reward=cfg.reward, train=train)
