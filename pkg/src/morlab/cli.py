"""Operator surface: envelope export, log audits, training, evaluation.

Every figure-style output is CSV (9 significant digits) so plots regenerate
with any tool; checkpoints stay binary for exactness.  Exit codes: 0 on
success, 1 on configuration errors, 2 on runtime faults.  Audits exit 0 even
when they find violations; findings are not errors.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .config import (ConfigError, RunConfig, apply_overrides, default_config,
                     load_config)
from .learner import (delta_reward_mor, evaluate_policy, format_float,
                      load_checkpoint, train)
from .motor_envelope import (OperatingPoint, contains, envelope_polygon,
                             feasible_torque_interval, required_voltage,
                             saturate_torque)
from .quadruped_sim import StepFault

__all__ = ["main"]

ENVELOPE_HEADER = ["omega_rad_s", "tau_min_nm", "tau_max_nm"]
LOG_HEADER = ["time_s", "motor_id", "omega_rad_s", "tau_nm"]
EVAL_HEADER = ["cmd_mps", "avg_reward", "avg_reward_no_contact", "cot",
               "achieved_speed"]
COMPARE_HEADER = ["cmd_mps", "delta_reward", "delta_reward_no_contact",
                  "clip_events", "achieved_mps_on", "achieved_mps_off"]


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors (exit 1, not argparse's 2)."""

    def error(self, message):
        raise ConfigError(message)


def _on_off(value: str) -> bool:
    if value == "on":
        return True
    if value == "off":
        return False
    raise ConfigError(f"expected 'on' or 'off', got {value!r}")


def _load(args) -> RunConfig:
    if args.config is None:
        return default_config()
    try:
        return load_config(args.config)
    except OSError as e:
        raise ConfigError(f"cannot read config {args.config}: {e}")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _read_log(path):
    """Rows of a trajectory log as (time_s, motor_id, omega, tau) tuples."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != LOG_HEADER:
            raise ValueError(
                f"log header must be {','.join(LOG_HEADER)}, "
                f"got {header and ','.join(header)}")
        rows = []
        for line in reader:
            if not line:
                continue
            if len(line) != 4:
                raise ValueError(f"log row needs 4 fields, got {line!r}")
            rows.append((float(line[0]), line[1], float(line[2]),
                         float(line[3])))
    return rows


def cmd_envelope(args) -> int:
    cfg = _load(args)
    spec = cfg.robot.motor
    poly = envelope_polygon(spec)
    corner_speeds = sorted({v.angular_velocity for v in poly.vertices})
    omega_max = max(abs(w) for w in corner_speeds)
    # Odd sample count keeps the zero-speed row in the grid.
    n = args.samples if args.samples % 2 else args.samples + 1
    grid = np.linspace(-omega_max, omega_max, n)
    speeds = np.unique(np.concatenate([grid, corner_speeds]))
    rows = []
    for omega in speeds:
        interval = feasible_torque_interval(spec, float(omega))
        if interval.empty:
            continue
        rows.append((format_float(omega), format_float(interval.lower),
                     format_float(interval.upper)))
    _write_csv(args.out, ENVELOPE_HEADER, rows)
    print(f"wrote {len(rows)} envelope rows to {args.out}")
    return 0


def cmd_check(args) -> int:
    cfg = _load(args)
    spec = cfg.robot.motor
    rows = _read_log(args.log)
    violations = 0
    worst_excess = 0.0
    for _, _, omega, tau in rows:
        point = OperatingPoint(tau, omega)
        if not contains(spec, point):
            violations += 1
        excess = abs(required_voltage(spec, point)) - spec.bus_voltage
        worst_excess = max(worst_excess, excess)
    total = len(rows)
    ratio = violations / total if total else 0.0
    report = [("rows", str(total)),
              ("violations", str(violations)),
              ("ratio", format_float(ratio)),
              ("worst_voltage_excess_v", format_float(worst_excess))]
    for key, value in report:
        print(f"{key}: {value}")
    if args.out:
        _write_csv(args.out, [k for k, _ in report],
                   [[v for _, v in report]])
    return 0


def cmd_clip(args) -> int:
    cfg = _load(args)
    spec = cfg.robot.motor
    rows = _read_log(args.log)
    out_rows = []
    for t, motor_id, omega, tau in rows:
        # Audits reparse the 9-digit CSV, so clip at the speed as it will be
        # reparsed and pull boundary hits a guard band inside the slice;
        # otherwise decimal rounding can push a boundary torque outward.
        omega_out = float(format_float(omega))
        clipped, _ = saturate_torque(spec, tau, omega_out)
        interval = feasible_torque_interval(spec, omega_out)
        if not interval.empty:
            guard = 1e-8 * max(1.0, abs(interval.lower),
                               abs(interval.upper))
            if interval.upper - interval.lower > 2.0 * guard:
                clipped = min(max(clipped, interval.lower + guard),
                              interval.upper - guard)
            else:
                clipped = 0.5 * (interval.lower + interval.upper)
        out_rows.append((format_float(t), motor_id, format_float(omega),
                         format_float(clipped)))
    _write_csv(args.out, LOG_HEADER, out_rows)
    print(f"wrote {len(out_rows)} clipped rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    cfg = apply_overrides(cfg, seed=args.seed,
                          mor_constraint=args.mor_constraint,
                          gait_reward=args.gait_reward,
                          foot_variant=args.foot,
                          iterations=args.iterations)
    os.makedirs(args.out, exist_ok=True)
    metrics = os.path.join(args.out, "metrics.csv")
    checkpoint = os.path.join(args.out, "checkpoint.npz")

    def progress(m):
        if m.iteration % 10 == 0 or m.iteration == cfg.train.iterations - 1:
            print(f"iter {m.iteration:4d}  reward {m.mean_reward:9.3f}  "
                  f"violation_ratio {m.violation_ratio:.4f}  "
                  f"cmd [{m.cmd_lo:.2f}, {m.cmd_hi:.2f}]")

    history, _ = train(cfg.robot, cfg.train, reward_config=cfg.reward,
                       metrics_path=metrics, checkpoint_path=checkpoint,
                       progress=progress)
    last = history[-1]
    print(f"done: {len(history)} iterations, final reward "
          f"{format_float(last.mean_reward)}, final violation ratio "
          f"{format_float(last.violation_ratio)}")
    print(f"metrics: {metrics}")
    print(f"checkpoint: {checkpoint}")
    return 0


def _parse_commands(raw, cfg: RunConfig):
    if raw:
        try:
            return [float(p) for p in raw.split(",") if p.strip()]
        except ValueError:
            raise ConfigError(f"bad --commands list: {raw!r}")
    # Default sweep: forward commands at treadmill-style 0.5 m/s increments.
    top = cfg.train.curriculum.final_bounds[1]
    return list(np.arange(0.0, top + 1e-9, 0.5))


def cmd_eval(args) -> int:
    cfg = _load(args)
    bundle = load_checkpoint(args.checkpoint)
    commands = _parse_commands(args.commands, cfg)
    rows = []
    for cmd in commands:
        r = evaluate_policy(cfg.robot, bundle, cmd,
                            mor_constraint=args.mor_constraint,
                            seed=args.seed)
        cot = "" if r.cost_of_transport is None else format_float(
            r.cost_of_transport)
        rows.append((format_float(r.command), format_float(r.avg_reward),
                     format_float(r.avg_reward_no_contact), cot,
                     format_float(r.achieved_speed)))
        print(f"cmd {r.command:5.2f}  reward {r.avg_reward:9.3f}  "
              f"achieved {r.achieved_speed:6.3f}  clips {r.clip_events}")
    _write_csv(args.out, EVAL_HEADER, rows)
    print(f"wrote {len(rows)} eval rows to {args.out}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    bundle = load_checkpoint(args.checkpoint)
    commands = _parse_commands(args.commands, cfg)
    table = delta_reward_mor(cfg.robot, bundle, commands, seed=args.seed)
    rows = []
    for r in table:
        rows.append((format_float(r["command"]),
                     format_float(r["delta_reward"]),
                     format_float(r["delta_reward_no_contact"]),
                     str(r["clip_events"]),
                     format_float(r["achieved_on"]),
                     format_float(r["achieved_off"])))
        print(f"cmd {r['command']:5.2f}  delta {r['delta_reward']:9.4f}  "
              f"delta_no_contact {r['delta_reward_no_contact']:9.4f}  "
              f"clips {r['clip_events']}")
    _write_csv(args.out, COMPARE_HEADER, rows)
    print(f"wrote {len(rows)} comparison rows to {args.out}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="morlab",
                     description="Constrained-actuation locomotion lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", default=None,
                       help="run configuration file (defaults built in)")
        if out_required:
            p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("envelope", help="export the motor operating region")
    common(p)
    p.add_argument("--samples", type=int, default=101,
                   help="boundary sample count (default 101)")
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("check", help="audit a trajectory log for violations")
    common(p, out_required=False)
    p.add_argument("--out", default=None, help="optional report CSV")
    p.add_argument("log", help="trajectory CSV (time_s,motor_id,"
                               "omega_rad_s,tau_nm)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("clip", help="rewrite a trajectory log through "
                                    "torque saturation")
    common(p)
    p.add_argument("log", help="trajectory CSV to clip")
    p.set_defaults(func=cmd_clip)

    p = sub.add_parser("train", help="train a policy")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None,
                   help="override configured iteration count")
    p.add_argument("--mor-constraint", type=_on_off, default=None,
                   metavar="{on,off}")
    p.add_argument("--gait-reward", type=_on_off, default=None,
                   metavar="{on,off}")
    p.add_argument("--foot", choices=["original", "lightweight"],
                   default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint over a command "
                                    "sweep")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--commands", default=None,
                   help="comma-separated commands [m/s]")
    p.add_argument("--mor-constraint", type=_on_off, default=True,
                   metavar="{on,off}")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="constrained vs unconstrained "
                                       "evaluation gap per command")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--commands", default=None,
                   help="comma-separated commands [m/s]")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (StepFault, OSError, ValueError) as e:
        print(f"runtime fault: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
