"""Spec-sheet motor feasibility: the torque-speed operating region.

A DC motor driven from a finite bus voltage can only realize (torque, speed)
pairs inside the intersection of two bands in the (tau, omega) plane:

    |(R/Kt)*tau + omega/Kv| <= V_bus      voltage band (quasi-stationary)
    |tau| <= tau_peak                     peak-torque rating

Both boundaries are closed, so controllers may ride the envelope.  The region
is a parallelogram; it is wider in the braking quadrants because back EMF
helps drive current there.  Winding inductance is deliberately dropped: the
current transient is fast against the mechanical time scale.

All operations are pure and broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TorqueCurrentMap",
    "MotorSpec",
    "OperatingPoint",
    "TorqueInterval",
    "EnvelopePolygon",
    "required_voltage",
    "feasible_torque_interval",
    "voltage_torque_band",
    "contains",
    "saturate_torque",
    "envelope_polygon",
    "torque_to_current",
    "current_to_torque",
]


@dataclass(frozen=True)
class TorqueCurrentMap:
    """Odd quadratic torque-to-current fit i(tau) = sign(tau)*(a*tau^2 + b*|tau|).

    a >= 0 and b > 0 keep the map strictly increasing, so the inverse is the
    positive root of the quadratic.  The linear approximation of a motor with
    torque constant Kt is (a=0, b=1/Kt).
    """

    quad_a: float = 0.0  # [A/(N*m)^2]
    lin_b: float = 1.0   # [A/(N*m)]

    def __post_init__(self) -> None:
        if not self.quad_a >= 0.0:
            raise ValueError(f"quad_a must be >= 0, got {self.quad_a}")
        if not self.lin_b > 0.0:
            raise ValueError(f"lin_b must be > 0, got {self.lin_b}")


@dataclass(frozen=True)
class MotorSpec:
    """Electrical constants defining one motor's feasible region and tau-i map."""

    resistance: float          # winding resistance R [ohm]
    torque_constant: float     # Kt [N*m/A]
    velocity_constant: float   # Kv [rad/s per V]
    bus_voltage: float         # V_bus [V]
    peak_torque: float         # tau_peak [N*m]
    current_map: TorqueCurrentMap = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        for name in ("resistance", "torque_constant", "velocity_constant",
                     "bus_voltage", "peak_torque"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.current_map is None:
            # Linear fit i = tau/Kt unless measured coefficients are supplied.
            object.__setattr__(
                self, "current_map", TorqueCurrentMap(0.0, 1.0 / self.torque_constant))


@dataclass(frozen=True)
class OperatingPoint:
    """A motor-side (torque, speed) point; fields may be numpy arrays."""

    torque: float              # [N*m]
    angular_velocity: float    # [rad/s]


@dataclass(frozen=True)
class TorqueInterval:
    """Feasible torque slice of the region at one speed; empty when the bands miss."""

    lower: float   # [N*m]
    upper: float   # [N*m]
    empty: bool

    def __post_init__(self) -> None:
        if not self.empty and not self.lower <= self.upper:
            raise ValueError("non-empty interval requires lower <= upper")


@dataclass(frozen=True)
class EnvelopePolygon:
    """Closed region boundary, counterclockwise, symmetric under point reflection."""

    vertices: tuple[OperatingPoint, ...]

    def as_array(self) -> np.ndarray:
        """Vertices as an (n, 2) array of (torque, angular_velocity) rows."""
        return np.array([(v.torque, v.angular_velocity) for v in self.vertices])

    def area(self) -> float:
        """Shoelace area of the polygon [N*m * rad/s]."""
        xy = self.as_array()
        x, y = xy[:, 0], xy[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def required_voltage(spec: MotorSpec, p: OperatingPoint):
    """Terminal voltage needed to hold the point: (R/Kt)*tau + omega/Kv [V]."""
    return (spec.resistance / spec.torque_constant) * p.torque \
        + p.angular_velocity / spec.velocity_constant


def voltage_torque_band(spec: MotorSpec, omega):
    """Torque bounds (lo, hi) imposed by the voltage band alone at speed omega."""
    scale = spec.torque_constant / spec.resistance
    back_emf = np.asarray(omega, dtype=float) / spec.velocity_constant
    lo = scale * (-spec.bus_voltage - back_emf)
    hi = scale * (spec.bus_voltage - back_emf)
    return lo, hi


def feasible_torque_interval(spec: MotorSpec, omega: float) -> TorqueInterval:
    """Intersection of the voltage and peak-torque bands at fixed speed.

    An empty interval (high speed, where even full bus voltage cannot reach
    back inside the peak band) is a valid return, never an error.
    """
    vlo, vhi = voltage_torque_band(spec, omega)
    lower = max(-spec.peak_torque, float(vlo))
    upper = min(spec.peak_torque, float(vhi))
    if lower > upper:
        return TorqueInterval(lower=lower, upper=upper, empty=True)
    return TorqueInterval(lower=lower, upper=upper, empty=False)


def contains(spec: MotorSpec, p: OperatingPoint, tol: float = 0.0):
    """Closed-region membership with a relative slack tol on both bounds."""
    if tol < 0.0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    volts_ok = np.abs(required_voltage(spec, p)) <= spec.bus_voltage * (1.0 + tol)
    torque_ok = np.abs(p.torque) <= spec.peak_torque * (1.0 + tol)
    return volts_ok & torque_ok


def saturate_torque(spec: MotorSpec, tau_cmd, omega):
    """Clamp a torque command into the region at the measured speed.

    Peak clamp first, voltage clamp last: the voltage band is the hard
    physical limit while the peak rating is a thermal recommendation.  When
    the two bands miss entirely the result is the voltage clamp of the
    peak-clamped command.  Returns (tau_applied, clipped) where clipped is
    the exact comparison tau_applied != tau_cmd; broadcasts over arrays.
    """
    tau_cmd = np.asarray(tau_cmd, dtype=float)
    peak = np.clip(tau_cmd, -spec.peak_torque, spec.peak_torque)
    vlo, vhi = voltage_torque_band(spec, omega)
    tau_applied = np.minimum(np.maximum(peak, vlo), vhi)
    clipped = tau_applied != tau_cmd
    if tau_applied.ndim == 0:
        return float(tau_applied), bool(clipped)
    return tau_applied, clipped


def envelope_polygon(spec: MotorSpec) -> EnvelopePolygon:
    """Exact vertices of the region: a parallelogram cut at tau = +-tau_peak.

    The voltage lines have finite slope in the (tau, omega) plane, so the
    intersection of the two bands always has exactly four corners.  Listed
    counterclockwise starting from the low-speed corner at +tau_peak.
    """
    tp = spec.peak_torque
    slope = spec.resistance / spec.torque_constant  # [V per N*m]

    def omega_at(tau: float, volts: float) -> float:
        return spec.velocity_constant * (volts - slope * tau)

    verts = (
        OperatingPoint(tp, omega_at(tp, -spec.bus_voltage)),
        OperatingPoint(tp, omega_at(tp, spec.bus_voltage)),
        OperatingPoint(-tp, omega_at(-tp, spec.bus_voltage)),
        OperatingPoint(-tp, omega_at(-tp, -spec.bus_voltage)),
    )
    return EnvelopePolygon(vertices=verts)


def torque_to_current(cmap: TorqueCurrentMap, tau):
    """Phase current drawn at a torque, i(tau) = sign(tau)*(a*tau^2 + b*|tau|) [A]."""
    tau = np.asarray(tau, dtype=float)
    mag = cmap.quad_a * tau * tau + cmap.lin_b * np.abs(tau)
    out = np.sign(tau) * mag
    return float(out) if out.ndim == 0 else out


def current_to_torque(cmap: TorqueCurrentMap, current):
    """Exact inverse of torque_to_current via the positive quadratic root.

    Valid coefficient maps (a >= 0, b > 0) are strictly increasing on the
    whole line, so every finite current inverts; non-finite input is rejected.
    """
    current = np.asarray(current, dtype=float)
    if not np.all(np.isfinite(current)):
        raise ValueError("current must be finite")
    mag = np.abs(current)
    if cmap.quad_a == 0.0:
        tau_mag = mag / cmap.lin_b
    else:
        b = cmap.lin_b
        tau_mag = (-b + np.sqrt(b * b + 4.0 * cmap.quad_a * mag)) / (2.0 * cmap.quad_a)
    out = np.sign(current) * tau_mag
    return float(out) if out.ndim == 0 else out
