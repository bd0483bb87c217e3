"""Joint <-> motor space transforms for the paralleled hip/knee actuator.

The hip (HFE) and knee (KFE) drives share one housing: the knee gearbox's
ring gear is bonded to the hip output, so hip rotation drags the knee motor
along even when the knee joint is still.  Superposition gives

    omega_joint = B @ omega_motor,
    B = [[1/g_hfe, 0], [-1/(g_hfe*g_kfe), 1/g_kfe]]

and the lossless torque dual is tau_motor = B.T @ tau_joint (the unique
static map with tau_motor . omega_motor = tau_joint . omega_joint).  A
config switch `use_inverse_transpose_dual` swaps in the inverse-transpose form instead,
for side-by-side comparison; that form does not conserve power.

Abduction joints sit on their own gearbox and use the degenerate 1x1
coupling, so every joint goes through one uniform interface.  Vectors are
plain arrays ordered (hfe, kfe), batched over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CouplingMatrix",
    "PlainRatio",
    "joint_to_motor_velocity",
    "motor_to_joint_velocity",
    "joint_to_motor_torque",
    "motor_to_joint_torque",
]


@dataclass(frozen=True)
class CouplingMatrix:
    """2x2 coupling for an HFE/KFE pair; ratios are reductions (motor faster)."""

    g_hfe: float
    g_kfe: float
    use_inverse_transpose_dual: bool = False

    def __post_init__(self) -> None:
        if not (self.g_hfe > 0.0 and self.g_kfe > 0.0):
            raise ValueError(
                f"reduction ratios must be > 0, got ({self.g_hfe}, {self.g_kfe})")

    @property
    def matrix_b(self) -> np.ndarray:
        gh, gk = self.g_hfe, self.g_kfe
        return np.array([[1.0 / gh, 0.0], [-1.0 / (gh * gk), 1.0 / gk]])

    @property
    def matrix_b_inv(self) -> np.ndarray:
        # Closed form keeps roundtrips exact to machine precision.
        gh, gk = self.g_hfe, self.g_kfe
        return np.array([[gh, 0.0], [1.0, gk]])


@dataclass(frozen=True)
class PlainRatio:
    """Degenerate 1x1 coupling for a joint on its own gearbox (abduction)."""

    ratio: float
    use_inverse_transpose_dual: bool = False

    def __post_init__(self) -> None:
        if not self.ratio > 0.0:
            raise ValueError(f"reduction ratio must be > 0, got {self.ratio}")

    @property
    def matrix_b(self) -> np.ndarray:
        return np.array([[1.0 / self.ratio]])

    @property
    def matrix_b_inv(self) -> np.ndarray:
        return np.array([[self.ratio]])


def _apply(matrix: np.ndarray, vec) -> np.ndarray:
    return np.einsum("ij,...j->...i", matrix, np.asarray(vec, dtype=float))


def joint_to_motor_velocity(c, w_joint) -> np.ndarray:
    """Motor velocities B^-1 @ w_joint; the KFE motor co-rotates with the hip."""
    return _apply(c.matrix_b_inv, w_joint)


def motor_to_joint_velocity(c, w_motor) -> np.ndarray:
    """Joint velocities B @ w_motor; exact inverse of joint_to_motor_velocity."""
    return _apply(c.matrix_b, w_motor)


def joint_to_motor_torque(c, t_joint) -> np.ndarray:
    """Motor torques for desired joint torques: B.T @ t_joint (power dual).

    With use_inverse_transpose_dual the printed inverse-transpose form is applied
    instead; it scales torques up by the ratio and breaks conservation.
    """
    matrix = c.matrix_b_inv.T if c.use_inverse_transpose_dual else c.matrix_b.T
    return _apply(matrix, t_joint)


def motor_to_joint_torque(c, t_motor) -> np.ndarray:
    """Joint torques produced by motor torques; inverse of joint_to_motor_torque."""
    matrix = c.matrix_b.T if c.use_inverse_transpose_dual else c.matrix_b_inv.T
    return _apply(matrix, t_motor)
