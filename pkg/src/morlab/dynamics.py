"""Batched planar rigid-body dynamics for a point-foot quadruped.

Sagittal-plane model with 11 generalized coordinates per robot:

    q = [x, z, pitch, hfe_0, kfe_0, hfe_1, kfe_1, ..., hfe_3, kfe_3]

Legs are indexed RR, RL, FR, FL.  Segment direction for an absolute angle
phi (measured from straight down, positive with pitch) is
u(phi) = (sin phi, -cos phi), so a zero joint configuration hangs the legs
vertically.  All public functions are batched: q and v carry arbitrary
leading axes with the coordinate axis last.

The mass model is two point masses per leg (thigh and calf centers) plus
segment pitch inertias and the torso mass/inertia with an optional center
of mass offset.  Mass matrix, bias forces, and gravity are assembled from
point Jacobians; for any point p the partials are the rotated moment arms

    dp/dpitch = S (p - base),  dp/dhfe = S (p - hip),  dp/dkfe = S (p - knee)

with S the quarter-turn matrix, and the bias acceleration of a point on a
segment of absolute angle phi is the parent's bias minus phid^2 times the
segment vector.

Integration is a velocity kick followed by a position drift.  In free
flight the drift uses the average of old and new velocity, which makes
ballistic trajectories exact for constant gravity; with active contacts
the drift uses the post-impulse velocity so resolved contacts do not creep
into the ground.  Ground contact (flat ground at z = 0) is resolved at the
velocity level by projected Gauss-Seidel over per-foot normal and friction
impulses: restitution 0, Coulomb cone |lam_t| <= mu * lam_n, speculative
activation h + dt * v_n <= 0 with landing target v_n >= -max(h, 0)/dt, and
warm starting from the previous substep.  A mass-weighted position
projection afterwards keeps penetration within tolerance without injecting
velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PlanarParams",
    "Kinematics",
    "SubstepResult",
    "forward_kinematics",
    "foot_heights",
    "foot_jacobian",
    "dynamics_terms",
    "step_dynamics",
    "mechanical_energy",
]

NUM_LEGS = 4
NUM_COORDS = 3 + 2 * NUM_LEGS

# Generalized-coordinate slots touched by each leg: base (x, z, pitch) plus
# the leg's own (hfe, kfe) pair.
_LEG_COORDS = np.array([[0, 1, 2, 3 + 2 * i, 4 + 2 * i] for i in range(NUM_LEGS)])


def _perp(p):
    """Quarter-turn rotation S @ p for (..., 2) arrays: (x, z) -> (-z, x)."""
    return np.stack((-p[..., 1], p[..., 0]), axis=-1)


def _unit(phi):
    """Segment direction u(phi) = (sin phi, -cos phi), shape (..., 2)."""
    return np.stack((np.sin(phi), -np.cos(phi)), axis=-1)


@dataclass(eq=False)
class PlanarParams:
    """Plant constants; torso fields may be per-robot arrays for batching."""

    torso_mass: np.ndarray = 45.0            # [kg], scalar or (...,)
    torso_inertia: np.ndarray = 1.5          # pitch inertia [kg*m^2]
    torso_com: np.ndarray = (0.0, 0.0)       # body-frame offset [m], (..., 2)
    hip_x: tuple = (-0.22, -0.22, 0.22, 0.22)  # body-frame hip offsets [m]
    thigh_length: float = 0.25               # [m]
    calf_length: float = 0.25                # [m]
    thigh_mass: float = 2.0                  # [kg]
    calf_mass: float = 0.7                   # [kg]
    thigh_inertia: float = 0.012             # about segment CoM [kg*m^2]
    calf_inertia: float = 0.004              # [kg*m^2]
    friction: float = 0.8
    gravity: float = 9.81                    # [m/s^2]
    penetration_tol: float = 1e-6            # [m]

    def __post_init__(self):
        self.torso_mass = np.asarray(self.torso_mass, dtype=float)
        self.torso_inertia = np.asarray(self.torso_inertia, dtype=float)
        self.torso_com = np.asarray(self.torso_com, dtype=float)
        if np.any(self.torso_mass <= 0) or np.any(self.torso_inertia <= 0):
            raise ValueError("torso mass and inertia must be positive")
        for name in ("thigh_length", "calf_length", "thigh_mass", "calf_mass",
                     "thigh_inertia", "calf_inertia"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Kinematics:
    """World-frame points, (..., legs, 2) unless noted."""

    base: np.ndarray        # (..., 2)
    torso_com: np.ndarray   # (..., 2)
    hip: np.ndarray
    knee: np.ndarray
    foot: np.ndarray
    thigh_com: np.ndarray
    calf_com: np.ndarray
    phi_thigh: np.ndarray   # absolute segment angles, (..., legs)
    phi_calf: np.ndarray


@dataclass(frozen=True)
class SubstepResult:
    """Contact bookkeeping for one substep."""

    contacts: np.ndarray      # (..., legs) bool, foot height <= tolerance
    impulses: np.ndarray      # (..., legs, 2) tangential/normal [N*s]
    active: np.ndarray        # (..., legs) bool, solver-active this substep
    foot_height: np.ndarray   # (..., legs) end-of-step [m]
    fault: np.ndarray         # (...,) bool, non-finite state produced


def forward_kinematics(p: PlanarParams, q) -> Kinematics:
    q = np.asarray(q, dtype=float)
    base = q[..., 0:2]
    pitch = q[..., 2]
    c, s = np.cos(pitch), np.sin(pitch)
    body_x = np.stack((c, s), axis=-1)          # body x-axis in world
    body_z = np.stack((-s, c), axis=-1)
    com = np.broadcast_to(p.torso_com, base.shape)
    torso_com = (base + com[..., 0:1] * body_x + com[..., 1:2] * body_z)

    hip_x = np.asarray(p.hip_x, dtype=float)
    hip = base[..., None, :] + hip_x[:, None] * body_x[..., None, :]
    phi_t = pitch[..., None] + q[..., 3::2]
    phi_c = phi_t + q[..., 4::2]
    knee = hip + p.thigh_length * _unit(phi_t)
    foot = knee + p.calf_length * _unit(phi_c)
    thigh_com = hip + 0.5 * p.thigh_length * _unit(phi_t)
    calf_com = knee + 0.5 * p.calf_length * _unit(phi_c)
    return Kinematics(base=base, torso_com=torso_com, hip=hip, knee=knee,
                      foot=foot, thigh_com=thigh_com, calf_com=calf_com,
                      phi_thigh=phi_t, phi_calf=phi_c)


def foot_heights(p: PlanarParams, q) -> np.ndarray:
    """Foot z only, (..., legs); cheaper than full kinematics."""
    q = np.asarray(q, dtype=float)
    pitch = q[..., 2]
    phi_t = pitch[..., None] + q[..., 3::2]
    phi_c = phi_t + q[..., 4::2]
    hip_z = q[..., 1:2] + np.asarray(p.hip_x, dtype=float) * np.sin(pitch)[..., None]
    return (hip_z - p.thigh_length * np.cos(phi_t)
            - p.calf_length * np.cos(phi_c))


def _leg_point_jacobians(fk: Kinematics) -> np.ndarray:
    """Jacobians of thigh/calf CoM points, (..., legs, 2 points, 2, 5).

    Columns follow the leg coordinate slots [x, z, pitch, hfe, kfe].
    """
    pts = np.stack((fk.thigh_com, fk.calf_com), axis=-2)  # (..., legs, P, 2)
    base = fk.base[..., None, None, :]
    hip = fk.hip[..., None, :]
    knee = fk.knee[..., None, :]
    shape = pts.shape[:-1] + (2, 5)
    jac = np.zeros(shape, dtype=float)
    jac[..., 0, 0] = 1.0
    jac[..., 1, 1] = 1.0
    jac[..., 2] = _perp(pts - base)
    jac[..., 3] = _perp(pts - hip)
    # Only the calf point depends on the knee joint.
    jac[..., 1, :, 4] = _perp(pts[..., 1, :] - knee[..., 0, :])
    return jac


def foot_jacobian(p: PlanarParams, fk: Kinematics) -> np.ndarray:
    """d(foot)/dq, (..., legs, 2, 11); rows are world (x, z)."""
    batch = fk.foot.shape[:-2]
    jac = np.zeros(batch + (NUM_LEGS, 2, NUM_COORDS), dtype=float)
    jac[..., 0, 0] = 1.0
    jac[..., 1, 1] = 1.0
    jac[..., 2] = _perp(fk.foot - fk.base[..., None, :])
    d_hip = _perp(fk.foot - fk.hip)
    d_knee = _perp(fk.foot - fk.knee)
    for leg in range(NUM_LEGS):
        jac[..., leg, :, 3 + 2 * leg] = d_hip[..., leg, :]
        jac[..., leg, :, 4 + 2 * leg] = d_knee[..., leg, :]
    return jac


def dynamics_terms(p: PlanarParams, q, v):
    """Mass matrix and passive generalized force (gravity minus bias).

    Returns (M, rhs, fk) with M (..., 11, 11) and rhs (..., 11) such that
    M qdd = rhs + applied generalized forces.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    fk = forward_kinematics(p, q)
    batch = q.shape[:-1]

    jac = _leg_point_jacobians(fk)                       # (..., L, P, 2, 5)
    masses = np.array([p.thigh_mass, p.calf_mass])

    mass_leg = np.einsum("p,...lpci,...lpcj->...lij", masses, jac, jac)
    # Segment pitch inertias: absolute angles are linear in the coordinates,
    # so the angular Jacobians are constant rows.
    a_thigh = np.array([0.0, 0.0, 1.0, 1.0, 0.0])
    a_calf = np.array([0.0, 0.0, 1.0, 1.0, 1.0])
    mass_leg = mass_leg + (p.thigh_inertia * np.outer(a_thigh, a_thigh)
                           + p.calf_inertia * np.outer(a_calf, a_calf))

    # Bias (centripetal) accelerations of the leg points at qdd = 0.
    pitch_rate = v[..., 2]
    dphi_t = pitch_rate[..., None] + v[..., 3::2]
    dphi_c = dphi_t + v[..., 4::2]
    a_hip = -pitch_rate[..., None, None] ** 2 * (fk.hip - fk.base[..., None, :])
    a_thigh_com = a_hip - dphi_t[..., None] ** 2 * (fk.thigh_com - fk.hip)
    a_knee = a_hip - dphi_t[..., None] ** 2 * (fk.knee - fk.hip)
    a_calf_com = a_knee - dphi_c[..., None] ** 2 * (fk.calf_com - fk.knee)
    a_pts = np.stack((a_thigh_com, a_calf_com), axis=-2)  # (..., L, P, 2)

    bias_leg = np.einsum("p,...lpci,...lpc->...li", masses, jac, a_pts)
    grav_leg = -p.gravity * np.einsum("p,...lpi->...li", masses, jac[..., 1, :])

    mass = np.zeros(batch + (NUM_COORDS, NUM_COORDS), dtype=float)
    rhs = np.zeros(batch + (NUM_COORDS,), dtype=float)
    for leg in range(NUM_LEGS):
        idx = _LEG_COORDS[leg]
        mass[..., idx[:, None], idx[None, :]] += mass_leg[..., leg, :, :]
        rhs[..., idx] += grav_leg[..., leg, :] - bias_leg[..., leg, :]

    # Torso: point mass at its CoM plus pitch inertia.
    arm = fk.torso_com - fk.base                         # (..., 2)
    perp_arm = _perp(arm)
    m_b = p.torso_mass
    mass[..., 0, 0] += m_b
    mass[..., 1, 1] += m_b
    mass[..., 2, 2] += p.torso_inertia + m_b * np.sum(arm * arm, axis=-1)
    mass[..., 0, 2] += m_b * perp_arm[..., 0]
    mass[..., 2, 0] += m_b * perp_arm[..., 0]
    mass[..., 1, 2] += m_b * perp_arm[..., 1]
    mass[..., 2, 1] += m_b * perp_arm[..., 1]

    a_torso = -pitch_rate[..., None] ** 2 * arm
    rhs[..., 0] += m_b * (-a_torso[..., 0])
    rhs[..., 1] += m_b * (-p.gravity - a_torso[..., 1])
    rhs[..., 2] += -m_b * p.gravity * arm[..., 0] - m_b * np.sum(
        perp_arm * a_torso, axis=-1)
    return mass, rhs, fk


def _pgs_contact(w, vc, lam, active, target_n, friction, iters):
    """Projected Gauss-Seidel over per-foot (tangent, normal) impulse pairs.

    w: Delassus matrix (..., 8, 8); vc: contact-space velocities (..., 8);
    lam: warm-start impulses (..., legs, 2); rows are ordered per foot as
    [tangent, normal].  Mutates nothing; returns (vc, lam).
    """
    act = active.astype(float)
    lam = lam * act[..., None]
    # Warm-start kick: fold retained impulses into the velocity once.
    vc = vc + np.einsum("...rk,...k->...r", w,
                        lam.reshape(lam.shape[:-2] + (8,)))
    for _ in range(iters):
        for leg in range(NUM_LEGS):
            it, inorm = 2 * leg, 2 * leg + 1
            mask = act[..., leg]
            w_nn = np.maximum(w[..., inorm, inorm], 1e-12)
            delta = mask * ((target_n[..., leg] - vc[..., inorm]) / w_nn)
            new_n = np.maximum(lam[..., leg, 1] + delta, 0.0)
            d_n = new_n - lam[..., leg, 1]
            lam[..., leg, 1] = new_n
            vc = vc + w[..., inorm] * d_n[..., None]

            w_tt = np.maximum(w[..., it, it], 1e-12)
            delta = mask * (-vc[..., it] / w_tt)
            bound = friction * lam[..., leg, 1]
            new_t = np.clip(lam[..., leg, 0] + delta, -bound, bound)
            d_t = new_t - lam[..., leg, 0]
            lam[..., leg, 0] = new_t
            vc = vc + w[..., it] * d_t[..., None]
    return vc, lam


def step_dynamics(p: PlanarParams, q, v, joint_torque, dt, warm_impulses=None,
                  pgs_iters=16, projection_iters=8):
    """One physics substep.  Returns (q_next, v_next, SubstepResult).

    joint_torque is (..., 8) in leg order; dt in seconds.  warm_impulses,
    if given, is the previous substep's (..., legs, 2) impulse pairs.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    joint_torque = np.asarray(joint_torque, dtype=float)
    batch = q.shape[:-1]

    mass, rhs, fk = dynamics_terms(p, q, v)
    applied = np.zeros(batch + (NUM_COORDS,), dtype=float)
    applied[..., 3:] = joint_torque

    jac_f = foot_jacobian(p, fk)                          # (..., L, 2, 11)
    jac_rows = jac_f.reshape(batch + (2 * NUM_LEGS, NUM_COORDS))
    # One factorization serves the free acceleration and the contact columns.
    stacked = np.concatenate(
        ((rhs + applied)[..., None], np.swapaxes(jac_rows, -1, -2)), axis=-1)
    solved = np.linalg.solve(mass, stacked)
    v_free = v + dt * solved[..., 0]
    minv_jt = solved[..., 1:]                             # (..., 11, 8)

    h0 = fk.foot[..., 1]
    vn_free = np.einsum("...li,...i->...l", jac_f[..., 1, :], v_free)
    active = h0 + dt * vn_free <= 0.0

    lam = (np.zeros(batch + (NUM_LEGS, 2)) if warm_impulses is None
           else np.array(warm_impulses, dtype=float))
    if np.any(active):
        w = np.einsum("...ri,...ik->...rk", jac_rows, minv_jt)
        vc = np.einsum("...ri,...i->...r", jac_rows, v_free)
        # Speculative landing: allow approach that just reaches the ground.
        target_n = np.where(active, -np.maximum(h0, 0.0) / dt, 0.0)
        _, lam = _pgs_contact(w, vc, lam, active, target_n, p.friction,
                              pgs_iters)
        v_new = v_free + np.einsum(
            "...ik,...k->...i", minv_jt, lam.reshape(batch + (8,)))
    else:
        lam = np.zeros_like(lam)
        v_new = v_free

    # Average-velocity drift is exact under constant gravity; post-impulse
    # drift while in contact avoids re-penetrating with the pre-impulse half.
    any_contact = np.any(active, axis=-1)
    drift = np.where(any_contact[..., None], v_new, 0.5 * (v + v_new))
    q_new = q + dt * drift

    # Mass-weighted penetration projection; velocities untouched.  The feet
    # couple through the base, so solve the active normal block jointly, and
    # relinearize each sweep: fast substeps can leave corrections large
    # enough that a stale Jacobian stalls short of the tolerance.
    for _ in range(projection_iters):
        fk_proj = forward_kinematics(p, q_new)
        depth = np.where(fk_proj.foot[..., 1] < -1e-9,
                         -fk_proj.foot[..., 1], 0.0)
        if not np.any(depth > 0.0):
            break
        pen = depth > 0.0
        jac_n = foot_jacobian(p, fk_proj)[..., 1, :]       # (..., L, 11)
        cols = np.linalg.solve(mass, np.swapaxes(jac_n, -1, -2))
        w_nn = np.einsum("...li,...ik->...lk", jac_n, cols)
        w_sys = np.where(pen[..., :, None] & pen[..., None, :], w_nn,
                         np.eye(NUM_LEGS))
        try:
            sigma = np.linalg.solve(w_sys, depth[..., None])[..., 0]
        except np.linalg.LinAlgError:
            # Kinematically singular feet (straight or fully folded legs,
            # or the two same-hip legs exactly aligned) make the active
            # block rank-deficient; the minimum-norm correction fixes what
            # normal motion can reach and leaves the rest to fault checks.
            sigma = (np.linalg.pinv(w_sys) @ depth[..., None])[..., 0]
        sigma = np.maximum(sigma, 0.0) * pen
        q_new = q_new + np.einsum("...il,...l->...i", cols, sigma)

    h_end = foot_heights(p, q_new)
    contacts = h_end <= p.penetration_tol
    fault = ~(np.all(np.isfinite(q_new), axis=-1)
              & np.all(np.isfinite(v_new), axis=-1))
    return q_new, v_new, SubstepResult(contacts=contacts, impulses=lam,
                                       active=active, foot_height=h_end,
                                       fault=fault)


def mechanical_energy(p: PlanarParams, q, v) -> np.ndarray:
    """Kinetic plus gravitational potential energy, (...,)."""
    mass, _, fk = dynamics_terms(p, q, v)
    kinetic = 0.5 * np.einsum("...i,...ij,...j->...", v, mass, v)
    heights = (p.torso_mass * fk.torso_com[..., 1]
               + p.thigh_mass * np.sum(fk.thigh_com[..., 1], axis=-1)
               + p.calf_mass * np.sum(fk.calf_com[..., 1], axis=-1))
    return kinetic + p.gravity * heights
