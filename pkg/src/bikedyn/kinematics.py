"""Configuration space, ground-contact constraints and velocity transfer.

Generalized coordinates are ``q = (x, y, z, psi, theta, phi, delta,
phi_r, phi_f)``: the position of the reference point D (intersection of
the steer axis with the horizontal line through the front wheel center in
the reference configuration), the 312 Euler angles (yaw, lean, pitch) of
the rear frame, the steer angle and the two wheel rotation angles.  Lean
``theta > 0`` tips the bicycle to the right, steer ``delta > 0`` turns
the handlebars to the left.

The three quasi-velocities are ``sigma_dot = (theta_dot, delta_dot,
phi_r_dot)``; all nine generalized velocities follow from them through
the 9x3 transfer matrix H(q) built here.

Most internal helpers accept complex angles: a complex step ``a + ih*da``
propagates exact directional derivatives through the whole kinematic
chain, which the dynamics assembly relies on.
"""

from dataclasses import dataclass, replace
from functools import lru_cache
import math

import numpy as np

from .errors import (DomainError, NoContactSolution, SingularContact,
                     SingularConstraintJacobian)

#: default margin keeping shapes away from the |angle| = pi/2 boundary (rad)
DOMAIN_MARGIN = 0.05

#: complex-step size; far below sqrt(eps), safe because no subtraction occurs
_CSTEP = 1e-100

_EZ = np.array([0.0, 0.0, 1.0])

# qdot component indices
IX, IY, IZ, IPSI, ITHETA, IPHI, IDELTA, IPHIR, IPHIF = range(9)
#: quasi-velocity coordinates within q
FREE_COORDS = (ITHETA, IDELTA, IPHIR)
#: constraint-determined coordinates within q
DEP_COORDS = (IX, IY, IZ, IPSI, IPHI, IPHIF)


@dataclass(frozen=True)
class ShapeCoords:
    """Lean and steer angles, the shape variables of the reduced model."""

    theta: float
    delta: float
    margin: float = DOMAIN_MARGIN

    def __post_init__(self):
        lim = math.pi / 2 - self.margin
        if not (abs(self.theta) < lim and abs(self.delta) < lim):
            raise DomainError(
                f"shape (theta={self.theta}, delta={self.delta}) outside "
                f"|angle| < pi/2 - {self.margin}")


@dataclass(frozen=True)
class Config:
    """Full configuration ``q`` of the bicycle."""

    x: float
    y: float
    z: float
    psi: float
    theta: float
    phi: float
    delta: float
    phi_r: float = 0.0
    phi_f: float = 0.0

    def __post_init__(self):
        if not abs(self.theta) < math.pi / 2:
            raise DomainError("lean beyond horizontal")

    def as_array(self):
        return np.array([self.x, self.y, self.z, self.psi, self.theta,
                         self.phi, self.delta, self.phi_r, self.phi_f])


@dataclass(frozen=True)
class QuasiVelocities:
    """Independent velocities (theta_dot, delta_dot, phi_r_dot)."""

    theta_dot: float
    delta_dot: float
    phi_r_dot: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise DomainError("quasi-velocities must be finite")

    def as_array(self):
        return np.array([self.theta_dot, self.delta_dot, self.phi_r_dot])


def _rot_z(a):
    ca, sa = np.cos(a), np.sin(a)
    one, zero = 1.0 + 0 * ca, 0 * ca
    return np.array([[ca, -sa, zero], [sa, ca, zero], [zero, zero, one]])


def _rot_x(a):
    ca, sa = np.cos(a), np.sin(a)
    one, zero = 1.0 + 0 * ca, 0 * ca
    return np.array([[one, zero, zero], [zero, ca, -sa], [zero, sa, ca]])


def _rot_y(a):
    ca, sa = np.cos(a), np.sin(a)
    one, zero = 1.0 + 0 * ca, 0 * ca
    return np.array([[ca, zero, sa], [zero, one, zero], [-sa, zero, ca]])


def _rot_axis(u, a):
    ca, sa = np.cos(a), np.sin(a)
    K = _skew(u)
    return ca * np.eye(3) + sa * K + (1.0 - ca) * np.outer(u, u)


def _skew(v):
    zero = 0 * v[0]
    return np.array([[zero, -v[2], v[1]],
                     [v[2], zero, -v[0]],
                     [-v[1], v[0], zero]])


class ReferenceGeometry:
    """Reference-configuration constants derived from the parameters.

    Positions are expressed relative to the reference point D; the steer
    axis direction ``u_s`` is fixed in both frames.
    """

    def __init__(self, params):
        p = params
        self.params = p
        self.u_s = np.array([-math.sin(p.lam), 0.0, math.cos(p.lam)])
        self.d_ref = np.array([p.w + p.c - p.R_f * math.tan(p.lam), 0.0,
                               p.R_f])
        self.r_rear_center = np.array([0.0, 0.0, p.R_r]) - self.d_ref
        self.r_rear_frame = np.array([p.x_b, 0.0, p.z_b]) - self.d_ref
        self.r_front_center = np.array([p.w, 0.0, p.R_f]) - self.d_ref
        self.r_front_frame = np.array([p.x_h, 0.0, p.z_h]) - self.d_ref
        tensors = p.inertia_tensors()
        self.I_rear_wheel = tensors["rear_wheel"]
        self.I_rear_frame = tensors["rear_frame"]
        self.I_front_frame = tensors["front_frame"]
        self.I_front_wheel = tensors["front_wheel"]


@lru_cache(maxsize=32)
def reference_geometry(params):
    """Cached reference geometry; params is immutable so this is safe."""
    return ReferenceGeometry(params)


class FrameKinematics:
    """Rotation matrices and wheel contact directions at given angles.

    Accepts complex angles for complex-step differentiation.
    """

    __slots__ = ("geo", "R_rear", "R_front", "j_rear", "j_front",
                 "sin_rear", "sin_front", "p_rear_center", "p_rear_frame",
                 "p_front_center", "p_front_frame", "d_rear", "d_front")

    def __init__(self, geo, psi, theta, phi, delta):
        self.geo = geo
        R_rear = _rot_z(psi) @ _rot_x(theta) @ _rot_y(phi)
        R_front = R_rear @ _rot_axis(geo.u_s, delta)
        self.R_rear = R_rear
        self.R_front = R_front
        self.j_rear = R_rear[:, 1]
        self.j_front = R_front[:, 1]
        self.sin_rear = np.sqrt(1.0 - self.j_rear[2] ** 2)
        self.sin_front = np.sqrt(1.0 - self.j_front[2] ** 2)
        self.p_rear_center = R_rear @ geo.r_rear_center
        self.p_rear_frame = R_rear @ geo.r_rear_frame
        self.p_front_center = R_front @ geo.r_front_center
        self.p_front_frame = R_front @ geo.r_front_frame
        # in-wheel-plane unit vectors from wheel center to lowest point
        ez = _EZ.astype(R_rear.dtype)
        self.d_rear = -(ez - self.j_rear[2] * self.j_rear) / self.sin_rear
        self.d_front = -(ez - self.j_front[2] * self.j_front) / self.sin_front

    def contact_heights(self):
        """Heights of both wheel lowest points, relative to point D."""
        p = self.geo.params
        h_rear = self.p_rear_center[2] - p.R_r * self.sin_rear
        h_front = self.p_front_center[2] - p.R_f * self.sin_front
        return h_rear, h_front


def _pitch_residual(geo, theta, delta, phi):
    fk = FrameKinematics(geo, 0.0, theta, phi, delta)
    h_rear, h_front = fk.contact_heights()
    return h_rear - h_front


def _solve_pitch(geo, theta, delta, guess=0.0, tol=1e-13, maxiter=50):
    """Newton iteration on the pitch angle, bisection fallback.

    Returns (phi, z) with z the height of point D above ground.
    """
    phi = guess
    for _ in range(maxiter):
        r = _pitch_residual(geo, theta, delta, phi)
        dr = _pitch_residual(geo, theta, delta,
                             phi + 1j * _CSTEP).imag / _CSTEP
        if dr == 0.0:
            break
        step = r / dr
        phi -= step
        if abs(phi) > 1.2:
            break
        if abs(step) < tol:
            fk = FrameKinematics(geo, 0.0, theta, phi, delta)
            h_rear, _ = fk.contact_heights()
            return phi, -h_rear
    # Newton left the trust region or stalled: bisect on [-1.3, 1.3]
    lo, hi = -1.3, 1.3
    r_lo = _pitch_residual(geo, theta, delta, lo)
    r_hi = _pitch_residual(geo, theta, delta, hi)
    if not np.isfinite(r_lo) or not np.isfinite(r_hi) or r_lo * r_hi > 0:
        raise NoContactSolution(
            f"no pitch solution for theta={theta}, delta={delta}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r_mid = _pitch_residual(geo, theta, delta, mid)
        if r_lo * r_mid <= 0:
            hi = mid
        else:
            lo, r_lo = mid, r_mid
        if hi - lo < 1e-15:
            break
    phi = 0.5 * (lo + hi)
    fk = FrameKinematics(geo, 0.0, theta, phi, delta)
    h_rear, _ = fk.contact_heights()
    return phi, -h_rear


def solve_holonomic(params, shape, pitch_guess=0.0):
    """Solve the two wheel-contact constraints for (z, phi).

    Parameters
    ----------
    params : BicycleParams
    shape : ShapeCoords
        Lean and steer angles.
    pitch_guess : float, optional
        Warm start for the pitch Newton iteration.

    Returns
    -------
    z : float
        Height of point D above the ground.
    phi : float
        Rear-frame pitch, the root continuous with phi(0, 0) = 0.
    """
    geo = reference_geometry(params)
    phi, z = _solve_pitch(geo, shape.theta, shape.delta, guess=pitch_guess)
    return z, phi


def config_from_shape(params, shape, psi=0.0, x=0.0, y=0.0, phi_r=0.0,
                      phi_f=0.0, pitch_guess=0.0):
    """Complete a shape to a constraint-consistent :class:`Config`."""
    z, phi = solve_holonomic(params, shape, pitch_guess=pitch_guess)
    return Config(x=x, y=y, z=z, psi=psi, theta=shape.theta, phi=phi,
                  delta=shape.delta, phi_r=phi_r, phi_f=phi_f)


def holonomic_partials(params, shape):
    """Partial derivatives of the contact solution.

    Returns (dz/dtheta, dz/ddelta, dphi/dtheta, dphi/ddelta), obtained
    from the implicit-function relation of the two contact-height
    residuals in the unknowns (z, phi).
    """
    geo = reference_geometry(params)
    theta, delta = shape.theta, shape.delta
    z, phi = solve_holonomic(params, shape)

    def residuals(th, de, ph, zz):
        fk = FrameKinematics(geo, 0.0, th, ph, de)
        h_rear, h_front = fk.contact_heights()
        return np.array([zz + h_rear, zz + h_front])

    h = _CSTEP
    # Jacobian wrt unknowns (z, phi) and shape (theta, delta)
    d_z = residuals(theta, delta, phi, z + 1j * h).imag / h
    d_phi = residuals(theta, delta, phi + 1j * h, z).imag / h
    d_theta = residuals(theta + 1j * h, delta, phi, z).imag / h
    d_delta = residuals(theta, delta + 1j * h, phi, z).imag / h
    J_u = np.column_stack([d_z, d_phi])
    J_s = np.column_stack([d_theta, d_delta])
    if abs(np.linalg.det(J_u)) < 1e-12:
        raise SingularConstraintJacobian(
            f"contact implicit-function system singular at {shape}")
    sens = -np.linalg.solve(J_u, J_s)
    return sens[0, 0], sens[0, 1], sens[1, 0], sens[1, 1]


def _body_jacobians(geo, psi, theta, phi, delta):
    """Velocity Jacobians of all bodies with respect to qdot.

    Returns a list of (mass, Jv, Jw, I_world) tuples for rear wheel,
    rear frame, front frame, front wheel, plus the 6x9 matrix of the
    contact-point velocity constraints.
    """
    p = geo.params
    fk = FrameKinematics(geo, psi, theta, phi, delta)
    dtype = fk.R_rear.dtype
    ez = _EZ.astype(dtype)
    n_theta = _rot_z(psi) @ np.array([1.0, 0.0, 0.0])
    n_phi = (_rot_z(psi) @ _rot_x(theta)) @ np.array([0.0, 1.0, 0.0])
    u_world = fk.R_rear @ geo.u_s

    Jw_rear_frame = np.zeros((3, 9), dtype=dtype)
    Jw_rear_frame[:, IPSI] = ez
    Jw_rear_frame[:, ITHETA] = n_theta
    Jw_rear_frame[:, IPHI] = n_phi
    Jw_front_frame = Jw_rear_frame.copy()
    Jw_front_frame[:, IDELTA] = u_world
    Jw_rear_wheel = Jw_rear_frame.copy()
    Jw_rear_wheel[:, IPHIR] = fk.j_rear
    Jw_front_wheel = Jw_front_frame.copy()
    Jw_front_wheel[:, IPHIF] = fk.j_front

    def jv(point, Jw):
        J = np.zeros((3, 9), dtype=dtype)
        J[0, IX] = J[1, IY] = J[2, IZ] = 1.0
        return J - _skew(point) @ Jw

    R_b, R_h = fk.R_rear, fk.R_front
    bodies = [
        (p.m_r, jv(fk.p_rear_center, Jw_rear_frame), Jw_rear_wheel,
         R_b @ geo.I_rear_wheel @ R_b.T),
        (p.m_b, jv(fk.p_rear_frame, Jw_rear_frame), Jw_rear_frame,
         R_b @ geo.I_rear_frame @ R_b.T),
        (p.m_h, jv(fk.p_front_frame, Jw_front_frame), Jw_front_frame,
         R_h @ geo.I_front_frame @ R_h.T),
        (p.m_f, jv(fk.p_front_center, Jw_front_frame), Jw_front_wheel,
         R_h @ geo.I_front_wheel @ R_h.T),
    ]

    A = np.empty((6, 9), dtype=dtype)
    A[:3] = (jv(fk.p_rear_center, Jw_rear_frame)
             - _skew(p.R_r * fk.d_rear) @ Jw_rear_wheel)
    A[3:] = (jv(fk.p_front_center, Jw_front_frame)
             - _skew(p.R_f * fk.d_front) @ Jw_front_wheel)
    return bodies, A, fk


def constraint_matrix(params, config):
    """The 6x9 velocity-constraint matrix A(q): A qdot = 0.

    Rows are the three velocity components of the rear and front wheel
    material contact points.
    """
    geo = reference_geometry(params)
    _, A, _ = _body_jacobians(geo, config.psi, config.theta, config.phi,
                              config.delta)
    return A


def _transfer_from_A(A):
    H = np.zeros((9, 3), dtype=A.dtype)
    dep = list(DEP_COORDS)
    free = list(FREE_COORDS)
    try:
        H[dep, :] = np.linalg.solve(A[:, dep], -A[:, free])
    except np.linalg.LinAlgError as exc:
        raise SingularContact("rolling-constraint system is rank "
                              "deficient") from exc
    H[ITHETA, 0] = 1.0
    H[IDELTA, 1] = 1.0
    H[IPHIR, 2] = 1.0
    return H


def transfer_matrix(params, config):
    """The 9x3 velocity transfer matrix H(q) with qdot = H sigma_dot.

    The rows for theta, delta and phi_r carry the 3x3 identity pattern;
    the remaining six rows solve the contact-point velocity constraints.
    """
    return _transfer_from_A(constraint_matrix(params, config))


def contact_points(params, config):
    """Ground-plane positions of the rear and front contact points.

    Returns ((x_rear, y_rear), (x_front, y_front)) in the inertial frame.
    """
    geo = reference_geometry(params)
    fk = FrameKinematics(geo, config.psi, config.theta, config.phi,
                         config.delta)
    d = np.array([config.x, config.y, config.z])
    rear = d + fk.p_rear_center + params.R_r * fk.d_rear
    front = d + fk.p_front_center + params.R_f * fk.d_front
    return (rear[0], rear[1]), (front[0], front[1])
