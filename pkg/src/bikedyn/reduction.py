"""Projection of the full multibody dynamics onto the quasi-velocities.

The reduced equations of motion are

    m_ij(theta, delta) sigma_ddot^j + c_ijk(theta, delta) sigma_dot^j
        sigma_dot^k = P_i(theta, delta) + tau_i

with the generalized inertia ``m``, the velocity-quadratic coefficients
``c`` (stored symmetrized in the last two indices) and the gravity force
``P``.  All three are assembled numerically: the full 9-coordinate
Newton-Euler terms are projected through the transfer matrix H(q), and
the quadratic coefficients are extracted from the velocity bias by
polarization.  Directional derivatives of the kinematic chain are
propagated with complex steps, so the assembly is exact to roundoff.
"""

from dataclasses import dataclass

import numpy as np

from . import kinematics as kin
from .errors import DomainError, NumericalInconsistency
from .kinematics import (FREE_COORDS, IDELTA, IPHI, IPSI, ITHETA,
                         ShapeCoords, _body_jacobians, _transfer_from_A,
                         reference_geometry, solve_holonomic)

_CSTEP = kin._CSTEP


@dataclass(frozen=True)
class ReducedCoefficients:
    """Shape-dependent tensors of the reduced equations of motion."""

    m: np.ndarray      # (3, 3) generalized inertia
    c: np.ndarray      # (3, 3, 3), symmetric in the last two indices
    P: np.ndarray      # (3,) generalized gravity force

    def bias(self, sigma_dot):
        """The quadratic velocity term c_ijk sigma_dot^j sigma_dot^k."""
        return np.einsum("ijk,j,k->i", self.c, sigma_dot, sigma_dot)


@dataclass(frozen=True)
class CoefficientPartials:
    """Shape derivatives of the coefficients entering the linearizations."""

    dc133_dtheta: float
    dc133_ddelta: float
    dP1_dtheta: float
    dP1_ddelta: float
    c123_plus_c132: float
    c113_plus_c131: float


class _Assembly:
    """Projected body Jacobians at one constrained configuration."""

    __slots__ = ("bodies", "H", "masses", "V", "W", "I_world")

    def __init__(self, geo, psi, theta, phi, delta):
        bodies, A, _ = _body_jacobians(geo, psi, theta, phi, delta)
        H = _transfer_from_A(A)
        self.H = H
        self.masses = [b[0] for b in bodies]
        self.V = [b[1] @ H for b in bodies]
        self.W = [b[2] @ H for b in bodies]
        self.I_world = [b[3] for b in bodies]


def _reduced_assembly(params, shape, pitch_guess=0.0):
    geo = reference_geometry(params)
    z, phi = solve_holonomic(params, shape, pitch_guess=pitch_guess)
    asm = _Assembly(geo, 0.0, shape.theta, phi, shape.delta)
    return geo, phi, z, asm


def _mass_and_gravity(params, asm):
    m = np.zeros((3, 3))
    P = np.zeros(3)
    for mk, V, W, Iw in zip(asm.masses, asm.V, asm.W, asm.I_world):
        m += mk * (V.T @ V) + W.T @ Iw @ W
        P -= mk * params.g * V[2, :]
    return m, P


def _bias(geo, theta, phi, delta, asm, sigma_dot):
    """Velocity-quadratic generalized force at the given quasi-velocity.

    The centripetal/Coriolis part needs the time derivative of the body
    velocity maps along the constrained flow; it is obtained by a complex
    step of the whole kinematic chain in the flow direction.
    """
    qdot = asm.H @ sigma_dot
    h = _CSTEP
    asm_c = _Assembly(geo, 1j * h * qdot[IPSI], theta + 1j * h * qdot[ITHETA],
                      phi + 1j * h * qdot[IPHI],
                      delta + 1j * h * qdot[IDELTA])
    b = np.zeros(3)
    for mk, V, W, Iw, V_c, W_c in zip(asm.masses, asm.V, asm.W,
                                      asm.I_world, asm_c.V, asm_c.W):
        accel = (V_c @ sigma_dot).imag / h
        ang_accel = (W_c @ sigma_dot).imag / h
        omega = W @ sigma_dot
        b += V.T @ (mk * accel)
        b += W.T @ (Iw @ ang_accel + np.cross(omega, Iw @ omega))
    return b


def reduced_coeffs(params, shape, pitch_guess=0.0):
    """Assemble the :class:`ReducedCoefficients` at a shape point.

    Parameters
    ----------
    params : BicycleParams
    shape : ShapeCoords
    pitch_guess : float, optional
        Warm start for the contact solve.

    Notes
    -----
    The quadratic coefficients are recovered by polarization: the bias is
    evaluated at the three unit quasi-velocity vectors and the three
    pairwise sums, which determines the six symmetric components per
    equation.
    """
    geo, phi, _, asm = _reduced_assembly(params, shape, pitch_guess)
    m, P = _mass_and_gravity(params, asm)
    theta, delta = shape.theta, shape.delta

    c = np.zeros((3, 3, 3))
    unit = np.eye(3)
    diag = [_bias(geo, theta, phi, delta, asm, unit[j]) for j in range(3)]
    for j in range(3):
        c[:, j, j] = diag[j]
    for j in range(3):
        for k in range(j + 1, 3):
            b_jk = _bias(geo, theta, phi, delta, asm, unit[j] + unit[k])
            cross = 0.5 * (b_jk - diag[j] - diag[k])
            c[:, j, k] = cross
            c[:, k, j] = cross
    return ReducedCoefficients(m=m, c=c, P=P)


def reduced_dynamics_terms(params, shape, sigma_dot, pitch_guess=0.0):
    """Fast path for right-hand sides: (m, bias(sigma_dot), P, phi, z).

    Avoids the six-fold polarization when only the bias at one actual
    quasi-velocity vector is needed.
    """
    geo, phi, z, asm = _reduced_assembly(params, shape, pitch_guess)
    m, P = _mass_and_gravity(params, asm)
    b = _bias(geo, shape.theta, phi, shape.delta, asm, sigma_dot)
    return m, b, P, phi, z


def full_mass_matrix(params, config):
    """The 9x9 generalized mass matrix of the unconstrained system."""
    geo = reference_geometry(params)
    bodies, _, _ = _body_jacobians(geo, config.psi, config.theta,
                                   config.phi, config.delta)
    M = np.zeros((9, 9))
    for mk, Jv, Jw, Iw in bodies:
        M += mk * (Jv.T @ Jv) + Jw.T @ Iw @ Jw
    return M


def full_bias_gravity(params, config, qdot):
    """Velocity bias and gravity force of the unconstrained 9-coordinate
    system, such that ``M qddot + bias = gravity + applied``."""
    geo = reference_geometry(params)
    bodies, _, _ = _body_jacobians(geo, config.psi, config.theta,
                                   config.phi, config.delta)
    h = _CSTEP
    bodies_c, _, _ = _body_jacobians(
        geo, config.psi + 1j * h * qdot[IPSI],
        config.theta + 1j * h * qdot[ITHETA],
        config.phi + 1j * h * qdot[IPHI],
        config.delta + 1j * h * qdot[IDELTA])
    bias = np.zeros(9)
    grav = np.zeros(9)
    for (mk, Jv, Jw, Iw), (_, Jv_c, Jw_c, _) in zip(bodies, bodies_c):
        accel = (Jv_c @ qdot).imag / h
        ang_accel = (Jw_c @ qdot).imag / h
        omega = Jw @ qdot
        bias += Jv.T @ (mk * accel)
        bias += Jw.T @ (Iw @ ang_accel + np.cross(omega, Iw @ omega))
        grav -= mk * params.g * Jv[2, :]
    return bias, grav


def potential_energy(params, shape, pitch_guess=0.0):
    """Total gravitational potential energy sum(m_k g z_k) at a shape."""
    geo = reference_geometry(params)
    z, phi = solve_holonomic(params, shape, pitch_guess=pitch_guess)
    fk = kin.FrameKinematics(geo, 0.0, shape.theta, phi, shape.delta)
    heights = [
        (params.m_r, z + fk.p_rear_center[2]),
        (params.m_b, z + fk.p_rear_frame[2]),
        (params.m_h, z + fk.p_front_frame[2]),
        (params.m_f, z + fk.p_front_center[2]),
    ]
    return params.g * sum(mk * zk for mk, zk in heights)


def total_energy(params, shape, sigma_dot, pitch_guess=0.0):
    """Kinetic plus potential energy of the constrained system."""
    sigma_dot = np.asarray(sigma_dot, dtype=float)
    geo, phi, z, asm = _reduced_assembly(params, shape, pitch_guess)
    m, _ = _mass_and_gravity(params, asm)
    ke = 0.5 * sigma_dot @ m @ sigma_dot
    return ke + potential_energy(params, shape, pitch_guess=phi)


_FD_STEP = 1e-6
_RICHARDSON_STEP = 1e-5
_RICHARDSON_RTOL = 1e-4
_RICHARDSON_ATOL = 1e-6


def _c133_P1(params, theta, delta):
    coeffs = reduced_coeffs(params, ShapeCoords(theta, delta))
    return np.array([coeffs.c[0, 2, 2], coeffs.P[0]])


def coefficient_partials(params, shape, check=True):
    """Shape derivatives of c_133 and P_1 plus the symmetric sums of the
    mixed quadratic coefficients, all at the given shape point.

    Central differences with step 1e-6 rad; a Richardson consistency
    check against step 1e-5 guards against differencing noise.

    Raises
    ------
    DomainError
        If the shape is too close to the domain boundary for the stencil.
    NumericalInconsistency
        If the two step sizes disagree beyond tolerance.
    """
    theta, delta = shape.theta, shape.delta
    lim = np.pi / 2 - shape.margin
    if max(abs(theta), abs(delta)) + _RICHARDSON_STEP >= lim:
        raise DomainError("shape too close to the domain boundary for "
                          "finite-difference stencil")

    def central(h):
        d_theta = (_c133_P1(params, theta + h, delta)
                   - _c133_P1(params, theta - h, delta)) / (2 * h)
        d_delta = (_c133_P1(params, theta, delta + h)
                   - _c133_P1(params, theta, delta - h)) / (2 * h)
        return np.concatenate([d_theta, d_delta])

    fine = central(_FD_STEP)
    if check:
        coarse = central(_RICHARDSON_STEP)
        err = np.abs(fine - coarse)
        tol = _RICHARDSON_ATOL + _RICHARDSON_RTOL * np.abs(fine)
        if np.any(err > tol):
            raise NumericalInconsistency(
                f"coefficient partials at {shape} failed the step-size "
                f"cross-check: |d(1e-6) - d(1e-5)| = {err}")

    coeffs = reduced_coeffs(params, shape)
    return CoefficientPartials(
        dc133_dtheta=fine[0], dP1_dtheta=fine[1],
        dc133_ddelta=fine[2], dP1_ddelta=fine[3],
        c123_plus_c132=coeffs.c[0, 1, 2] + coeffs.c[0, 2, 1],
        c113_plus_c131=coeffs.c[0, 0, 2] + coeffs.c[0, 2, 0],
    )


@dataclass(frozen=True)
class StructuralReport:
    """Maximum residuals of the structural identities over a shape grid."""

    c133_c233_at_origin: float
    P1_P2_at_origin: float
    c333_everywhere: float
    P3_everywhere: float
    dc133_dtheta_at_origin: float
    c113_plus_c131_at_origin: float
    m_asymmetry: float
    m_min_eigenvalue: float
    tolerance: float = 1e-8

    @property
    def ok(self):
        worst = max(self.c133_c233_at_origin, self.P1_P2_at_origin,
                    self.c333_everywhere, self.P3_everywhere,
                    self.dc133_dtheta_at_origin,
                    self.c113_plus_c131_at_origin, self.m_asymmetry)
        return bool(worst < self.tolerance
                    and self.m_min_eigenvalue > 0.0)

    def as_dict(self):
        return {
            "c133_c233_at_origin": self.c133_c233_at_origin,
            "P1_P2_at_origin": self.P1_P2_at_origin,
            "c333_everywhere": self.c333_everywhere,
            "P3_everywhere": self.P3_everywhere,
            "dc133_dtheta_at_origin": self.dc133_dtheta_at_origin,
            "c113_plus_c131_at_origin": self.c113_plus_c131_at_origin,
            "m_asymmetry": self.m_asymmetry,
            "m_min_eigenvalue": self.m_min_eigenvalue,
            "ok": self.ok,
        }


def verify_structural_identities(params, grid_n=15, extent=0.4):
    """Check the structural identities of the reduced coefficients.

    Over a ``grid_n`` x ``grid_n`` lean/steer grid: c_333 and P_3 vanish
    identically, the inertia is symmetric positive definite; at the
    origin additionally c_133, c_233, P_1, P_2, dc133/dtheta and
    c_113 + c_131 vanish.
    """
    grid = np.linspace(-extent, extent, grid_n)
    c333 = 0.0
    P3 = 0.0
    asym = 0.0
    min_eig = np.inf
    for theta in grid:
        for delta in grid:
            coeffs = reduced_coeffs(params, ShapeCoords(theta, delta))
            c333 = max(c333, abs(coeffs.c[2, 2, 2]))
            P3 = max(P3, abs(coeffs.P[2]))
            asym = max(asym, np.max(np.abs(coeffs.m - coeffs.m.T)))
            min_eig = min(min_eig, np.linalg.eigvalsh(coeffs.m)[0])
    origin = reduced_coeffs(params, ShapeCoords(0.0, 0.0))
    partials = coefficient_partials(params, ShapeCoords(0.0, 0.0))
    return StructuralReport(
        c133_c233_at_origin=max(abs(origin.c[0, 2, 2]),
                                abs(origin.c[1, 2, 2])),
        P1_P2_at_origin=max(abs(origin.P[0]), abs(origin.P[1])),
        c333_everywhere=c333,
        P3_everywhere=P3,
        dc133_dtheta_at_origin=abs(partials.dc133_dtheta),
        c113_plus_c131_at_origin=abs(partials.c113_plus_c131),
        m_asymmetry=asym,
        m_min_eigenvalue=min_eig,
    )
