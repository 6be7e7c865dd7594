"""Full-coordinate DAE oracle for verifying the reduced dynamics.

This module integrates the unreduced bicycle: all 9 generalized
coordinates, the 6 ground-contact constraints enforced at acceleration
level through Lagrange multipliers (a KKT solve per evaluation), and
coordinate projection onto the position and velocity constraint
manifolds after every accepted integrator step.

The implementation is deliberately independent of the production path in
:mod:`bikedyn.kinematics` / :mod:`bikedyn.reduction`: rotations are
composed from quaternions and body Jacobians are extracted by
complex-stepping the pose maps coordinate by coordinate, so agreement
between the two simulators exercises two different derivations of the
same mechanics.  It is a verification tool, not a performance path.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.integrate import DOP853

from .errors import (IntegratorFailure, ProjectionFailure, SingularKKT,
                     ValidationError)
from .kinematics import Config

_CSTEP = 1e-100
#: step of the real central differences along the flow (bias terms only)
_FLOW_STEP = 1e-6
_PROJECTION_TOL = 1e-10

# coordinate order: x, y, z, psi, theta, phi, delta, phi_r, phi_f
_IX, _IY, _IZ, _IPSI, _ITHETA, _IPHI, _IDELTA, _IPHIR, _IPHIF = range(9)


def _quat(axis, angle):
    """Unit quaternion (w, x, y, z) for a rotation about a unit axis."""
    half = 0.5 * angle
    s = np.sin(half)
    return np.array([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def _quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _quat_rot(q):
    """Rotation matrix of a (possibly complex-stepped) quaternion."""
    w, x, y, z = q
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z),
         2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z,
         2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x),
         w * w - x * x - y * y + z * z],
    ])


def _unskew(S):
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


@dataclass(frozen=True)
class FullState:
    """Configuration plus all nine generalized velocities."""

    config: Config
    qdot: np.ndarray

    def __post_init__(self):
        qdot = np.asarray(self.qdot, dtype=float)
        if qdot.shape != (9,) or not np.all(np.isfinite(qdot)):
            raise ValidationError("qdot must be 9 finite components")
        object.__setattr__(self, "qdot", qdot)


@dataclass
class FullTrajectory:
    """Output samples of :func:`simulate_dae`."""

    t: np.ndarray
    q: np.ndarray               # (n, 9)
    qdot: np.ndarray            # (n, 9)
    lam: np.ndarray             # (n, 6) constraint forces on the system
    normal_rear: np.ndarray
    normal_front: np.ndarray
    position_residual: np.ndarray
    velocity_residual: np.ndarray

    @property
    def theta(self):
        return self.q[:, _ITHETA]

    @property
    def theta_dot(self):
        return self.qdot[:, _ITHETA]


class _OracleModel:
    """Quaternion kinematics and complex-step Jacobians of the four
    bodies."""

    _EX = np.array([1.0, 0.0, 0.0])
    _EY = np.array([0.0, 1.0, 0.0])
    _EZ = np.array([0.0, 0.0, 1.0])

    def __init__(self, params):
        p = params
        self.params = p
        self.u_s = np.array([-math.sin(p.lam), 0.0, math.cos(p.lam)])
        d_ref = np.array([p.w + p.c - p.R_f * math.tan(p.lam), 0.0, p.R_f])
        self.r_ref = [
            np.array([0.0, 0.0, p.R_r]) - d_ref,        # rear wheel center
            np.array([p.x_b, 0.0, p.z_b]) - d_ref,      # rear frame
            np.array([p.x_h, 0.0, p.z_h]) - d_ref,      # front frame
            np.array([p.w, 0.0, p.R_f]) - d_ref,        # front wheel center
        ]
        tensors = p.inertia_tensors()
        self.inertias = [tensors["rear_wheel"], tensors["rear_frame"],
                         tensors["front_frame"], tensors["front_wheel"]]
        self.masses = [p.m_r, p.m_b, p.m_h, p.m_f]
        # which steered frame carries each body: 0 rear, 1 front
        self.frame_of = [0, 0, 1, 1]

    def _pose(self, q):
        """Mass-center positions and rotation matrices of the 4 bodies.

        The wheel rotations include the spin angles, so Jacobians derived
        from them carry the spin columns.  Accepts complex-stepped q.
        """
        q_rear = _quat_mul(_quat(self._EZ, q[_IPSI]),
                           _quat_mul(_quat(self._EX, q[_ITHETA]),
                                     _quat(self._EY, q[_IPHI])))
        q_front = _quat_mul(q_rear, _quat(self.u_s, q[_IDELTA]))
        R_rear = _quat_rot(q_rear)
        R_front = _quat_rot(q_front)
        R_rw = _quat_rot(_quat_mul(q_rear, _quat(self._EY, q[_IPHIR])))
        R_fw = _quat_rot(_quat_mul(q_front, _quat(self._EY, q[_IPHIF])))
        d = np.array([q[_IX], q[_IY], q[_IZ]])
        frames = (R_rear, R_front)
        pos = [d + frames[self.frame_of[k]] @ self.r_ref[k]
               for k in range(4)]
        return pos, [R_rw, R_rear, R_front, R_fw]

    def jacobians(self, q):
        """Positions, rotations and geometric Jacobians at a real q.

        Each column of Jv[k]/Jw[k] is an exact (complex-step)
        directional derivative of the pose map along one coordinate.
        """
        pos, rots = self._pose(q)
        Jv = [np.empty((3, 9)) for _ in range(4)]
        Jw = [np.empty((3, 9)) for _ in range(4)]
        h = _CSTEP
        for i in range(9):
            qc = q.astype(complex)
            qc[i] += 1j * h
            pos_c, rots_c = self._pose(qc)
            for k in range(4):
                Jv[k][:, i] = pos_c[k].imag / h
                Jw[k][:, i] = _unskew((rots_c[k].imag / h) @ rots[k].T)
        return pos, rots, Jv, Jw

    def _contact_offsets(self, q):
        """Per wheel: (body index, center, offset center->lowest point)."""
        pos, rots = self._pose(q)
        out = []
        for k, radius in ((0, self.params.R_r), (3, self.params.R_f)):
            j = rots[k] @ self._EY.astype(rots[k].dtype)  # spin axis
            s = np.sqrt(1.0 - j[2] ** 2)
            ez = self._EZ.astype(j.dtype)
            out.append((k, pos[k], -radius * (ez - j[2] * j) / s))
        return out

    def holonomic_residual(self, q):
        """Heights of the two wheel contact points above the ground."""
        return np.array([(center[2] + offset[2])
                         for _, center, offset in self._contact_offsets(q)])

    def constraint_matrix(self, q):
        """The 6x9 matrix A(q) with A qdot = contact-point velocities."""
        _, _, Jv, Jw = self.jacobians(q)
        A = np.empty((6, 9))
        for row, (k, _, offset) in enumerate(self._contact_offsets(q)):
            S = np.array([[0.0, -offset[2], offset[1]],
                          [offset[2], 0.0, -offset[0]],
                          [-offset[1], offset[0], 0.0]])
            A[3 * row:3 * row + 3] = Jv[k] - S @ Jw[k]
        return A

    def _flow_rates(self, q, qdot):
        """Velocities of all bodies and both contact points at
        (q, qdot).

        Returns (v list, omega list, contact 6-vector); all are exact
        complex-step directional derivatives along qdot.
        """
        pos, rots = self._pose(q)
        h = _CSTEP
        pos_c, rots_c = self._pose(q + 1j * h * qdot)
        v = [pos_c[k].imag / h for k in range(4)]
        omega = [_unskew((rots_c[k].imag / h) @ rots[k].T)
                 for k in range(4)]
        contact = np.empty(6)
        for row, (k, _, offset) in enumerate(self._contact_offsets(q)):
            contact[3 * row:3 * row + 3] = v[k] + np.cross(omega[k], offset)
        return v, omega, contact

    def _flow_accelerations(self, q, qdot):
        """Body and contact accelerations along the flow with qddot = 0.

        Central difference of the complex-step velocities along the
        straight line q + t qdot; these are exactly the bias terms
        Jv_dot qdot, Jw_dot qdot and A_dot qdot.
        """
        eps = _FLOW_STEP / max(1.0, float(np.max(np.abs(qdot))))
        v_p, w_p, c_p = self._flow_rates(q + eps * qdot, qdot)
        v_m, w_m, c_m = self._flow_rates(q - eps * qdot, qdot)
        a = [(vp - vm) / (2 * eps) for vp, vm in zip(v_p, v_m)]
        alpha = [(wp - wm) / (2 * eps) for wp, wm in zip(w_p, w_m)]
        gamma = (c_p - c_m) / (2 * eps)
        return a, alpha, gamma

    def dynamics_terms(self, q, qdot, tau_delta, tau_phir):
        """Mass matrix, velocity bias, generalized force and constraint
        data at (q, qdot)."""
        pos, rots, Jv, Jw = self.jacobians(q)
        a_bias, alpha_bias, gamma = self._flow_accelerations(q, qdot)
        M = np.zeros((9, 9))
        bias = np.zeros(9)
        force = np.zeros(9)
        g = self.params.g
        for k in range(4):
            mk = self.masses[k]
            Iw = rots[k] @ self.inertias[k] @ rots[k].T
            M += mk * (Jv[k].T @ Jv[k]) + Jw[k].T @ Iw @ Jw[k]
            omega = Jw[k] @ qdot
            bias += Jv[k].T @ (mk * a_bias[k])
            bias += Jw[k].T @ (Iw @ alpha_bias[k]
                               + np.cross(omega, Iw @ omega))
            force -= mk * g * Jv[k][2, :]
        force[_IDELTA] += tau_delta
        force[_IPHIR] += tau_phir
        A = self.constraint_matrix(q)
        return M, bias, force, A, gamma

    def accelerations(self, q, qdot, tau_delta, tau_phir):
        """Solve the KKT system for accelerations and multipliers.

        The multipliers are the constraint forces the ground applies to
        the wheels, expressed in the inertial frame (rear rows 0-2,
        front rows 3-5); a positive z component is a push up.
        """
        M, bias, force, A, gamma = self.dynamics_terms(q, qdot, tau_delta,
                                                       tau_phir)
        K = np.zeros((15, 15))
        K[:9, :9] = M
        K[:9, 9:] = -A.T
        K[9:, :9] = A
        rhs = np.concatenate([force - bias, -gamma])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularKKT("constrained mass system is singular") from exc
        if not np.all(np.isfinite(sol)):
            raise SingularKKT("KKT solve produced non-finite values")
        return sol[:9], sol[9:]

    def project_position(self, q, tol=1e-12, maxiter=30):
        """Newton-project (z, phi) onto the two holonomic constraints.

        Converges to ``tol`` when roundoff permits; otherwise accepts
        the stagnated residual provided it is below the 1e-10 validity
        threshold used for trajectory recording.
        """
        q = q.copy()
        h = _CSTEP
        prev = np.inf
        for _ in range(maxiter):
            r = self.holonomic_residual(q)
            res = np.max(np.abs(r))
            if res < tol:
                return q
            if res >= 0.5 * prev:
                # stalled at the roundoff floor of the contact equations
                if res < 1e-10:
                    return q
                break
            prev = res
            J = np.empty((2, 2))
            for col, idx in enumerate((_IZ, _IPHI)):
                qc = q.astype(complex)
                qc[idx] += 1j * h
                J[:, col] = self.holonomic_residual(qc).imag / h
            try:
                step = np.linalg.solve(J, r)
            except np.linalg.LinAlgError as exc:
                raise ProjectionFailure(
                    "holonomic projection Jacobian singular") from exc
            q[_IZ] -= step[0]
            q[_IPHI] -= step[1]
        raise ProjectionFailure(
            f"holonomic projection did not converge; residual {r}")

    def mass_matrix(self, q):
        """Generalized 9x9 inertia at configuration q."""
        pos, rots, Jv, Jw = self.jacobians(q)
        M = np.zeros((9, 9))
        for k in range(4):
            Iw = rots[k] @ self.inertias[k] @ rots[k].T
            M += self.masses[k] * (Jv[k].T @ Jv[k]) \
                + Jw[k].T @ Iw @ Jw[k]
        return M

    def project_velocity(self, q, qdot):
        """Mass-metric projection of qdot onto the A(q) null space.

        Minimizing the kinetic-energy norm of the correction makes it
        an impulsive constraint force, so the energy change is second
        order in the constraint violation (a Euclidean projection leaks
        energy linearly in the violation and the drift accumulates over
        a long run).
        """
        A = self.constraint_matrix(q)
        viol = A @ qdot
        M = self.mass_matrix(q)
        try:
            MinvAT = np.linalg.solve(M, A.T)
            mu = np.linalg.solve(A @ MinvAT, viol)
        except np.linalg.LinAlgError as exc:
            raise ProjectionFailure(
                "velocity projection system singular") from exc
        return qdot - MinvAT @ mu

    def project(self, q, qdot):
        q = self.project_position(q)
        qdot = self.project_velocity(q, qdot)
        return q, qdot

    def residuals(self, q, qdot):
        pos_res = float(np.max(np.abs(self.holonomic_residual(q))))
        vel_res = float(np.max(np.abs(self.constraint_matrix(q) @ qdot)))
        return pos_res, vel_res


def full_state_from_reduced(params, config, sigma_dot):
    """Build a constraint-consistent :class:`FullState` from shape data.

    ``config`` must already satisfy the holonomic constraints (as
    produced by :func:`bikedyn.kinematics.config_from_shape`);
    ``sigma_dot`` is (theta_dot, delta_dot, phi_r_dot).  The remaining
    six velocities come from the oracle's own velocity projection of the
    naive embedding, which reproduces the transfer-matrix completion.
    """
    sigma_dot = np.asarray(sigma_dot, dtype=float)
    model = _OracleModel(params)
    q = config.as_array()
    qdot = np.zeros(9)
    qdot[[_ITHETA, _IDELTA, _IPHIR]] = sigma_dot
    A = model.constraint_matrix(q)
    dep = [_IX, _IY, _IZ, _IPSI, _IPHI, _IPHIF]
    free = [_ITHETA, _IDELTA, _IPHIR]
    qdot_dep = np.linalg.solve(A[:, dep], -A[:, free] @ sigma_dot)
    qdot[dep] = qdot_dep
    q = model.project_position(q)
    qdot = model.project_velocity(q, qdot)
    cfg = Config(*q)
    return FullState(config=cfg, qdot=qdot)


def simulate_dae(params, fs0, torque_schedule, t_max, dt_out,
                 rtol=1e-10, atol=1e-12):
    """Integrate the full-coordinate constrained dynamics.

    Parameters
    ----------
    params : BicycleParams
    fs0 : FullState
        Initial state; it is projected onto the constraint manifolds
        before the run starts.
    torque_schedule : callable or None
        ``torque_schedule(t) -> (tau_delta, tau_phir)``; None means
        torque-free.
    t_max, dt_out : float
        Final time and output sampling interval (s).

    Returns
    -------
    FullTrajectory
        States, multipliers, contact normal forces and constraint
        residuals at each output sample.

    Notes
    -----
    Accelerations come from the KKT system (index-3 DAE reduced to
    acceleration level); after every accepted Runge-Kutta step the state
    is projected back onto the position and velocity constraint
    manifolds, keeping residuals below 1e-10 without stabilization
    constants.
    """
    if torque_schedule is None:
        def torque_schedule(t):
            return (0.0, 0.0)
    model = _OracleModel(params)
    q0, qd0 = model.project(fs0.config.as_array(), fs0.qdot)

    def rhs(t, y):
        tau_delta, tau_phir = torque_schedule(t)
        qddot, _ = model.accelerations(y[:9], y[9:], tau_delta, tau_phir)
        return np.concatenate([y[9:], qddot])

    n_out = int(math.floor(t_max / dt_out + 1e-9)) + 1
    t_samples = np.minimum(dt_out * np.arange(n_out), t_max)
    q_out = np.empty((n_out, 9))
    qd_out = np.empty((n_out, 9))
    lam_out = np.empty((n_out, 6))
    pos_res = np.empty(n_out)
    vel_res = np.empty(n_out)

    def record(i, t, q, qdot):
        tau_delta, tau_phir = torque_schedule(t)
        _, lam = model.accelerations(q, qdot, tau_delta, tau_phir)
        q_out[i] = q
        qd_out[i] = qdot
        lam_out[i] = lam
        pos_res[i], vel_res[i] = model.residuals(q, qdot)
        if pos_res[i] > _PROJECTION_TOL or vel_res[i] > _PROJECTION_TOL:
            raise ProjectionFailure(
                f"constraint residual exceeded {_PROJECTION_TOL} at "
                f"t={t}: position {pos_res[i]}, velocity {vel_res[i]}")

    record(0, 0.0, q0, qd0)
    y = np.concatenate([q0, qd0])
    stepper = DOP853(rhs, 0.0, y, t_bound=t_max, rtol=rtol, atol=atol)
    i = 1
    while stepper.status == "running":
        stepper.step()
        if stepper.status == "failed":
            raise IntegratorFailure(
                f"full-coordinate integration failed near t={stepper.t}")
        # output samples inside the accepted step come from the dense
        # interpolant, individually re-projected before recording
        if i < n_out and t_samples[i] <= stepper.t:
            sol = stepper.dense_output()
            while i < n_out and t_samples[i] <= stepper.t:
                ys = sol(t_samples[i])
                q_s, qd_s = model.project(ys[:9], ys[9:])
                record(i, t_samples[i], q_s, qd_s)
                i += 1
        q_p, qd_p = model.project(stepper.y[:9], stepper.y[9:])
        stepper.y[:9] = q_p
        stepper.y[9:] = qd_p
        # keep the stored first-stage derivative consistent with the
        # projected state, else the error controller sees the projection
        # kick as rhs noise and collapses the step size
        stepper.f = rhs(stepper.t, stepper.y)
    if i < n_out:
        raise IntegratorFailure(
            f"full-coordinate integration stopped at t={stepper.t} "
            f"before reaching t={t_max}")

    return FullTrajectory(t=t_samples, q=q_out, qdot=qd_out, lam=lam_out,
                          normal_rear=lam_out[:, 2],
                          normal_front=lam_out[:, 5],
                          position_residual=pos_res,
                          velocity_residual=vel_res)
