"""Controlled and free motion of the bicycle.

Under the proportional steering law ``delta = c1 * theta`` with the rear
wheel driven at constant rate ``omega0``, the lean angle obeys a single
second-order ODE.  This module integrates that equation, recovers the
steer and rear-wheel constraint torques along the motion, integrates the
free (torque-free) three-degree-of-freedom dynamics, and reconstructs
the planar path of the reference point from the velocity transfer
matrix.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (DomainError, IntegratorFailure, NoContactSolution,
                     SingularMass)
from .kinematics import (Config, ShapeCoords, solve_holonomic,
                         transfer_matrix)
from .reduction import reduced_dynamics_terms

#: lean magnitude treated as a fall
FALL_THRESHOLD = math.pi / 2 - 0.05
#: margin to the domain boundary at which free integration stops
DOMAIN_EVENT_MARGIN = 0.05

_RTOL = 1e-9
_ATOL = 1e-12
_MASS_TOL = 1e-10


@dataclass(frozen=True)
class ControlLaw:
    """Proportional steer law delta = c1 * theta at rear-wheel rate
    omega0."""

    c1: float
    omega0: float

    def __post_init__(self):
        if not np.isfinite(self.c1):
            raise DomainError("steer coefficient must be finite")
        if not self.omega0 >= 0.0:
            raise DomainError("commanded wheel rate must be nonnegative")

    def shape(self, theta):
        return ShapeCoords(theta, self.c1 * theta)

    def sigma_dot(self, theta_dot):
        return np.array([theta_dot, self.c1 * theta_dot, self.omega0])


@dataclass(frozen=True)
class LeanState:
    """Lean angle and rate, the state of the controlled motion."""

    theta: float
    theta_dot: float

    def __post_init__(self):
        if not abs(self.theta) < math.pi / 2:
            raise DomainError("lean beyond horizontal")


@dataclass(frozen=True)
class TorqueSample:
    """Steer and rear-wheel constraint torques (N m)."""

    tau_delta: float
    tau_phir: float


@dataclass
class Trajectory:
    """Time series produced by :func:`simulate`.

    ``t`` is strictly increasing and starts at the initial condition.
    ``domain_exit`` carries the fall time when the lean reached the
    domain boundary, else None.  ``path`` is filled by
    :func:`reconstruct_path`.
    """

    t: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    tau_delta: np.ndarray
    tau_phir: np.ndarray
    law: ControlLaw
    domain_exit: float | None = None
    path: np.ndarray | None = None          # columns x, y, psi
    dense: object = field(default=None, repr=False)

    def states(self):
        return [LeanState(th, thd) for th, thd in
                zip(self.theta, self.theta_dot)]


def _controlled_terms(params, law, theta, theta_dot, pitch_guess=0.0):
    shape = law.shape(theta)
    sigma_dot = law.sigma_dot(theta_dot)
    m, b, P, phi, _ = reduced_dynamics_terms(params, shape, sigma_dot,
                                             pitch_guess=pitch_guess)
    M1 = m[0, 0] + law.c1 * m[0, 1]
    if abs(M1) < _MASS_TOL:
        raise SingularMass(f"effective lean inertia vanished at "
                           f"theta={theta}")
    h1 = b[0] - P[0]
    theta_ddot = -h1 / M1
    return theta_ddot, m, b, P, phi


def lean_acceleration(params, law, state):
    """Lean acceleration of the controlled motion at a lean state."""
    theta_ddot, *_ = _controlled_terms(params, law, state.theta,
                                       state.theta_dot)
    return theta_ddot


def control_torques(params, law, state, theta_ddot=None):
    """Steer and rear-wheel torques enforcing the control law.

    If ``theta_ddot`` is omitted it is computed from the governing
    equation, which is the consistent choice along controlled motion.
    """
    tdd, m, b, P, _ = _controlled_terms(params, law, state.theta,
                                        state.theta_dot)
    if theta_ddot is None:
        theta_ddot = tdd
    sigma_ddot = np.array([theta_ddot, law.c1 * theta_ddot, 0.0])
    tau_delta = m[1] @ sigma_ddot + b[1] - P[1]
    tau_phir = m[2] @ sigma_ddot + b[2] - P[2]
    return TorqueSample(tau_delta=tau_delta, tau_phir=tau_phir)


def _solvable_threshold(params, law, threshold):
    """Largest lean (up to ``threshold``) with a two-wheel contact
    solution along the control line.

    For mild steer coefficients the contact problem loses solvability
    before |theta| reaches the nominal fall threshold; the fall event
    must fire at the model's actual validity boundary.  Solvability is
    symmetric in the sign of theta (lateral mirror)."""
    def solvable(theta):
        try:
            solve_holonomic(params, ShapeCoords(theta, law.c1 * theta,
                                                margin=0.04))
        except (NoContactSolution, DomainError):
            return False
        return True

    if solvable(threshold):
        return threshold
    lo, hi = 0.0, threshold
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if solvable(mid):
            lo = mid
        else:
            hi = mid
    # the solvable boundary is a fold of the pitch solution where the
    # dynamics blow up; stop comfortably inside it
    return lo - 0.05


def _singular_lean(params, law, threshold):
    """Smallest positive lean (below ``threshold``) at which the
    effective lean inertia m11 + c1 m12 vanishes, or None.

    The governing equation divides by this combination; integration
    must stop before its zero crossing rather than step into it."""
    def M1(theta):
        m, _, _, _, _ = reduced_dynamics_terms(
            params, law.shape(theta), law.sigma_dot(0.0))
        return m[0, 0] + law.c1 * m[0, 1]

    grid = np.linspace(0.0, threshold - 1e-6, 40)
    values = [M1(th) for th in grid]
    for i in range(len(grid) - 1):
        if values[i] * values[i + 1] <= 0.0:
            lo, hi = grid[i], grid[i + 1]
            while hi - lo > 1e-10:
                mid = 0.5 * (lo + hi)
                if M1(lo) * M1(mid) <= 0.0:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)
    return None


def simulate(params, law, state0, t_max, dt_out, rtol=_RTOL, atol=_ATOL):
    """Integrate the controlled lean dynamics.

    Parameters
    ----------
    params : BicycleParams
    law : ControlLaw
    state0 : LeanState
        Initial condition.
    t_max : float
        Final time (s).
    dt_out : float
        Output sampling interval (s).
    rtol, atol : float, optional
        Integrator tolerances (adaptive Runge-Kutta 5(4), dense output).

    Returns
    -------
    Trajectory
        Sampled at ``dt_out`` with torques recorded at each sample.  A
        fall (|theta| reaching pi/2 - 0.05) terminates the run and is
        reported in ``domain_exit``.
    """
    if not (t_max > 0 and dt_out > 0):
        raise DomainError("t_max and dt_out must be positive")
    guess = {"phi": 0.0}
    # the steer delta = c1 theta reaches the shape boundary before theta
    # does when |c1| > 1; fall at whichever limit comes first.  The
    # two-wheel contact problem can also lose solvability before either
    # angle limit, so the event is additionally capped at the solvable
    # boundary along the control line.
    scale = max(abs(law.c1), 1.0)
    threshold = min(FALL_THRESHOLD, (math.pi / 2 - 0.05) / scale)
    threshold = _solvable_threshold(params, law, threshold)
    # the effective lean inertia may vanish before the fall boundary;
    # stop just short of the crossing (approached from either side) and
    # signal instead of stalling
    theta_sing = _singular_lean(params, law, threshold)
    # trial stages may overshoot the fall boundary before the event is
    # located; clamp only those evaluations (just inside the boundary)
    clip = threshold - 1e-9

    def rhs(t, y):
        theta = float(np.clip(y[0], -clip, clip))
        theta_ddot, _, _, _, phi = _controlled_terms(
            params, law, theta, y[1], pitch_guess=guess["phi"])
        guess["phi"] = phi
        return (y[1], theta_ddot)

    def fall(t, y):
        return threshold - abs(y[0])
    fall.terminal = True
    fall.direction = -1
    events = [fall]
    if theta_sing is not None:
        def singular(t, y):
            return abs(abs(y[0]) - theta_sing) - 1e-3
        singular.terminal = True
        singular.direction = -1
        events.append(singular)

    sol = solve_ivp(rhs, (0.0, t_max), (state0.theta, state0.theta_dot),
                    method="RK45", rtol=rtol, atol=atol, dense_output=True,
                    events=events, max_step=0.1)
    if sol.status == -1:
        raise IntegratorFailure(sol.message)
    if len(events) > 1 and sol.t_events[1].size:
        raise SingularMass(
            f"effective lean inertia vanishes at theta={theta_sing:.6g}; "
            f"motion reached the singular surface at "
            f"t={sol.t_events[1][0]:.6g}")
    t_end = sol.t[-1]
    exit_time = None
    if sol.status == 1 and sol.t_events[0].size:
        exit_time = float(sol.t_events[0][0])
        t_end = exit_time
    n = int(math.floor(t_end / dt_out + 1e-9)) + 1
    t = np.minimum(dt_out * np.arange(n), t_end)
    y = sol.sol(t)
    tau_d = np.empty(n)
    tau_p = np.empty(n)
    for i in range(n):
        sample = control_torques(params, law,
                                 LeanState(y[0, i], y[1, i]))
        tau_d[i] = sample.tau_delta
        tau_p[i] = sample.tau_phir
    return Trajectory(t=t, theta=y[0], theta_dot=y[1], tau_delta=tau_d,
                      tau_phir=tau_p, law=law, domain_exit=exit_time,
                      dense=sol.sol)


@dataclass
class FreeTrajectory:
    """Time series of the torque-free three-degree-of-freedom motion."""

    t: np.ndarray
    theta: np.ndarray
    delta: np.ndarray
    phi_r: np.ndarray
    sigma_dot: np.ndarray       # (n, 3)
    domain_exit: float | None = None
    dense: object = field(default=None, repr=False)


def simulate_free(params, sigma0, sigma_dot0, t_max, dt_out, rtol=_RTOL,
                  atol=_ATOL):
    """Integrate the reduced dynamics with zero applied torques.

    Parameters
    ----------
    sigma0 : sequence of 3 floats
        Initial (theta, delta, phi_r).
    sigma_dot0 : QuasiVelocities or sequence of 3 floats
        Initial quasi-velocities.
    """
    sigma0 = np.asarray(sigma0, dtype=float)
    sd0 = np.asarray(getattr(sigma_dot0, "as_array", lambda: sigma_dot0)(),
                     dtype=float)
    ShapeCoords(sigma0[0], sigma0[1])
    guess = {"phi": 0.0}
    lim = math.pi / 2 - DOMAIN_EVENT_MARGIN
    # trial stages may overshoot the stop boundary before the event is
    # located; evaluate them at the clamped shape (only such stages see
    # the clamp, accepted states never do)
    clip = math.pi / 2 - 0.02

    def rhs(t, y):
        shape = ShapeCoords(float(np.clip(y[0], -clip, clip)),
                            float(np.clip(y[1], -clip, clip)),
                            margin=0.01)
        m, b, P, phi, _ = reduced_dynamics_terms(params, shape, y[3:],
                                                 pitch_guess=guess["phi"])
        guess["phi"] = phi
        sigma_ddot = np.linalg.solve(m, P - b)
        return np.concatenate([y[3:], sigma_ddot])

    def leave(t, y):
        return lim - max(abs(y[0]), abs(y[1]))
    leave.terminal = True
    leave.direction = -1

    sol = solve_ivp(rhs, (0.0, t_max), np.concatenate([sigma0, sd0]),
                    method="RK45", rtol=rtol, atol=atol, dense_output=True,
                    events=leave, max_step=0.1)
    if sol.status == -1:
        raise IntegratorFailure(sol.message)
    t_end = sol.t[-1]
    exit_time = None
    if sol.status == 1 and sol.t_events[0].size:
        exit_time = float(sol.t_events[0][0])
        t_end = exit_time
    n = int(math.floor(t_end / dt_out + 1e-9)) + 1
    t = np.minimum(dt_out * np.arange(n), t_end)
    y = sol.sol(t)
    return FreeTrajectory(t=t, theta=y[0], delta=y[1], phi_r=y[2],
                          sigma_dot=y[3:].T, domain_exit=exit_time,
                          dense=sol.sol)


def reconstruct_path(params, law, traj, rtol=_RTOL, atol=_ATOL):
    """Integrate the planar rows of qdot = H sigma_dot along a controlled
    trajectory.

    Starts from planar pose (0, 0, 0) and returns an (n, 3) array of
    (x, y, psi) at the trajectory's sample times; the array is also
    stored on ``traj.path``.
    """
    if traj.dense is None:
        raise DomainError("trajectory lacks dense output; produced by "
                          "simulate?")
    guess = {"phi": 0.0}

    def rhs(t, pose):
        theta, theta_dot = traj.dense(t)
        shape = law.shape(theta)
        z, phi = solve_holonomic(params, shape, pitch_guess=guess["phi"])
        guess["phi"] = phi
        config = Config(x=pose[0], y=pose[1], z=z, psi=pose[2],
                        theta=theta, phi=phi, delta=shape.delta)
        H = transfer_matrix(params, config)
        qdot = H @ law.sigma_dot(theta_dot)
        return (qdot[0], qdot[1], qdot[3])

    t_end = traj.t[-1]
    sol = solve_ivp(rhs, (0.0, t_end), (0.0, 0.0, 0.0), method="RK45",
                    rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise IntegratorFailure(sol.message)
    path = sol.sol(traj.t).T
    traj.path = path
    return path


def write_trajectory_csv(traj, fh):
    """Write the trajectory CSV: t,theta,thetadot,tau_delta,tau_phir."""
    fh.write("t,theta,thetadot,tau_delta,tau_phir\n")
    for row in zip(traj.t, traj.theta, traj.theta_dot, traj.tau_delta,
                   traj.tau_phir):
        fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_path_csv(traj, fh):
    """Write the planar-path CSV: t,x,y,psi."""
    if traj.path is None:
        raise DomainError("trajectory has no reconstructed path")
    fh.write("t,x,y,psi\n")
    for t, (x, y, psi) in zip(traj.t, traj.path):
        fh.write(",".join(f"{v:.17g}" for v in (t, x, y, psi)) + "\n")
