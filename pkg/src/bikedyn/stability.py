"""Equilibria, linear stability and bifurcation structure of the
controlled motion.

The governing lean ODE has the trivial equilibrium (uniform straight
forward motion) and, depending on the steer coefficient and wheel rate,
pairs of symmetric nontrivial equilibria (uniform circular motions).
This module linearizes around both kinds, classifies them with the
second-order Hurwitz criterion (all three coefficients share a strict
sign), evaluates the closed-form critical speed, tracks equilibrium
branches over the wheel-rate parameter and locates the pitchfork, fold
and stability-flip points.
"""

from dataclasses import dataclass
import json
import math
import warnings

import numpy as np
from numpy.polynomial import chebyshev as ncheb
from scipy.optimize import brentq

from .errors import (NoCriticalSpeed, NotAnEquilibrium,
                     NumericalInconsistency, TrivialUnstable)
from .kinematics import DOMAIN_MARGIN, ShapeCoords
from .motion import ControlLaw
from .reduction import coefficient_partials, reduced_coeffs

_MARGINAL_TOL = 1e-12
_EQ_RESIDUAL_TOL = 1e-8
_SCAN_STEP = 1e-3
_POLISH_TOL = 1e-12


class GridTooCoarse(UserWarning):
    """A branch appeared or vanished across an unresolved grid gap."""


@dataclass(frozen=True)
class LinearCoeffs:
    """Coefficients of the linearized lean ODE a2 x'' + a1 x' + a0 x = 0."""

    a2: float
    a1: float
    a0: float

    def as_tuple(self):
        return (self.a2, self.a1, self.a0)


def hurwitz_stable(lc):
    """Classify a second-order linear ODE by the Hurwitz criterion.

    Returns "stable" when all three coefficients share a strict sign,
    "marginal" when any coefficient is within 1e-12 of zero, else
    "unstable".
    """
    coeffs = lc.as_tuple()
    if any(abs(a) < _MARGINAL_TOL for a in coeffs):
        return "marginal"
    signs = {math.copysign(1.0, a) for a in coeffs}
    return "stable" if len(signs) == 1 else "unstable"


@dataclass(frozen=True)
class EquilibriumPoint:
    """A root of the equilibrium equation with its classification."""

    theta0: float
    stability: str
    linear: LinearCoeffs


@dataclass(frozen=True)
class CriticalSpeeds:
    """Pitchfork, fold and stability-flip wheel rates (rad/s)."""

    omega_c: float
    omega_c_prime: float | None = None
    omega_c_double_prime: float | None = None

    def as_dict(self):
        return {"omega_c": self.omega_c,
                "omega_c_prime": self.omega_c_prime,
                "omega_c_double_prime": self.omega_c_double_prime}


@dataclass(frozen=True)
class BifurcationDiagram:
    """Equilibrium branches over the wheel-rate grid at fixed c1."""

    c1: float
    omega_grid: np.ndarray
    branches: list          # each: list of (omega0, theta0, stability)
    critical: CriticalSpeeds


def linearize_trivial(params, law):
    """Linearization coefficients of the lean ODE at the upright
    equilibrium."""
    origin = ShapeCoords(0.0, 0.0)
    coeffs = reduced_coeffs(params, origin)
    partials = coefficient_partials(params, origin)
    c1, w0 = law.c1, law.omega0
    a2 = coeffs.m[0, 0] + c1 * coeffs.m[0, 1]
    a1 = c1 * w0 * partials.c123_plus_c132
    a0 = (c1 * partials.dc133_ddelta * w0 ** 2
          - partials.dP1_dtheta - c1 * partials.dP1_ddelta)
    return LinearCoeffs(a2=a2, a1=a1, a0=a0)


def critical_speed(params, c1, cross_check=True):
    """Closed-form critical wheel rate above which the upright motion is
    stable.

    Raises
    ------
    NoCriticalSpeed
        If the radicand is not positive (in particular for c1 >= 0).
    NumericalInconsistency
        If the closed form disagrees with the numeric zero of the
        stiffness coefficient.
    """
    partials = coefficient_partials(params, ShapeCoords(0.0, 0.0))
    num = partials.dP1_dtheta + c1 * partials.dP1_ddelta
    den = c1 * partials.dc133_ddelta
    if den <= 0.0 or num / den <= 0.0:
        raise NoCriticalSpeed(f"no critical speed for c1={c1}: "
                              f"radicand {num}/{den} not positive")
    omega_c = math.sqrt(num / den)
    if cross_check:
        def a0(w0):
            return (c1 * partials.dc133_ddelta * w0 ** 2
                    - partials.dP1_dtheta - c1 * partials.dP1_ddelta)
        numeric = brentq(a0, 0.5 * omega_c, 2.0 * omega_c,
                         xtol=1e-13, rtol=8.9e-16)
        if abs(numeric - omega_c) > 1e-9 * omega_c:
            raise NumericalInconsistency(
                f"closed-form critical speed {omega_c} vs numeric zero "
                f"{numeric}")
    return omega_c


class CoefficientTable:
    """Chebyshev interpolants of the reduced coefficients along the
    control line delta = c1 * theta.

    Built once per (params, c1) and shared by all wheel rates of a
    continuation; interpolation is verified against the true assembly at
    off-node points during construction.  Only used where the spec path
    evaluates the same one-variable restrictions repeatedly; root
    residuals are always confirmed on the true assembly.
    """

    #: interpolated quantities, in storage order
    FIELDS = ("c133", "P1", "m11", "m12", "c123_plus_c132",
              "c113_plus_c131")

    def __init__(self, params, c1, theta_limit, degree=160, check_tol=1e-9):
        self.params = params
        self.c1 = c1
        self.theta_limit = theta_limit
        nodes = np.cos(np.pi * (np.arange(degree + 1) + 0.5)
                       / (degree + 1)) * theta_limit
        values = np.array([self._true_values(t) for t in nodes])
        self.series = {}
        for i, name in enumerate(self.FIELDS):
            coef = ncheb.chebfit(nodes / theta_limit, values[:, i], degree)
            self.series[name] = ncheb.Chebyshev(
                coef, domain=[-theta_limit, theta_limit])
        self._dc133 = self.series["c133"].deriv()
        self._dP1 = self.series["P1"].deriv()
        for t_check in (0.37 * theta_limit, -0.81 * theta_limit):
            true = self._true_values(t_check)
            interp = np.array([self.series[n](t_check) for n in self.FIELDS])
            scale = 1.0 + np.abs(true)
            if np.any(np.abs(true - interp) > check_tol * scale):
                raise NumericalInconsistency(
                    "coefficient table interpolation check failed at "
                    f"theta={t_check}: {true - interp}")

    def _true_values(self, theta):
        coeffs = reduced_coeffs(self.params,
                                ShapeCoords(theta, self.c1 * theta))
        return np.array([coeffs.c[0, 2, 2], coeffs.P[0], coeffs.m[0, 0],
                         coeffs.m[0, 1],
                         coeffs.c[0, 1, 2] + coeffs.c[0, 2, 1],
                         coeffs.c[0, 0, 2] + coeffs.c[0, 2, 0]])

    def equilibrium_residual(self, theta, omega0):
        return self.series["c133"](theta) * omega0 ** 2 \
            - self.series["P1"](theta)

    def residual_slope(self, theta, omega0):
        return self._dc133(theta) * omega0 ** 2 - self._dP1(theta)

    def linearize(self, law, theta0):
        b2 = self.series["m11"](theta0) + law.c1 * self.series["m12"](theta0)
        b1 = (law.c1 * law.omega0 * self.series["c123_plus_c132"](theta0)
              + self.series["c113_plus_c131"](theta0) * law.omega0)
        b0 = self.residual_slope(theta0, law.omega0)
        return LinearCoeffs(a2=b2, a1=b1, a0=b0)


def _theta_limit(c1, theta_range, margin=DOMAIN_MARGIN):
    """Largest |theta| keeping both theta and c1*theta inside the
    domain."""
    lim = math.pi / 2 - margin - 1e-9
    lo, hi = theta_range
    bound = min(-lo, hi, lim)
    if c1 != 0.0:
        bound = min(bound, lim / abs(c1))
    return bound


def _equilibrium_residual_true(params, law, theta):
    coeffs = reduced_coeffs(params, law.shape(theta))
    return coeffs.c[0, 2, 2] * law.omega0 ** 2 - coeffs.P[0]


def linearize_at(params, law, theta0):
    """Linearization coefficients around a nontrivial equilibrium.

    Raises NotAnEquilibrium when the equilibrium residual at ``theta0``
    exceeds 1e-8.
    """
    residual = _equilibrium_residual_true(params, law, theta0)
    if abs(residual) > _EQ_RESIDUAL_TOL:
        raise NotAnEquilibrium(
            f"theta0={theta0} has equilibrium residual {residual}")
    shape = law.shape(theta0)
    coeffs = reduced_coeffs(params, shape)
    partials = coefficient_partials(params, shape)
    c1, w0 = law.c1, law.omega0
    b2 = coeffs.m[0, 0] + c1 * coeffs.m[0, 1]
    b1 = (c1 * w0 * partials.c123_plus_c132
          + partials.c113_plus_c131 * w0)
    b0 = ((partials.dc133_dtheta + c1 * partials.dc133_ddelta) * w0 ** 2
          - partials.dP1_dtheta - c1 * partials.dP1_ddelta)
    return LinearCoeffs(a2=b2, a1=b1, a0=b0)


def find_equilibria(params, law, theta_range=(-0.5, 0.5), table=None):
    """All equilibria of the controlled lean dynamics in a lean range.

    A sign scan on a 1e-3 rad grid brackets the roots of the equilibrium
    equation; each bracket is polished to 1e-12 with bisection plus a
    Newton step on the true coefficient assembly.  The trivial
    equilibrium is always included.  Classification follows the Hurwitz
    criterion of the linearization at each root.

    Parameters
    ----------
    table : CoefficientTable, optional
        Shared interpolant used by continuation sweeps; scanning and
        classification then avoid re-assembling the coefficients at
        every grid point, while root residuals are still verified on the
        true assembly.
    """
    bound = _theta_limit(law.c1, theta_range)
    n = max(int(math.ceil(2 * bound / _SCAN_STEP)) + 1, 9)
    grid = np.linspace(-bound, bound, n)
    if table is not None:
        values = table.equilibrium_residual(grid, law.omega0)
    else:
        values = np.array([_equilibrium_residual_true(params, law, t)
                           for t in grid])

    roots = [0.0]
    sign_change = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:])
                             < 0)[0]
    for i in sign_change:
        lo, hi = grid[i], grid[i + 1]
        if lo <= 0.0 <= hi:
            continue        # bracket of the always-present trivial root
        if table is not None:
            root = brentq(
                lambda t: table.equilibrium_residual(t, law.omega0),
                lo, hi, xtol=_POLISH_TOL, rtol=8.9e-16)
            # polish on the true assembly with the interpolant's slope
            for _ in range(3):
                r = _equilibrium_residual_true(params, law, root)
                slope = table.residual_slope(root, law.omega0)
                step = r / slope
                root -= step
                if abs(step) < _POLISH_TOL:
                    break
        else:
            root = brentq(
                lambda t: _equilibrium_residual_true(params, law, t),
                lo, hi, xtol=_POLISH_TOL, rtol=8.9e-16)
            r = _equilibrium_residual_true(params, law, root)
            slope = (_equilibrium_residual_true(params, law, root + 1e-7)
                     - _equilibrium_residual_true(params, law,
                                                  root - 1e-7)) / 2e-7
            if slope != 0.0:
                root -= r / slope
        if abs(root) > 1e-9:
            roots.append(root)

    points = []
    for theta0 in sorted(roots):
        if table is not None:
            lc = table.linearize(law, theta0)
        elif theta0 == 0.0:
            lc = linearize_trivial(params, law)
        else:
            lc = linearize_at(params, law, theta0)
        points.append(EquilibriumPoint(theta0=theta0,
                                       stability=hurwitz_stable(lc),
                                       linear=lc))
    return points


def basin_radius_estimate(params, law, theta_range=(-0.5, 0.5)):
    """Lean distance to the nearest unstable nontrivial equilibrium.

    An estimate of the attraction-basin size of the stable upright
    motion.  Returns None when no unstable nontrivial equilibrium lies
    in range; raises TrivialUnstable when the upright motion itself is
    unstable.
    """
    points = find_equilibria(params, law, theta_range)
    trivial = min(points, key=lambda p: abs(p.theta0))
    if trivial.stability != "stable":
        raise TrivialUnstable("the upright equilibrium is not stable")
    unstable = [abs(p.theta0) for p in points
                if p.stability == "unstable" and abs(p.theta0) > 1e-9]
    return min(unstable) if unstable else None


def _nontrivial_roots(params, law_c1, omega0, theta_range, table):
    law = ControlLaw(c1=law_c1, omega0=omega0)
    points = find_equilibria(params, law, theta_range, table=table)
    return [p for p in points if abs(p.theta0) > 1e-9]


def _assemble_branches(per_omega):
    """Group (omega0, theta0, stability) points into branches by nearest
    neighbor continuation in theta."""
    branches = []
    active = []     # list of branch lists; last element is newest point
    for omega0, points in per_omega:
        thetas = [p.theta0 for p in points]
        used = [False] * len(points)
        next_active = []
        for branch in active:
            prev_theta = branch[-1][1]
            best, best_dist = None, np.inf
            for i, theta in enumerate(thetas):
                if not used[i] and abs(theta - prev_theta) < best_dist:
                    best, best_dist = i, abs(theta - prev_theta)
            if best is not None and best_dist < 0.05:
                used[best] = True
                branch.append((omega0, points[best].theta0,
                               points[best].stability))
                next_active.append(branch)
            else:
                branches.append(branch)
        for i, p in enumerate(points):
            if not used[i]:
                next_active.append([(omega0, p.theta0, p.stability)])
        active = next_active
    branches.extend(active)
    return branches


def bifurcation_diagram(params, c1, omega_grid, theta_range=(-0.5, 0.5),
                        workers=1):
    """Equilibrium branches and critical wheel rates over an
    omega0 grid.

    The pitchfork rate comes from the closed form; the fold rate is
    bisected (to 1e-4 rad/s) on the existence of nontrivial roots, the
    flip rate on the Hurwitz classification change along the nontrivial
    branch that connects the fold to the pitchfork.  The flip is
    reported as absent when it coincides with the fold within the grid
    resolution.

    ``workers`` > 1 evaluates the grid points in a thread pool; the
    result is assembled in grid order, so the output is identical for
    any worker count.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    if omega_grid.ndim != 1 or omega_grid.size < 2 \
            or np.any(np.diff(omega_grid) <= 0) or omega_grid[0] <= 0:
        raise ValueError("omega_grid must be increasing and positive")
    bound = _theta_limit(c1, theta_range)
    table = CoefficientTable(params, c1, bound)

    def at_omega(omega0):
        law = ControlLaw(c1=c1, omega0=omega0)
        return find_equilibria(params, law, theta_range, table=table)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(at_omega, omega_grid))
    else:
        results = [at_omega(omega0) for omega0 in omega_grid]
    per_omega = list(zip(omega_grid, results))

    omega_c = critical_speed(params, c1)

    def has_nontrivial(omega0):
        return bool(_nontrivial_roots(params, c1, omega0, theta_range,
                                      table))

    # fold: first appearance of nontrivial roots along the grid
    omega_c_prime = None
    counts = [sum(1 for p in pts if abs(p.theta0) > 1e-9)
              for _, pts in per_omega]
    for i in range(len(counts) - 1):
        if counts[i] == 0 and counts[i + 1] > 0:
            lo, hi = omega_grid[i], omega_grid[i + 1]
            # a symmetric fold creates four roots (inner and outer pair)
            # within one step; more than that means unresolved structure
            if counts[i + 1] > 4:
                warnings.warn("more nontrivial roots than one symmetric "
                              "fold can create appeared within one grid "
                              "step; refine the grid", GridTooCoarse)
            while hi - lo > 1e-4:
                mid = 0.5 * (lo + hi)
                if has_nontrivial(mid):
                    hi = mid
                else:
                    lo = mid
            omega_c_prime = 0.5 * (lo + hi)
            break

    # flip: stability change along the inner nontrivial branch
    omega_c_double_prime = None
    if omega_c_prime is not None:
        def inner_stable(omega0):
            roots = _nontrivial_roots(params, c1, omega0, theta_range,
                                      table)
            positive = [p for p in roots if p.theta0 > 0]
            if not positive:
                return None
            return min(positive,
                       key=lambda p: p.theta0).stability == "stable"

        flip_bracket = None
        probes = [o for o in omega_grid if o > omega_c_prime and o < omega_c]
        states = [(o, inner_stable(o)) for o in probes]
        states = [(o, s) for o, s in states if s is not None]
        for (o1, s1), (o2, s2) in zip(states[:-1], states[1:]):
            if s1 != s2:
                flip_bracket = (o1, o2)
                break
        if flip_bracket is None and states and states[0][1] is False:
            # branch is unstable at the first resolved point: the flip
            # sits between the fold and that point
            flip_bracket = (omega_c_prime + 1e-4, states[0][0])
            if inner_stable(flip_bracket[0]) is not False:
                flip_bracket = None
        if flip_bracket is not None:
            lo, hi = flip_bracket
            while hi - lo > 1e-4:
                mid = 0.5 * (lo + hi)
                s = inner_stable(mid)
                if s is False:
                    lo = mid
                else:
                    hi = mid
            omega_c_double_prime = 0.5 * (lo + hi)
            if omega_c_double_prime - omega_c_prime < 5e-3:
                omega_c_double_prime = None

    critical = CriticalSpeeds(omega_c=omega_c,
                              omega_c_prime=omega_c_prime,
                              omega_c_double_prime=omega_c_double_prime)
    branches = _assemble_branches(per_omega)
    return BifurcationDiagram(c1=c1, omega_grid=omega_grid,
                              branches=branches, critical=critical)


def write_bifurcation_csv(diagram, fh):
    """Write the branch points as CSV: omega0,theta0,stability."""
    fh.write("omega0,theta0,stability\n")
    for branch in diagram.branches:
        for omega0, theta0, stability in branch:
            fh.write(f"{omega0:.17g},{theta0:.17g},{stability}\n")


def write_critical_speeds_json(diagram, fh):
    """Write the critical speeds as a JSON sidecar."""
    json.dump(diagram.critical.as_dict(), fh, indent=2)
    fh.write("\n")
