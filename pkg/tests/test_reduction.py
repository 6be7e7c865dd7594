import math

import numpy as np
import pytest

from bikedyn import (ShapeCoords, coefficient_partials, config_from_shape,
                     full_bias_gravity, full_mass_matrix, potential_energy,
                     reduced_coeffs, reduced_dynamics_terms, total_energy,
                     transfer_matrix, verify_structural_identities)


def closed_form_partials(p):
    """Closed-form origin derivatives of c_133 and P_1.

    c133_delta = -(R_r cos(lam) / (R_f w)) * (I_fyy R_r + I_ryy R_f
        + m_f R_r R_f^2 + m_r R_r^2 R_f + m_b z_b R_r R_f
        + m_h z_h R_r R_f)
    P1_theta = (m_r R_r + m_f R_f + m_b z_b + m_h z_h) g
    P1_delta = -(g c cos(lam) / w) (m_b x_b + m_h x_h)
        - m_f g R_f sin(lam)
        + m_h g ((w + c - x_h) cos(lam) - z_h sin(lam))
    """
    cl, sl = math.cos(p.lam), math.sin(p.lam)
    c133_delta = -(p.R_r * cl / (p.R_f * p.w)) * (
        p.I_fyy * p.R_r + p.I_ryy * p.R_f + p.m_f * p.R_r * p.R_f ** 2
        + p.m_r * p.R_r ** 2 * p.R_f + p.m_b * p.z_b * p.R_r * p.R_f
        + p.m_h * p.z_h * p.R_r * p.R_f)
    P1_theta = (p.m_r * p.R_r + p.m_f * p.R_f + p.m_b * p.z_b
                + p.m_h * p.z_h) * p.g
    P1_delta = (-(p.g * p.c * cl / p.w) * (p.m_b * p.x_b + p.m_h * p.x_h)
                - p.m_f * p.g * p.R_f * sl
                + p.m_h * p.g * ((p.w + p.c - p.x_h) * cl - p.z_h * sl))
    return c133_delta, P1_theta, P1_delta


def test_structural_identities(params):
    report = verify_structural_identities(params, grid_n=7, extent=0.4)
    assert report.ok
    assert report.c333_everywhere < 1e-10
    assert report.P3_everywhere < 1e-10
    assert report.m_asymmetry < 1e-12
    assert report.m_min_eigenvalue > 0


def test_closed_form_origin_partials(params):
    partials = coefficient_partials(params, ShapeCoords(0.0, 0.0))
    c133_delta, P1_theta, P1_delta = closed_form_partials(params)
    assert partials.dc133_ddelta == pytest.approx(c133_delta, rel=1e-6)
    assert partials.dP1_dtheta == pytest.approx(P1_theta, rel=1e-6)
    assert partials.dP1_ddelta == pytest.approx(P1_delta, rel=1e-6)


def test_origin_partial_signs(params):
    """Sign facts the stability analysis relies on."""
    partials = coefficient_partials(params, ShapeCoords(0.0, 0.0))
    assert partials.dc133_ddelta < 0
    assert partials.dP1_dtheta > 0
    assert partials.dP1_ddelta < 0
    assert partials.c123_plus_c132 < 0   # c123(0,0) = c132(0,0) < 0


def test_parity_of_coefficients(params):
    """Lateral mirror: lean and steer flip, the wheel rate does not.

    With the signature S = diag(-1, -1, 1) on (theta_dot, delta_dot,
    phi_r_dot): m(-shape) = S m(shape) S, P(-shape) = S P(shape) up to
    the identically-zero third component, and the quadratic bias is
    equivariant, bias(-shape, S sd) = S bias(shape, sd)."""
    S = np.diag([-1.0, -1.0, 1.0])
    rng = np.random.default_rng(3)
    for _ in range(6):
        theta, delta = rng.uniform(-0.35, 0.35, 2)
        plus = reduced_coeffs(params, ShapeCoords(theta, delta))
        minus = reduced_coeffs(params, ShapeCoords(-theta, -delta))
        assert np.allclose(minus.m, S @ plus.m @ S, atol=1e-11)
        assert np.allclose(minus.P, S @ plus.P, atol=1e-10)
        sd = rng.uniform(-1, 1, 3)
        assert np.allclose(minus.bias(S @ sd), S @ plus.bias(sd),
                           atol=1e-10)


def test_bias_is_quadratic_form(params):
    """The polarization-extracted tensor reproduces the directly
    assembled bias at arbitrary quasi-velocities."""
    rng = np.random.default_rng(11)
    shape = ShapeCoords(0.17, -0.23)
    coeffs = reduced_coeffs(params, shape)
    for _ in range(5):
        sd = rng.uniform(-3, 3, 3)
        _, b, _, _, _ = reduced_dynamics_terms(params, shape, sd)
        assert np.allclose(coeffs.bias(sd), b, atol=1e-9)


def test_mass_matrix_projection(params):
    """Reduced inertia equals H^T M H of the full 9x9 inertia."""
    shape = ShapeCoords(0.12, 0.28)
    config = config_from_shape(params, shape)
    M = full_mass_matrix(params, config)
    H = transfer_matrix(params, config)
    coeffs = reduced_coeffs(params, shape)
    assert np.allclose(H.T @ M @ H, coeffs.m, atol=1e-11)


def test_gravity_projection(params):
    """Reduced gravity force equals H^T applied to the full gravity."""
    shape = ShapeCoords(-0.21, 0.14)
    config = config_from_shape(params, shape)
    _, grav = full_bias_gravity(params, config, np.zeros(9))
    H = transfer_matrix(params, config)
    coeffs = reduced_coeffs(params, shape)
    assert np.allclose(H.T @ grav, coeffs.P, atol=1e-10)


def test_gravity_is_potential_gradient(params):
    """P_1, P_2 are minus the shape gradient of the potential energy
    along the constrained manifold."""
    h = 1e-6
    for theta, delta in [(0.1, -0.15), (-0.3, 0.2)]:
        coeffs = reduced_coeffs(params, ShapeCoords(theta, delta))
        dV_dth = (potential_energy(params, ShapeCoords(theta + h, delta))
                  - potential_energy(params, ShapeCoords(theta - h, delta))
                  ) / (2 * h)
        dV_dde = (potential_energy(params, ShapeCoords(theta, delta + h))
                  - potential_energy(params, ShapeCoords(theta, delta - h))
                  ) / (2 * h)
        assert coeffs.P[0] == pytest.approx(-dV_dth, abs=1e-6)
        assert coeffs.P[1] == pytest.approx(-dV_dde, abs=1e-6)


def test_total_energy_kinetic_plus_potential(params):
    shape = ShapeCoords(0.05, 0.1)
    sd = np.array([0.3, -0.2, 4.0])
    coeffs = reduced_coeffs(params, shape)
    expected = 0.5 * sd @ coeffs.m @ sd + potential_energy(params, shape)
    assert total_energy(params, shape, sd) == pytest.approx(expected,
                                                            rel=1e-12)


def test_reference_potential_energy(params):
    """At the reference configuration the mass-center heights are the
    catalogued z values."""
    p = params
    expected = p.g * (p.m_r * p.R_r + p.m_b * p.z_b + p.m_h * p.z_h
                      + p.m_f * p.R_f)
    assert potential_energy(params, ShapeCoords(0.0, 0.0)) == \
        pytest.approx(expected, abs=1e-10)


def test_partials_cross_check_is_active(params):
    partials = coefficient_partials(params, ShapeCoords(0.3, -0.3),
                                    check=True)
    unchecked = coefficient_partials(params, ShapeCoords(0.3, -0.3),
                                     check=False)
    assert partials.dc133_dtheta == unchecked.dc133_dtheta
