"""Reduced nonlinear dynamics of the Whipple bicycle under proportional
steer control.

The package assembles the three-quasi-velocity reduced equations of
motion of the four-body Whipple bicycle numerically, analyzes the
equilibria and bifurcations of the controlled lean dynamics under the
steering law ``delta = c1 * theta`` at constant rear-wheel rate, and
simulates controlled and free motions, including planar path
reconstruction and an independent full-coordinate verification oracle.
"""

from .errors import (BikedynError, DomainError, IntegratorFailure,
                     NoContactSolution, NoCriticalSpeed, NotAnEquilibrium,
                     NumericalInconsistency, ParseError, ProjectionFailure,
                     SingularConstraintJacobian, SingularContact,
                     SingularKKT, SingularMass, TrivialUnstable,
                     ValidationError)
from .kinematics import (Config, QuasiVelocities, ShapeCoords,
                         config_from_shape, constraint_matrix,
                         contact_points, holonomic_partials, solve_holonomic,
                         transfer_matrix)
from .motion import (ControlLaw, FreeTrajectory, LeanState, TorqueSample,
                     Trajectory, control_torques, lean_acceleration,
                     reconstruct_path, simulate, simulate_free,
                     write_path_csv, write_trajectory_csv)
from .oracle import (FullState, FullTrajectory, full_state_from_reduced,
                     simulate_dae)
from .parameters import BicycleParams, load_params, paper_table1
from .reduction import (CoefficientPartials, ReducedCoefficients,
                        StructuralReport, coefficient_partials,
                        full_bias_gravity, full_mass_matrix,
                        potential_energy, reduced_coeffs,
                        reduced_dynamics_terms, total_energy,
                        verify_structural_identities)
from .stability import (BifurcationDiagram, CoefficientTable, CriticalSpeeds,
                        EquilibriumPoint, GridTooCoarse, LinearCoeffs,
                        basin_radius_estimate, bifurcation_diagram,
                        critical_speed, find_equilibria, hurwitz_stable,
                        linearize_at, linearize_trivial,
                        write_bifurcation_csv, write_critical_speeds_json)

__version__ = "1.0.0"

__all__ = [
    "BicycleParams", "BifurcationDiagram", "BikedynError",
    "CoefficientPartials", "CoefficientTable", "Config", "ControlLaw",
    "CriticalSpeeds", "DomainError", "EquilibriumPoint", "FreeTrajectory",
    "FullState", "FullTrajectory", "GridTooCoarse", "IntegratorFailure",
    "LeanState", "LinearCoeffs", "NoContactSolution", "NoCriticalSpeed",
    "NotAnEquilibrium", "NumericalInconsistency", "ParseError",
    "ProjectionFailure", "QuasiVelocities", "ReducedCoefficients",
    "ShapeCoords", "SingularConstraintJacobian", "SingularContact",
    "SingularKKT", "SingularMass", "StructuralReport", "TorqueSample",
    "Trajectory", "TrivialUnstable", "ValidationError",
    "basin_radius_estimate", "bifurcation_diagram", "coefficient_partials",
    "config_from_shape", "constraint_matrix", "contact_points",
    "control_torques", "critical_speed", "find_equilibria",
    "full_bias_gravity", "full_mass_matrix", "full_state_from_reduced",
    "holonomic_partials", "hurwitz_stable", "lean_acceleration",
    "linearize_at", "linearize_trivial", "load_params", "paper_table1",
    "potential_energy", "reconstruct_path", "reduced_coeffs",
    "reduced_dynamics_terms", "simulate", "simulate_dae", "simulate_free",
    "solve_holonomic", "total_energy", "transfer_matrix",
    "verify_structural_identities", "write_bifurcation_csv",
    "write_path_csv", "write_critical_speeds_json", "write_trajectory_csv",
]
