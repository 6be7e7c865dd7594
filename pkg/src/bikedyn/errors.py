"""Exception types raised by the bikedyn package."""


class BikedynError(Exception):
    """Base class for all bikedyn errors."""


class DomainError(BikedynError):
    """Shape coordinates outside the admissible lean/steer domain."""


class NoContactSolution(BikedynError):
    """The wheel-ground contact equations could not be solved."""


class SingularConstraintJacobian(BikedynError):
    """The implicit-function system of the contact constraints is rank
    deficient."""


class SingularContact(BikedynError):
    """The rolling-constraint system is rank deficient (degenerate
    geometry)."""


class SingularMass(BikedynError):
    """The effective lean inertia is (numerically) zero."""


class IntegratorFailure(BikedynError):
    """Adaptive step size collapsed or the integrator reported failure."""


class NotAnEquilibrium(BikedynError):
    """The supplied lean angle does not satisfy the equilibrium equation."""


class TrivialUnstable(BikedynError):
    """The upright equilibrium is not stable, so no basin estimate exists."""


class NoCriticalSpeed(BikedynError):
    """The closed-form critical-speed radicand is not positive."""


class SingularKKT(BikedynError):
    """The KKT system of the full-coordinate simulator is singular."""


class ProjectionFailure(BikedynError):
    """Constraint projection in the full-coordinate simulator failed."""


class ParseError(BikedynError):
    """Parameter file could not be parsed or is missing required keys."""


class ValidationError(BikedynError):
    """Parameter values violate a physical invariant."""


class NumericalInconsistency(BikedynError):
    """Two numerical estimates that must agree failed their cross-check."""
