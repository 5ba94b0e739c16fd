"""Exception types shared across the package."""


class SwarmAllocError(Exception):
    """Base class for all package errors."""


class ConfigError(SwarmAllocError):
    """Invalid or inconsistent configuration."""


class ShapeMismatch(SwarmAllocError):
    """Array arguments have incompatible shapes."""


class DimensionError(ShapeMismatch):
    """Action or state arrays have the wrong dimensions."""


class ConstraintViolation(SwarmAllocError):
    """An assignment matrix violates its feasibility constraints."""


class Infeasible(SwarmAllocError):
    """The problem admits no feasible assignment."""


class BudgetExceeded(SwarmAllocError):
    """A search or computation exceeded its configured budget."""


class NonFiniteState(SwarmAllocError):
    """A state update produced NaN or infinite entries."""


class NonFiniteOutput(SwarmAllocError):
    """A network forward pass produced NaN or infinite entries."""


class NonFiniteGradient(SwarmAllocError):
    """Backpropagation produced NaN or infinite gradient entries."""


class NonFiniteLoss(SwarmAllocError):
    """A training loss evaluated to NaN or infinity."""


class DegenerateFit(SwarmAllocError):
    """Not enough signal above the numerical floor to fit a decay rate."""
