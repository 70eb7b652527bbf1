"""Exception types raised across the package."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class ShapeError(ValueError):
    """Mismatched array or trace shapes."""


class AssemblyError(ValueError):
    """A cell description does not produce a square boundary system."""


class NotAnEigenvalueError(ValueError):
    """The matrix is not rank deficient at the requested tolerance."""


class UnsupportedReductionError(ValueError):
    """The secular function cannot be reduced to the two-phase torus."""


class NonConvergenceError(RuntimeError):
    """An iterative refinement exhausted its budget."""
