class PhNetError(Exception):
    """Base class for all errors raised by phnet."""


class DimensionError(PhNetError, ValueError):
    pass


class CompatibilityError(PhNetError, ValueError):
    """A coupling matrix mixes channels that live on different intervals."""


class SingularCouplingError(PhNetError, ValueError):
    pass


class GridMismatchError(PhNetError, ValueError):
    pass


class BoundaryConditionError(PhNetError, ValueError):
    """A boundary condition cannot be brought into contraction form."""


class NotCertifiedError(PhNetError):
    """A solver was asked to run on a boundary condition that is not m-accretive."""


class InvariantViolation(PhNetError, AssertionError):
    """An internal identity that must hold by construction failed."""


class SolverError(PhNetError, RuntimeError):
    pass
