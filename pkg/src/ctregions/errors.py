"""Exception hierarchy shared by all modules."""


class CtRegionsError(Exception):
    """Base class for all package errors."""


class DimensionError(CtRegionsError, ValueError):
    pass


class DomainError(CtRegionsError, ValueError):
    pass


class SingularityError(CtRegionsError, ArithmeticError):
    """A linear system is singular or numerically rank deficient."""

    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


class ModelViolationError(CtRegionsError):
    """The single-switch model does not describe an optimal trajectory."""

    def __init__(self, message, probes=None):
        super().__init__(message)
        self.probes = probes or []


class InconsistencyError(CtRegionsError):
    """A simulated trajectory violates the optimality conditions."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BracketError(CtRegionsError, ValueError):
    pass


class InsufficientSamplesError(CtRegionsError):
    def __init__(self, message, accepted=0, required=0, drawn=0):
        super().__init__(message)
        self.accepted = accepted
        self.required = required
        self.drawn = drawn


class OracleFailure(CtRegionsError):
    pass


class BudgetError(CtRegionsError):
    pass


class ModelError(CtRegionsError):
    pass


class ConfigError(CtRegionsError, ValueError):
    pass
