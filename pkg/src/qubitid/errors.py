"""Exception types raised across the package."""


class QubitIdError(Exception):
    """Base class for all package errors."""


class ValidationError(QubitIdError, ValueError):
    """Invalid parameters, boxes, times or configuration."""


class InfeasibleBranchError(ValidationError):
    """The requested branch index cannot contain the frequency interval."""


class InversionDomainError(QubitIdError, ValueError):
    """Observed frequencies fall outside the domain of the ideal inverse map."""


class DegenerateObservableError(InversionDomainError):
    """p2 too close to 0 or 1 for the transverse observables to be extracted."""


class SingularCovarianceError(QubitIdError, ValueError):
    pass


class SingularJacobianError(QubitIdError, ValueError):
    pass


class NoSurvivorError(QubitIdError):
    """Adaptive filtering rejected every candidate."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
