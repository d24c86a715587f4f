"""Exception hierarchy shared across the package."""


class FuncateError(Exception):
    """Base class for all errors raised by funcate."""


class InvalidArgumentError(FuncateError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientDataError(FuncateError, ValueError):
    """Too few subjects (or too little variation) to carry out a fit."""


class InsufficientComponentsError(InsufficientDataError):
    """The functional covariate has no variation left after centering."""


class SingularDesignError(FuncateError):
    """The design matrix is rank deficient."""


class SeparationError(FuncateError):
    """The logistic likelihood has no finite maximizer (quasi-)separation."""


class BalanceNotAttainedError(FuncateError):
    """The covariate balancing equations could not be solved."""


class InvalidSelectionError(FuncateError, ValueError):
    """A truncation rule selected no functional components."""


class BootstrapUnstableError(FuncateError):
    """Too many bootstrap resamples failed to fit."""


class NoValidRunsError(FuncateError):
    """No finite estimates are available for aggregation."""
