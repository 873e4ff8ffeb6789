"""Exception and warning types shared across the package.

Validation errors (bad parameters, config, or input data) derive from
``ValidationError``; failures that occur while running an otherwise valid
computation derive from ``RunFailure``. The CLI maps the former to exit
code 1 and the latter to exit code 2.
"""


class ValidationError(ValueError):
    """Input rejected before any computation ran."""


class ParameterError(ValidationError):
    """A physical parameter is outside its allowed domain."""


class ConfigError(ValidationError):
    """Configuration file, key, or CLI flag is invalid."""


class DataError(ValidationError):
    """Input data (traces, series) is malformed."""


class RunFailure(RuntimeError):
    """A computation on valid inputs did not produce a usable result."""


class SingularSystemError(RunFailure):
    """Steady-state linear system is singular or near-degenerate."""


class IntegrationError(RunFailure):
    """Time propagation left the physical state space."""


class DetectionError(RunFailure):
    """No dominant spectral peak in the searched band."""


class FitError(RunFailure):
    """Nonlinear fit failed to converge or returned an invalid optimum."""


class InsufficientDataError(RunFailure):
    """Record too short for the requested estimate."""


class SweepRangeError(RunFailure):
    """A swept grid does not bracket the feature it must locate."""


class NonlinearResponseError(RunFailure):
    """Response grid extends beyond the linear regime; shrink it."""


class LinearizationWarning(UserWarning):
    """First-order expansion evaluated outside its validity range."""
