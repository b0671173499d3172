"""Error helpers.

Library code raises through these helpers instead of constructing the
exception classes inline, so messages stay uniform:

    from foliate.exceptions import domain_error, model_error, ...

    raise model_error("bundle-like residual 3.2e-04 exceeds 1e-08")
"""

from foliate.exceptions.errors import (
    BlowUpError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    FoliateError,
    ModelError,
    NumericError,
    OutputError,
    UsageError,
)


def domain_error(detail: str = "Point outside the chart domain") -> DomainError:
    return DomainError(detail)


def configuration_error(detail: str = "Invalid configuration") -> ConfigurationError:
    return ConfigurationError(detail)


def model_error(detail: str = "Scenario violates a model assumption") -> ModelError:
    return ModelError(detail)


def numeric_error(detail: str = "Numerical failure") -> NumericError:
    return NumericError(detail)


def usage_error(detail: str = "Invalid use of the API") -> UsageError:
    return UsageError(detail)


def output_error(detail: str = "Cannot write output") -> OutputError:
    return OutputError(detail)


def blow_up(detail: str, last_good_time: float) -> BlowUpError:
    return BlowUpError(detail, last_good_time)


def convergence_error(detail: str = "Iteration did not converge") -> ConvergenceError:
    return ConvergenceError(detail)


__all__ = [
    "BlowUpError",
    "ConfigurationError",
    "ConvergenceError",
    "DomainError",
    "FoliateError",
    "ModelError",
    "NumericError",
    "OutputError",
    "UsageError",
    "blow_up",
    "configuration_error",
    "convergence_error",
    "domain_error",
    "model_error",
    "numeric_error",
    "output_error",
    "usage_error",
]
