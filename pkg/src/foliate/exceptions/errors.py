"""Error taxonomy for the geometry engine.

Every failure the library can signal is a `FoliateError`. Each kind carries
the process exit code the CLI maps it to, so commands never translate
exceptions by hand.
"""


class FoliateError(Exception):
    """Base class; `detail` is the human-readable diagnostic."""

    kind = "error"
    exit_code = 2

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


class DomainError(FoliateError):
    kind = "domain error"


class ConfigurationError(FoliateError):
    kind = "configuration error"


class ModelError(FoliateError):
    kind = "model error"


class NumericError(FoliateError):
    kind = "numeric error"


class UsageError(FoliateError):
    kind = "usage error"


class OutputError(FoliateError):
    kind = "output error"


class BlowUpError(FoliateError):
    """The flow lost positive definiteness and step halving could not recover."""

    kind = "blow-up"
    exit_code = 3

    def __init__(self, detail: str, last_good_time: float) -> None:
        super().__init__(detail)
        self.last_good_time = last_good_time

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail} (last good time {self.last_good_time:.6g})"


class ConvergenceError(FoliateError):
    kind = "convergence failure"
    exit_code = 4
