# sieveflow/core/errors.py
# Exception hierarchy shared by every stage. Each class knows the CLI exit code it maps to.

from typing import Any, ClassVar


class SieveflowError(Exception):
    """Base class for all sieveflow failures.

    Attributes:
        EXIT_CODE: Process exit code used by the command line front end.
        KIND: Short machine readable error kind written to the error JSON.
    """
    EXIT_CODE: ClassVar[int] = 1
    KIND: ClassVar[str] = "error"

    @property
    def exit_code(self) -> int:
        return self.EXIT_CODE

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.KIND, "error": type(self).__name__, "message": str(self)}


class ConfigurationError(SieveflowError, ValueError):
    EXIT_CODE = 2
    KIND = "config"


class ParameterError(ConfigurationError):
    """A geometry formula was evaluated outside its domain."""
    KIND = "parameter"


class EmptyLayoutError(ConfigurationError):
    KIND = "empty_layout"


class ResolutionError(ConfigurationError):
    KIND = "resolution"


class NumericalError(SieveflowError):
    EXIT_CODE = 3
    KIND = "numerical"


class MeshingError(NumericalError):
    """Mesh generation produced an unusable cell complex.

    Args:
        message: Description of the failure.
        report: Optional worst-cell report (index, quality, centroid).
    """
    KIND = "meshing"

    def __init__(self, message: str, report: dict[str, Any] | None = None):
        super().__init__(message)
        self.report = report or {}

    def to_dict(self) -> dict[str, Any]:
        return super().to_dict() | {"report": self.report}


class SolverError(NumericalError):
    KIND = "solver"


class NonconvergenceError(SolverError):
    """The nonlinear iteration failed to reach its tolerance.

    Args:
        message: Description of the failure.
        history: Relative residual per iteration up to the failure.
    """
    KIND = "nonconvergence"

    def __init__(self, message: str, history: list[float] | tuple[float, ...] = ()):
        super().__init__(message)
        self.history = tuple(float(r) for r in history)

    def to_dict(self) -> dict[str, Any]:
        return super().to_dict() | {"history": list(self.history)}


class EigenSolverError(NumericalError):
    KIND = "eigensolver"


class FeasibilityError(NumericalError):
    """Divergence data is incompatible with a clamped velocity on some mesh component."""
    KIND = "feasibility"


class OutputError(SieveflowError):
    EXIT_CODE = 4
    KIND = "io"


class PartialSweepError(SieveflowError):
    """A sweep stage failed; ``report`` holds the rows finished before the failure."""
    KIND = "sweep"

    def __init__(self, message: str, cause: SieveflowError, report: Any):
        super().__init__(message)
        self.cause = cause
        self.report = report

    @property
    def exit_code(self) -> int:
        return self.cause.exit_code

    def to_dict(self) -> dict[str, Any]:
        return self.cause.to_dict() | {"partial_rows": len(getattr(self.report, "rows", ()))}
