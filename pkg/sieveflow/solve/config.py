from dataclasses import asdict, dataclass, replace
from enum import StrEnum
from typing import Any

from ..core.errors import ConfigurationError


class SolverMode(StrEnum):
    STOKES = "stokes"
    NAVIER_STOKES = "navier_stokes"


class Scheme(StrEnum):
    PICARD = "picard"
    NEWTON = "newton"
    PICARD_THEN_NEWTON = "picard_then_newton"


class LinearSolverKind(StrEnum):
    DIRECT = "direct"
    KRYLOV = "krylov"


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the stationary solver.

    Attributes:
        tol: Relative nonlinear residual at which iteration stops.
        damping: Picard relaxation factor in (0, 1].
        newton_switch: Relative residual below which PICARD_THEN_NEWTON switches to Newton.
        linear_tol: Bound on the coupled linear residual relative to its rhs.
        patience: Consecutive growing iterations tolerated before giving up.
        growth_factor: A residual above this multiple of the best so far counts as growing.
    """
    mode: SolverMode = SolverMode.NAVIER_STOKES
    scheme: Scheme = Scheme.PICARD_THEN_NEWTON
    tol: float = 1e-10
    max_iter: int = 100
    damping: float = 0.7
    newton_switch: float = 1e-3
    linear_solver: LinearSolverKind = LinearSolverKind.DIRECT
    linear_tol: float = 1e-8
    patience: int = 5
    growth_factor: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "mode", SolverMode(self.mode))
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "linear_solver", LinearSolverKind(self.linear_solver))
        for name in ("tol", "linear_tol", "newton_switch"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"solver {name} must be > 0, got {getattr(self, name)}")
        if not 0 < self.damping <= 1:
            raise ConfigurationError(f"solver damping must lie in (0, 1], got {self.damping}")
        if self.max_iter < 1 or self.patience < 1:
            raise ConfigurationError("solver max_iter and patience must be >= 1")
        if not self.growth_factor > 1:
            raise ConfigurationError(f"solver growth_factor must be > 1, got {self.growth_factor}")

    def with_mode(self, mode: SolverMode | str) -> "SolverConfig":
        return replace(self, mode=SolverMode(mode))

    def to_dict(self) -> dict[str, Any]:
        return {k: str(v) if isinstance(v, StrEnum) else v for k, v in asdict(self).items()}
