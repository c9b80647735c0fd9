import math
from dataclasses import dataclass
from typing import Final

from ..core.errors import ParameterError

CROSS_SECTION_DIMS: Final[tuple[int, ...]] = (2, 3)


def hole_radius(epsilon: float, alpha: float) -> float:
    """Hole size scale ``r_eps = exp(-epsilon**-alpha)``.

    Args:
        epsilon: Spacing scale in (0, 1).
        alpha: Exponent, positive.

    Raises:
        ParameterError: If epsilon or alpha is outside its domain.
    """
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not alpha > 0.0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    return math.exp(-epsilon ** (-alpha))


def max_hole_count(R: float, delta1: float, epsilon: float) -> int:
    """Upper bound ``floor((R / (delta1 * epsilon))**2)`` on the number of holes."""
    if min(R, delta1, epsilon) <= 0.0:
        raise ParameterError(f"R, delta1 and epsilon must be positive, got {R}, {delta1}, {epsilon}")
    return math.floor((R / (delta1 * epsilon)) ** 2)


@dataclass(frozen=True)
class PipeParams:
    """Straight pipe of cross-section radius ``R`` spanning ``z`` in ``(-h, h)``.

    ``dim=3`` is the circular pipe; ``dim=2`` the channel ``(-R, R) x (-h, h)``.
    The last coordinate is always the axis.
    """
    R: float = 1.0
    h: float = 2.0
    dim: int = 2

    def __post_init__(self):
        if self.dim not in CROSS_SECTION_DIMS:
            raise ParameterError(f"dim must be one of {CROSS_SECTION_DIMS}, got {self.dim}")
        if not (self.h > self.R > 0.0):
            raise ParameterError(f"require h > R > 0, got R={self.R}, h={self.h}")

    @property
    def axis(self) -> int:
        return self.dim - 1

    @property
    def section_measure(self) -> float:
        """Length (2D) or area (3D) of the cross-section."""
        return 2.0 * self.R if self.dim == 2 else math.pi * self.R ** 2

    @property
    def volume(self) -> float:
        return 2.0 * self.h * self.section_measure

    @property
    def lateral_measure(self) -> float:
        return 2.0 * (2.0 * self.h) if self.dim == 2 else 2.0 * math.pi * self.R * 2.0 * self.h


@dataclass(frozen=True)
class PerforationParams:
    """Scales of the perforated wall at level ``epsilon``."""
    epsilon: float
    alpha: float = 1.0
    delta0: float = 0.5
    delta1: float = 0.2
    epsilon_star: float = 0.9

    def __post_init__(self):
        if not (0.0 < self.epsilon <= self.epsilon_star < 1.0):
            raise ParameterError(
                f"require 0 < epsilon <= epsilon_star < 1, got epsilon={self.epsilon}, "
                f"epsilon_star={self.epsilon_star}")
        for name in ("alpha", "delta0", "delta1"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def r_eps(self) -> float:
        return hole_radius(self.epsilon, self.alpha)

    @property
    def guard_radius(self) -> float:
        """Radius ``delta0 * r_eps`` of the guard disk around each hole."""
        return self.delta0 * self.r_eps

    @property
    def spacing_radius(self) -> float:
        """Radius ``delta1 * epsilon`` of the spacing disk around each hole."""
        return self.delta1 * self.epsilon

    @property
    def default_hole_radius(self) -> float:
        """Hole radius (3D) or half length (2D) used by generated layouts."""
        return 0.5 * self.guard_radius

    def with_epsilon(self, epsilon: float) -> "PerforationParams":
        return PerforationParams(epsilon, self.alpha, self.delta0, self.delta1, self.epsilon_star)
