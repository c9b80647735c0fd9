import json
import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any, Final, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ..core.errors import ConfigurationError, EmptyLayoutError, OutputError
from ..core.utils import atomic_write_json, read_text
from .params import PerforationParams, PipeParams, max_hole_count

LAYOUT_FORMAT: Final[str] = "sieveflow-layout/1"
# Relative slack for the strict inequalities, so touching configurations are reported.
_STRICT_TOL: Final[float] = 1e-12

_logger = logging.getLogger("geometry")


class LayoutStrategy(StrEnum):
    SQUARE_LATTICE = "square_lattice"
    HEX_LATTICE = "hex_lattice"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class PerforationLayout:
    """Hole centres and radii of one perforated wall.

    In 3D each hole is the disk ``D(centers[n], hole_radii[n])`` of the
    cross-section; in 2D it is the interval ``centers[n] +- hole_radii[n]``.
    """
    params: PerforationParams
    pipe: PipeParams
    centers: tuple[tuple[float, ...], ...] = ()
    hole_radii: tuple[float, ...] = ()
    strategy: LayoutStrategy = LayoutStrategy.EXPLICIT

    def __post_init__(self):
        if len(self.centers) != len(self.hole_radii):
            raise ConfigurationError(
                f"{len(self.centers)} centers but {len(self.hole_radii)} hole radii")
        for c in self.centers:
            if len(c) != self.pipe.dim - 1:
                raise ConfigurationError(f"center {c} has wrong dimension for a dim={self.pipe.dim} pipe")
        if any(r <= 0.0 for r in self.hole_radii):
            raise ConfigurationError("hole radii must be positive")

    @property
    def n_holes(self) -> int:
        return len(self.centers)

    @property
    def center_array(self) -> np.ndarray:
        """Centres as an array of shape ``(n_holes, dim - 1)``."""
        return np.asarray(self.centers, dtype=float).reshape(self.n_holes, self.pipe.dim - 1)

    @property
    def min_hole_radius(self) -> float:
        return min(self.hole_radii) if self.hole_radii else math.inf

    def open_area(self) -> float:
        """Total measure of the holes in the cross-section."""
        radii = np.asarray(self.hole_radii)
        if self.pipe.dim == 2:
            return float(np.sum(2.0 * radii))
        return float(np.sum(math.pi * radii ** 2))

    def sieve_measure(self) -> float:
        """Measure of the solid part of the wall."""
        return self.pipe.section_measure - self.open_area()

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": LAYOUT_FORMAT,
            "R": self.pipe.R,
            "h": self.pipe.h,
            "dim": self.pipe.dim,
            "epsilon": self.params.epsilon,
            "alpha": self.params.alpha,
            "delta0": self.params.delta0,
            "delta1": self.params.delta1,
            "epsilon_star": self.params.epsilon_star,
            "r_eps": self.params.r_eps,
            "strategy": str(self.strategy),
            "centers": [list(c) for c in self.centers],
            "hole_radii": list(self.hole_radii),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "PerforationLayout":
        if doc.get("format") != LAYOUT_FORMAT:
            raise OutputError(f"Unsupported layout format {doc.get('format')!r}")
        try:
            pipe = PipeParams(R=doc["R"], h=doc["h"], dim=doc["dim"])
            params = PerforationParams(doc["epsilon"], doc["alpha"], doc["delta0"], doc["delta1"],
                                       doc["epsilon_star"])
            return cls(params, pipe,
                       centers=tuple(tuple(float(x) for x in c) for c in doc["centers"]),
                       hole_radii=tuple(float(r) for r in doc["hole_radii"]),
                       strategy=LayoutStrategy(doc.get("strategy", LayoutStrategy.EXPLICIT)))
        except KeyError as e:
            raise OutputError(f"Layout document misses key {e}") from e

    def write(self, path: Path) -> None:
        atomic_write_json(path, self.to_dict())

    @classmethod
    def read(cls, path: Path) -> "PerforationLayout":
        try:
            return cls.from_dict(json.loads(read_text(path)))
        except json.JSONDecodeError as e:
            raise OutputError(f"Malformed layout file {path}: {e}") from e


@dataclass(frozen=True)
class Violation:
    kind: str
    indices: tuple[int, ...] = ()
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "violations": [{"kind": v.kind, "indices": list(v.indices), "detail": v.detail}
                           for v in self.violations],
        }


def validate_layout(layout: PerforationLayout) -> ValidationReport:
    """Check the guard, spacing, interiority and count rules of a layout.

    Violations are collected, never raised. Pairwise spacing problems carry
    the offending index pair.
    """
    params, pipe = layout.params, layout.pipe
    guard, spacing = params.guard_radius, params.spacing_radius
    violations: list[Violation] = []

    if guard >= spacing * (1.0 - _STRICT_TOL):
        violations.append(Violation("guard_exceeds_spacing", (),
                                    f"delta0*r_eps={guard:.6g} >= delta1*epsilon={spacing:.6g}"))
    for n, rho in enumerate(layout.hole_radii):
        if rho >= guard * (1.0 - _STRICT_TOL):
            violations.append(Violation("hole_exceeds_guard", (n,),
                                        f"radius {rho:.6g} >= guard {guard:.6g}"))

    centers = layout.center_array
    if layout.n_holes:
        reach = np.linalg.norm(centers, axis=1) + spacing
        for n in np.flatnonzero(reach >= pipe.R * (1.0 - _STRICT_TOL)):
            violations.append(Violation("not_strictly_interior", (int(n),),
                                        f"|xi|+delta1*epsilon={reach[n]:.6g} >= R={pipe.R:.6g}"))
        pairs = cKDTree(centers).query_pairs(r=2.0 * spacing * (1.0 + _STRICT_TOL))
        for n, m in sorted(pairs):
            dist = float(np.linalg.norm(centers[n] - centers[m]))
            violations.append(Violation("spacing_overlap", (n, m),
                                        f"|xi_n-xi_m|={dist:.6g} <= 2*delta1*epsilon={2 * spacing:.6g}"))

    bound = max_hole_count(pipe.R, params.delta1, params.epsilon)
    if layout.n_holes > bound:
        violations.append(Violation("count_exceeded", (), f"N={layout.n_holes} > {bound}"))
    return ValidationReport(tuple(violations))


def _lattice_points(pipe: PipeParams, pitch: float, limit: float, hexagonal: bool) -> list[tuple[float, ...]]:
    n = int(math.ceil(limit / pitch)) + 1
    if pipe.dim == 2:
        return [(i * pitch,) for i in range(-n, n + 1) if abs(i * pitch) < limit * (1.0 - _STRICT_TOL)]
    row = pitch * math.sqrt(3.0) / 2.0 if hexagonal else pitch
    n_rows = int(math.ceil(limit / row)) + 1
    points = []
    for j in range(-n_rows, n_rows + 1):
        shift = 0.5 * pitch if (hexagonal and j % 2) else 0.0
        for i in range(-n - 1, n + 2):
            x, y = i * pitch + shift, j * row
            if math.hypot(x, y) < limit * (1.0 - _STRICT_TOL):
                points.append((x, y))
    return points


def generate_layout(pipe: PipeParams,
                    params: PerforationParams,
                    strategy: LayoutStrategy | str = LayoutStrategy.SQUARE_LATTICE,
                    centers: Sequence[Sequence[float]] | None = None,
                    margin: float = 0.05,
                    hole_radii: Iterable[float] | None = None) -> PerforationLayout:
    """Place holes on the wall of the pipe.

    Lattice strategies use pitch ``2 * delta1 * epsilon * (1 + margin)`` and keep
    the centres with ``|xi| + delta1 * epsilon < R``. Holes get radius
    ``delta0 * r_eps / 2`` unless ``hole_radii`` is given (explicit only).

    Raises:
        EmptyLayoutError: A lattice strategy found no admissible centre.
        ConfigurationError: Bad strategy arguments or an explicit layout that fails validation.
    """
    strategy = LayoutStrategy(strategy)
    rho = params.default_hole_radius
    if strategy is LayoutStrategy.EXPLICIT:
        if centers is None:
            raise ConfigurationError("explicit strategy needs a list of centers")
        points = [tuple(float(x) for x in c) for c in centers]
        radii = tuple(hole_radii) if hole_radii is not None else (rho,) * len(points)
    else:
        if centers is not None or hole_radii is not None:
            raise ConfigurationError(f"{strategy} does not accept explicit centers or radii")
        if not margin > 0.0:
            raise ConfigurationError(f"lattice margin must be positive, got {margin}")
        pitch = 2.0 * params.spacing_radius * (1.0 + margin)
        limit = pipe.R - params.spacing_radius
        points = _lattice_points(pipe, pitch, limit, strategy is LayoutStrategy.HEX_LATTICE) if limit > 0 else []
        if not points:
            raise EmptyLayoutError(
                f"no admissible hole center for epsilon={params.epsilon} (delta1*epsilon="
                f"{params.spacing_radius:.4g}, R={pipe.R})")
        radii = (rho,) * len(points)

    layout = PerforationLayout(params, pipe, tuple(points), tuple(float(r) for r in radii), strategy)
    report = validate_layout(layout)
    if not report.ok:
        raise ConfigurationError(
            "invalid layout: " + "; ".join(f"{v.kind}{list(v.indices)} {v.detail}" for v in report.violations))
    _logger.info(f"[LAYOUT] {strategy} epsilon={params.epsilon} r_eps={params.r_eps:.4e} N={layout.n_holes}")
    return layout
