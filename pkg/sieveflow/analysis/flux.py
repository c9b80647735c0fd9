import logging
from dataclasses import dataclass
from typing import Any, Iterable

import numpy as np
from skfem import asm
from skfem.quadrature import get_quadrature
from skfem.refdom import RefLine, RefTri

from ..core.errors import ConfigurationError
from ..core.utils import RunningStats
from ..discretization.assembly import mass, unit_load
from ..meshing import FacetTag, SieveMesh
from ..solve import FlowState, point_evaluation

_logger = logging.getLogger("flux")

# Quadrature degree on cross-sections that do not coincide with mesh facets.
SECTION_QUADRATURE = 6
DEFAULT_STATIONS = 5


def axial_range(mesh: SieveMesh) -> tuple[float, float]:
    lo, hi = mesh.kind.z_range
    return lo * mesh.pipe.h, hi * mesh.pipe.h


def _check_station(mesh: SieveMesh, s: float) -> None:
    lo, hi = axial_range(mesh)
    tol = 1e-12 * mesh.pipe.h
    if not lo - tol <= s <= hi + tol:
        raise ConfigurationError(f"station z={s} outside the mesh range [{lo}, {hi}]")


def _covers_section(mesh: SieveMesh, facets: np.ndarray) -> bool:
    bottom = float(np.sum(mesh.facet_measures(mesh.plane_facets(axial_range(mesh)[0]))))
    return abs(float(np.sum(mesh.facet_measures(facets))) - bottom) <= 1e-9 * bottom


def section_quadrature(mesh: SieveMesh, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Points ``(dim, n)`` and weights on the cross-section z = ``s``.

    The bottom facets of the mesh are lifted to ``s``; this gives a
    triangulation of the section independent of how cells cut it.
    """
    facets = mesh.plane_facets(axial_range(mesh)[0])
    corners = mesh.vertices[:-1, mesh.mesh.facets[:, facets]]      # (dim-1, dim, k)
    ref = RefLine if mesh.dim == 2 else RefTri
    X, W = get_quadrature(ref, SECTION_QUADRATURE)
    W = W / np.sum(W)
    origin = corners[:, 0, :]
    points = origin[:, None, :] + sum(
        (corners[:, j, :] - origin)[:, None, :] * X[j - 1][None, :, None] for j in range(1, mesh.dim))
    measures = mesh.facet_measures(facets)
    weights = W[:, None] * measures[None, :]
    pts = np.vstack([points.reshape(mesh.dim - 1, -1), np.full((1, points[0].size), s)])
    return pts, weights.reshape(-1)


def flux(state: FlowState, s: float) -> float:
    """Flow rate ``∫ u·k̂`` through the cross-section z = ``s``.

    Sections made of mesh facets are integrated with a facet basis, every
    geometric facet counted once; other sections evaluate the velocity at quadrature
    points of the lifted bottom facets.

    Raises:
        ConfigurationError: If ``s`` lies outside the axial range of the mesh.
    """
    mesh, space = state.mesh, state.space
    _check_station(mesh, s)
    uz = space.component(state.u, space.axis)
    facets = mesh.plane_facets(s)
    if facets.size and _covers_section(mesh, facets):
        return float(asm(unit_load, space.facet_basis(facets)) @ uz)
    points, weights = section_quadrature(mesh, s)
    return float(weights @ (point_evaluation(space.vbasis, mesh, points) @ uz))


def end_flux(state: FlowState) -> float:
    """Flow rate through the outlet (inlet on a mesh without outlet)."""
    lo, hi = axial_range(state.mesh)
    return flux(state, hi if state.mesh.has_tag(FacetTag.OUTLET) else lo)


@dataclass(frozen=True)
class FluxProfile:
    stations: tuple[float, ...]
    fluxes: tuple[float, ...]
    reference: float
    stats: RunningStats

    @property
    def spread(self) -> float:
        """Largest ``|F(s) − F_ref|``."""
        return self.stats.spread()

    def relative_spread(self, scale: float = 0.0) -> float:
        return self.spread / max(abs(self.reference), scale, np.finfo(float).tiny)

    def to_dict(self) -> dict[str, Any]:
        return {"stations": list(self.stations), "fluxes": list(self.fluxes), "reference": self.reference,
                "spread": self.spread, "stddev": self.stats.stddev()}


def flux_profile(state: FlowState, stations: Iterable[float] | None = None) -> FluxProfile:
    """Fluxes at several stations and their spread around the end-section flux.

    The reference is the flux through the outlet, or through the inlet on a
    mesh without outlet. End sections are boundary facets, where the discrete
    flux balance holds exactly.
    """
    lo, hi = axial_range(state.mesh)
    stations = tuple(float(s) for s in (np.linspace(lo, hi, DEFAULT_STATIONS) if stations is None else stations))
    fluxes = tuple(flux(state, s) for s in stations)
    ref = end_flux(state)
    stats = RunningStats(reference=ref).extend(fluxes)
    _logger.debug(f"[FLUX] {stats}")
    return FluxProfile(stations, fluxes, ref, stats)


def sigma_mass(state: FlowState):
    """Scalar P2 mass matrix on the cross-section z = 0, or None without one."""
    facets = state.mesh.sigma_facets
    return asm(mass, state.space.facet_basis(facets)) if facets.size else None


def trace_norm_sigma(state: FlowState) -> float:
    """``‖u‖_{L²(Σ)}`` over the whole plane z = 0, holes and wall."""
    m = sigma_mass(state)
    if m is None:
        return 0.0
    total = sum(float(uc @ (m @ uc)) for uc in state.space.components(state.u))
    return float(np.sqrt(max(total, 0.0)))
