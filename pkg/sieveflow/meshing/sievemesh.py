import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from types import MappingProxyType
from typing import Any, Final, Mapping

import numpy as np
from skfem import Mesh, MeshTet, MeshTri

from ..core.errors import ConfigurationError, MeshingError
from ..geometry import PerforationLayout, PipeParams
from .tags import FacetTag, MeshKind, Region

# Vertex snapping tolerance relative to the pipe size.
SNAP_TOL: Final[float] = 1e-9

_MESH_TYPES: Final[dict[int, type[Mesh]]] = {2: MeshTri, 3: MeshTet}

_logger = logging.getLogger("meshing")


@dataclass(frozen=True)
class MeshResolution:
    """Target cell sizes.

    Attributes:
        h_far: Cell size away from the holes.
        h_hole: Cell size at the hole rims.
        grading_rate: Geometric growth factor of the size field.
        extrusion_layers: Number of layers of thickness ``h_hole`` next to z = 0 (dim 3).
        quality_floor: Smallest admissible radius ratio.
        rim_refinement: Factor by which cells shrink below ``h_hole`` at the 2D hole
            endpoints, where the wall ends in a slit tip.
    """
    h_far: float = 0.25
    h_hole: float = 0.05
    grading_rate: float = 1.3
    extrusion_layers: int = 2
    quality_floor: float = 0.05
    rim_refinement: float = 8.0

    def __post_init__(self):
        if not (0.0 < self.h_hole <= self.h_far):
            raise ConfigurationError(f"require 0 < h_hole <= h_far, got {self.h_hole}, {self.h_far}")
        if not (1.0 < self.grading_rate <= 3.0):
            raise ConfigurationError(f"grading_rate must lie in (1, 3], got {self.grading_rate}")
        if self.extrusion_layers < 0:
            raise ConfigurationError(f"extrusion_layers must be >= 0, got {self.extrusion_layers}")
        if not (0.0 <= self.quality_floor < 1.0):
            raise ConfigurationError(f"quality_floor must lie in [0, 1), got {self.quality_floor}")
        if self.rim_refinement < 1.0:
            raise ConfigurationError(f"rim_refinement must be >= 1, got {self.rim_refinement}")

    def adapted_to(self, layout: PerforationLayout, hole_cells: float = 3.0) -> "MeshResolution":
        """Copy with ``h_hole`` lowered so the smallest hole spans ``hole_cells`` cells."""
        if not layout.n_holes:
            return self
        h_hole = min(self.h_hole, layout.min_hole_radius / hole_cells)
        return replace(self, h_hole=h_hole)

    def scaled(self, factor: float) -> "MeshResolution":
        return replace(self, h_far=self.h_far * factor, h_hole=self.h_hole * factor)

    def to_dict(self) -> dict[str, Any]:
        return {"h_far": self.h_far, "h_hole": self.h_hole, "grading_rate": self.grading_rate,
                "extrusion_layers": self.extrusion_layers, "quality_floor": self.quality_floor,
                "rim_refinement": self.rim_refinement}


def simplex_volumes(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Unsigned volumes (areas in 2D) of the simplices ``t`` over vertices ``p``."""
    dim = p.shape[0]
    edges = np.stack([p[:, t[k]] - p[:, t[0]] for k in range(1, dim + 1)], axis=-1)  # (dim, n, dim)
    return np.abs(np.linalg.det(np.moveaxis(edges, 0, 1))) / math.factorial(dim)


def radius_ratio(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Normalised radius ratio ``dim * r_in / r_circ`` (1 for regular simplices)."""
    dim = p.shape[0]
    x = [p[:, t[k]].T for k in range(dim + 1)]
    vol = simplex_volumes(p, t)
    if dim == 2:
        a = np.linalg.norm(x[1] - x[2], axis=1)
        b = np.linalg.norm(x[0] - x[2], axis=1)
        c = np.linalg.norm(x[0] - x[1], axis=1)
        r_in = 2.0 * vol / (a + b + c)
        r_circ = a * b * c / (4.0 * np.maximum(vol, np.finfo(float).tiny))
    else:
        u, v, w = x[1] - x[0], x[2] - x[0], x[3] - x[0]
        faces = [(x[1], x[2], x[3]), (x[0], x[2], x[3]), (x[0], x[1], x[3]), (x[0], x[1], x[2])]
        area = sum(0.5 * np.linalg.norm(np.cross(q1 - q0, q2 - q0), axis=1) for q0, q1, q2 in faces)
        r_in = 3.0 * vol / area
        num = (np.sum(u * u, axis=1)[:, None] * np.cross(v, w)
               + np.sum(v * v, axis=1)[:, None] * np.cross(w, u)
               + np.sum(w * w, axis=1)[:, None] * np.cross(u, v))
        r_circ = np.linalg.norm(num, axis=1) / (12.0 * np.maximum(vol, np.finfo(float).tiny))
    return dim * r_in / r_circ


@dataclass(frozen=True, eq=False)
class SieveMesh:
    """Tagged simplicial mesh of the perforated pipe or one of its halves.

    Wraps a scikit-fem mesh. Boundary facets are classified from geometry when
    the mesh is built; wall facets at z = 0 exist twice (one copy per side),
    hole facets once as interior facets.
    """
    mesh: Mesh
    kind: MeshKind
    pipe: PipeParams
    tags: Mapping[FacetTag, np.ndarray]
    regions: np.ndarray
    resolution: MeshResolution | None = None
    layout: PerforationLayout | None = None
    refinements: int = 0
    provenance: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_arrays(cls,
                    p: np.ndarray,
                    t: np.ndarray,
                    kind: MeshKind,
                    pipe: PipeParams,
                    resolution: MeshResolution | None = None,
                    layout: PerforationLayout | None = None,
                    refinements: int = 0,
                    provenance: Mapping[str, Any] | None = None) -> "SieveMesh":
        """Build and tag a mesh from vertex ``p`` (dim, n) and cell ``t`` (dim+1, m) arrays."""
        p = np.array(p, dtype=float, order="C")
        t = np.array(t, dtype=np.int64, order="C")
        if t.size == 0:
            raise MeshingError("empty mesh: no cells")
        if p.shape[0] != pipe.dim:
            raise MeshingError(f"vertex array has dimension {p.shape[0]}, pipe has {pipe.dim}")
        p = _snap_planes(p, pipe)
        mesh = _MESH_TYPES[pipe.dim](p, t)
        regions = _cell_regions(mesh, pipe, kind)
        tags = _tag_boundary(mesh, pipe, kind)
        frozen_tags = MappingProxyType({tag: _readonly(idx) for tag, idx in tags.items()})
        return cls(mesh, kind, pipe, frozen_tags, _readonly(regions), resolution, layout, refinements,
                   MappingProxyType(dict(provenance or {})))

    @property
    def dim(self) -> int:
        return self.pipe.dim

    @property
    def axis(self) -> int:
        return self.pipe.dim - 1

    @property
    def vertices(self) -> np.ndarray:
        return self.mesh.p

    @property
    def cells(self) -> np.ndarray:
        return self.mesh.t

    @property
    def n_cells(self) -> int:
        return self.mesh.t.shape[1]

    def facets_of(self, *tags: FacetTag) -> np.ndarray:
        """Facet indices carrying any of ``tags``."""
        parts = [self.tags.get(tag, np.empty(0, dtype=np.int64)) for tag in tags]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)

    def has_tag(self, tag: FacetTag) -> bool:
        return self.tags.get(tag, np.empty(0)).size > 0

    def cells_in(self, region: Region) -> np.ndarray:
        return np.flatnonzero(self.regions == int(region))

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        return simplex_volumes(self.mesh.p, self.mesh.t)

    @property
    def volume(self) -> float:
        return float(np.sum(self.cell_volumes))

    @cached_property
    def cell_centroids(self) -> np.ndarray:
        return self.mesh.p[:, self.mesh.t].mean(axis=1)

    def facet_area_vectors(self, facets: np.ndarray) -> np.ndarray:
        """Area-weighted normals (dim, k) of ``facets`` pointing away from their first cell."""
        p, f = self.mesh.p, self.mesh.facets[:, facets]
        if self.dim == 2:
            tangent = p[:, f[1]] - p[:, f[0]]
            vec = np.vstack([tangent[1], -tangent[0]])
        else:
            vec = 0.5 * np.cross(p[:, f[1]] - p[:, f[0]], p[:, f[2]] - p[:, f[0]], axis=0)
        inward = self.cell_centroids[:, self.mesh.f2t[0, facets]] - p[:, f[0]]
        flip = np.sum(vec * inward, axis=0) > 0.0
        vec[:, flip] *= -1.0
        return vec

    def facet_measures(self, facets: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.facet_area_vectors(facets), axis=0)

    def outward_normals(self, facets: np.ndarray) -> np.ndarray:
        vec = self.facet_area_vectors(facets)
        return vec / np.linalg.norm(vec, axis=0)

    def tag_measure(self, tag: FacetTag) -> float:
        facets = self.tags.get(tag)
        return 0.0 if facets is None or facets.size == 0 else float(np.sum(self.facet_measures(facets)))

    def plane_facets(self, z: float) -> np.ndarray:
        """Facets lying in the plane at axial position ``z``, each geometric facet once.

        A facet is kept when its neighbour below the plane exists; at the bottom
        of the mesh the neighbour above is used instead. Returns an empty array
        if the plane is not a union of facets.
        """
        tol = SNAP_TOL * max(self.pipe.h, self.pipe.R)
        zf = self.mesh.p[self.axis][self.mesh.facets]
        on_plane = np.flatnonzero(np.all(np.abs(zf - z) < tol, axis=0))
        if on_plane.size == 0:
            return on_plane
        f2t = self.mesh.f2t[:, on_plane]
        cz = self.cell_centroids[self.axis]
        below = np.zeros(on_plane.size, dtype=bool)
        above = np.zeros(on_plane.size, dtype=bool)
        for side in (0, 1):
            valid = f2t[side] >= 0
            below[valid] |= cz[f2t[side, valid]] < z
            above[valid] |= cz[f2t[side, valid]] > z
        return on_plane[below] if np.any(below) else on_plane[above]

    @cached_property
    def sigma_facets(self) -> np.ndarray:
        """The cross-section z = 0 (holes and wall), each geometric facet once."""
        return _readonly(self.plane_facets(0.0))

    def hole_facets(self) -> np.ndarray:
        """Interior facets on z = 0."""
        sigma = self.sigma_facets
        return sigma[self.mesh.f2t[1, sigma] >= 0]

    def check_sieve_conformity(self) -> list[int]:
        """Facets on z = 0 that are neither SIEVE nor shared by one MINUS and one PLUS cell."""
        tol = SNAP_TOL * max(self.pipe.h, self.pipe.R)
        zf = self.mesh.p[self.axis][self.mesh.facets]
        on_plane = np.flatnonzero(np.all(np.abs(zf) < tol, axis=0))
        sieve = set(self.tags.get(FacetTag.SIEVE, np.empty(0, dtype=np.int64)).tolist())
        bad = []
        for f in on_plane:
            if f in sieve:
                continue
            t0, t1 = self.mesh.f2t[:, f]
            if t1 < 0 or {int(self.regions[t0]), int(self.regions[t1])} != {int(Region.MINUS), int(Region.PLUS)}:
                bad.append(int(f))
        return bad

    def with_provenance(self, **items: Any) -> "SieveMesh":
        return SieveMesh(self.mesh, self.kind, self.pipe, self.tags, self.regions, self.resolution,
                         self.layout, self.refinements, MappingProxyType(dict(self.provenance) | items))

    def describe(self) -> dict[str, Any]:
        return {
            "kind": self.kind.name,
            "dim": self.dim,
            "vertices": int(self.mesh.p.shape[1]),
            "cells": self.n_cells,
            "refinements": self.refinements,
            "resolution": self.resolution.to_dict() if self.resolution else None,
            "n_holes": self.layout.n_holes if self.layout else 0,
        } | dict(self.provenance)


def refine_mesh(mesh: SieveMesh) -> SieveMesh:
    """Uniformly refine ``mesh`` once, keeping kind, tags and provenance."""
    fine = mesh.mesh.refined()
    refined = SieveMesh.from_arrays(fine.p, fine.t, mesh.kind, mesh.pipe, mesh.resolution, mesh.layout,
                                    mesh.refinements + 1, mesh.provenance)
    _logger.debug(f"[MESH] refined {mesh.n_cells} -> {refined.n_cells} cells")
    return refined


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def _snap_planes(p: np.ndarray, pipe: PipeParams) -> np.ndarray:
    tol = SNAP_TOL * max(pipe.h, pipe.R)
    z = p[pipe.dim - 1]
    for level in (-pipe.h, 0.0, pipe.h):
        z[np.abs(z - level) < tol] = level
    return p


def _cell_regions(mesh: Mesh, pipe: PipeParams, kind: MeshKind) -> np.ndarray:
    tol = SNAP_TOL * max(pipe.h, pipe.R)
    zt = mesh.p[pipe.dim - 1][mesh.t]
    straddling = np.flatnonzero((zt.min(axis=0) < -tol) & (zt.max(axis=0) > tol))
    if straddling.size:
        raise MeshingError(f"{straddling.size} cells straddle the sieve plane",
                           {"cells": straddling[:10].tolist()})
    regions = np.where(zt.mean(axis=0) < 0.0, int(Region.MINUS), int(Region.PLUS))
    expected = {MeshKind.HALF_MINUS: Region.MINUS, MeshKind.HALF_PLUS: Region.PLUS}.get(kind)
    if expected is not None and np.any(regions != int(expected)):
        raise MeshingError(f"{kind.name} mesh has cells on the wrong side of z = 0")
    return regions


def _tag_boundary(mesh: Mesh, pipe: PipeParams, kind: MeshKind) -> dict[FacetTag, np.ndarray]:
    """Classify every boundary facet by the plane it lies in."""
    axis = pipe.dim - 1
    tol = SNAP_TOL * max(pipe.h, pipe.R)
    boundary = mesh.boundary_facets()
    zf = mesh.p[axis][mesh.facets[:, boundary]]

    def on_level(level: float) -> np.ndarray:
        return np.all(np.abs(zf - level) < tol, axis=0)

    inlet, outlet, sieve = on_level(-pipe.h), on_level(pipe.h), on_level(0.0)
    lateral = ~(inlet | outlet | sieve)

    tags = {
        FacetTag.INLET: boundary[inlet],
        FacetTag.OUTLET: boundary[outlet],
        FacetTag.SIEVE: boundary[sieve],
        FacetTag.LATERAL: boundary[lateral],
    }
    if tags[FacetTag.INLET].size and not kind.has_inlet:
        raise MeshingError(f"{kind.name} mesh has facets on the inlet plane")
    if tags[FacetTag.OUTLET].size and not kind.has_outlet:
        raise MeshingError(f"{kind.name} mesh has facets on the outlet plane")
    if tags[FacetTag.SIEVE].size and kind is MeshKind.OPEN:
        raise MeshingError("open pipe mesh has wall facets on z = 0")

    # Lateral facets must be vertical; anything else is an untaggable facet.
    lat = tags[FacetTag.LATERAL]
    if lat.size:
        p, f = mesh.p, mesh.facets[:, lat]
        if pipe.dim == 2:
            nz = (p[0, f[1]] - p[0, f[0]]) / np.maximum(np.hypot(*(p[:, f[1]] - p[:, f[0]])), tol)
        else:
            n = np.cross(p[:, f[1]] - p[:, f[0]], p[:, f[2]] - p[:, f[0]], axis=0)
            nz = n[2] / np.linalg.norm(n, axis=0)
        bad = np.flatnonzero(np.abs(nz) > 1e-6)
        if bad.size:
            raise MeshingError(f"{bad.size} boundary facets cannot be tagged",
                               {"facets": lat[bad[:10]].tolist()})
    return tags
