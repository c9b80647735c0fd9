"""Mesh generation for the perforated pipe and its halves.

Every mesh is built from the lower half z in (-h, 0). In 2D this is a
constrained Delaunay triangulation of the rectangle whose top edge is split at
the hole endpoints. In 3D the cross-section disk is triangulated with the hole
rims as constrained polygons and extruded into prisms graded toward z = 0,
each prism split into three tetrahedra by the sorted-index rule so that
neighbouring prisms share their quad diagonals.

The upper half is the mirror image. Merging only the z = 0 vertices that lie
on or inside a hole rim leaves the wall as a slit with one facet copy per
side, while the holes become interior facets.
"""
import logging
import math
from typing import Callable, Final

import numpy as np
import triangle as tr
from scipy.spatial import cKDTree

from ..core.errors import MeshingError, ResolutionError
from ..geometry import PerforationLayout, PipeParams
from .quality import check_quality
from .sievemesh import SNAP_TOL, MeshResolution, SieveMesh
from .tags import MeshKind, Region

_MIN_ANGLE: Final[float] = 28.0
_MAX_REFINE_PASSES: Final[int] = 20
_AREA_SLACK: Final[float] = 1.5
_MIN_LATERAL_SEGMENTS: Final[int] = 48
_MIN_RIM_SEGMENTS: Final[int] = 12
_SUBDIVISION_SAMPLES: Final[int] = 257

_logger = logging.getLogger("meshing")

SizeFn = Callable[[np.ndarray], np.ndarray]


def _equilateral_area(size: np.ndarray | float) -> np.ndarray | float:
    return math.sqrt(3.0) / 4.0 * np.square(size)


def _triangle_areas(V: np.ndarray, T: np.ndarray) -> np.ndarray:
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    return 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def size_field(res: MeshResolution,
               rim_points: np.ndarray | None = None,
               rim_circles: tuple[np.ndarray, np.ndarray] | None = None,
               rim_size: float | None = None) -> SizeFn:
    """Graded target size ``min(h_far, h_rim + (g - 1) d)``.

    ``d`` is the distance to the nearest rim point (2D hole endpoints) or to
    the nearest rim circle (3D cross-section) and ``h_rim`` defaults to
    ``h_hole``. Without rims the size is ``h_far`` everywhere.
    """
    growth = res.grading_rate - 1.0
    h_rim = res.h_hole if rim_size is None else rim_size
    tree = cKDTree(rim_points) if rim_points is not None and len(rim_points) else None
    centers, radii = rim_circles if rim_circles is not None else (np.empty((0, 2)), np.empty(0))

    def fn(x: np.ndarray) -> np.ndarray:
        d = np.full(x.shape[0], np.inf)
        if tree is not None:
            d = np.minimum(d, tree.query(x)[0])
        for c, r in zip(centers, radii):
            d = np.minimum(d, np.abs(np.linalg.norm(x - c, axis=1) - r))
        return np.minimum(res.h_far, h_rim + growth * d)

    return fn


def _subdivide(a: np.ndarray, b: np.ndarray, size: SizeFn) -> np.ndarray:
    """Points from ``a`` to ``b`` (inclusive) spaced by the size field."""
    length = float(np.linalg.norm(b - a))
    finest = float(np.min(size(np.vstack([a, b]))))
    s = np.linspace(0.0, 1.0, max(_SUBDIVISION_SAMPLES, int(math.ceil(4.0 * length / finest)) + 1))
    pts = a[None, :] + s[:, None] * (b - a)[None, :]
    density = 1.0 / size(pts)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(s) * length)])
    n = max(1, int(math.ceil(cum[-1] - 1e-9)))
    s_new = np.interp(np.linspace(0.0, cum[-1], n + 1), cum, s)
    s_new[0], s_new[-1] = 0.0, 1.0
    return a[None, :] + s_new[:, None] * (b - a)[None, :]


def _closed_chain(corners: list[np.ndarray], size: SizeFn) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and segments of the closed polyline through ``corners``."""
    points = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        points.extend(_subdivide(a, b, size)[:-1])
    n = len(points)
    segments = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    return np.asarray(points), segments


def _triangulate(vertices: np.ndarray, segments: np.ndarray, size: SizeFn,
                 h_far: float) -> tuple[np.ndarray, np.ndarray]:
    """Constrained quality triangulation refined until cells meet the size field."""
    out = tr.triangulate({"vertices": vertices, "segments": segments},
                         f"pzq{_MIN_ANGLE}a{_equilateral_area(h_far):.12g}Q")
    for n_pass in range(_MAX_REFINE_PASSES):
        V, T = out["vertices"], out["triangles"]
        target = _equilateral_area(size(V[T].mean(axis=1)))
        if np.all(_triangle_areas(V, T) <= _AREA_SLACK * target):
            break
        out = tr.triangulate({"vertices": V,
                              "triangles": T,
                              "segments": out.get("segments", segments),
                              "triangle_max_area": target.reshape(-1, 1)},
                             f"rpzq{_MIN_ANGLE}aQ")
    else:
        _logger.warning(f"[MESH] size field not met after {_MAX_REFINE_PASSES} refinement passes")
    V, T = np.asarray(out["vertices"], dtype=float), np.asarray(out["triangles"], dtype=np.int64)
    if T.size == 0:
        raise MeshingError("triangulation produced no cells")
    return V, T


def _axial_levels(h: float, h0: float, h_far: float, growth: float, layers: int) -> np.ndarray:
    """Distances ``0 = d_0 < ... < d_L = h`` from the sieve plane, graded away from it."""
    steps = [h0] * layers
    step = h0
    while sum(steps) < h:
        steps.append(step)
        step = min(step * growth, h_far)
    d = np.concatenate([[0.0], np.cumsum(steps)])
    d *= h / d[-1]
    d[-1] = h
    return d


def _inside_rim_polygons(x: np.ndarray, centers: np.ndarray, radii: np.ndarray, sides: list[int]) -> np.ndarray:
    """Points on or inside any regular rim polygon (vertex at angle 0)."""
    inside = np.zeros(x.shape[0], dtype=bool)
    for c, r, n in zip(centers, radii, sides):
        rel = x - c
        dist = np.linalg.norm(rel, axis=1)
        sector = 2.0 * math.pi / n
        phi = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), sector) - 0.5 * sector
        reach = r * math.cos(0.5 * sector) / np.cos(phi)
        inside |= dist <= reach * (1.0 + 1e-9) + SNAP_TOL * r
    return inside


def _minus_half_2d(pipe: PipeParams, res: MeshResolution,
                   layout: PerforationLayout | None) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    R, h = pipe.R, pipe.h
    centers = layout.center_array[:, 0] if layout is not None and layout.n_holes else np.empty(0)
    half = np.asarray(layout.hole_radii) if layout is not None and layout.n_holes else np.empty(0)
    ends = np.concatenate([centers - half, centers + half])
    # the wall ends in a slit tip at every hole endpoint
    size = size_field(res, rim_points=np.column_stack([ends, np.zeros_like(ends)]) if ends.size else None,
                      rim_size=res.h_hole / res.rim_refinement)

    corners = [np.array([-R, -h]), np.array([R, -h]), np.array([R, 0.0])]
    corners += [np.array([x, 0.0]) for x in np.sort(ends)[::-1]]
    corners += [np.array([-R, 0.0])]
    vertices, segments = _closed_chain(corners, size)
    V, T = _triangulate(vertices, segments, size, res.h_far)

    on_sigma = np.abs(V[:, 1]) < SNAP_TOL * max(R, h)
    inside = np.zeros(V.shape[0], dtype=bool)
    for c, a in zip(centers, half):
        inside |= np.abs(V[:, 0] - c) <= a * (1.0 + 1e-9)
    info = {"cross_section_vertices": int(np.sum(on_sigma))}
    return V.T, T.T, on_sigma & inside, info


def _minus_half_3d(pipe: PipeParams, res: MeshResolution,
                   layout: PerforationLayout | None) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    R, h = pipe.R, pipe.h
    has_holes = layout is not None and layout.n_holes > 0
    centers = layout.center_array if has_holes else np.empty((0, 2))
    radii = np.asarray(layout.hole_radii) if has_holes else np.empty(0)

    n_lat = max(_MIN_LATERAL_SEGMENTS, int(math.ceil(2.0 * math.pi * R / res.h_far)))
    theta = 2.0 * math.pi * np.arange(n_lat) / n_lat
    rings = [R * np.column_stack([np.cos(theta), np.sin(theta)])]
    sides = []
    for c, r in zip(centers, radii):
        n_rim = max(_MIN_RIM_SEGMENTS, int(math.ceil(2.0 * math.pi * r / res.h_hole)))
        phi = 2.0 * math.pi * np.arange(n_rim) / n_rim
        rings.append(c + r * np.column_stack([np.cos(phi), np.sin(phi)]))
        sides.append(n_rim)
    offsets = np.cumsum([0] + [len(ring) for ring in rings])
    vertices = np.vstack(rings)
    segments = np.vstack([
        np.column_stack([start + np.arange(len(ring)), start + (np.arange(len(ring)) + 1) % len(ring)])
        for start, ring in zip(offsets, rings)
    ])
    size = size_field(res, rim_circles=(centers, radii))
    V2, T2 = _triangulate(vertices, segments, size, res.h_far)
    open2 = _inside_rim_polygons(V2, centers, radii, sides) if has_holes else np.zeros(V2.shape[0], dtype=bool)

    h0 = res.h_hole if has_holes else res.h_far
    d = _axial_levels(h, h0, res.h_far, res.grading_rate, res.extrusion_layers if has_holes else 0)
    z = -d[::-1]
    n2, L = V2.shape[0], len(z) - 1
    p = np.vstack([np.tile(V2.T, (1, L + 1)), np.repeat(z, n2)[None, :]])

    tri = np.sort(T2, axis=1)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    cells = []
    for k in range(L):
        lo, hi = k * n2, (k + 1) * n2
        cells.append(np.column_stack([a + lo, b + lo, c + lo, c + hi]))
        cells.append(np.column_stack([a + lo, b + lo, b + hi, c + hi]))
        cells.append(np.column_stack([a + lo, a + hi, b + hi, c + hi]))
    t = np.vstack(cells).T

    open_mask = np.zeros(p.shape[1], dtype=bool)
    open_mask[L * n2:] = open2
    info = {"cross_section_vertices": int(n2), "cross_section_cells": int(T2.shape[0]),
            "lateral_segments": n_lat, "axial_layers": int(L)}
    return p, t, open_mask, info


def _minus_half(pipe: PipeParams, res: MeshResolution, layout: PerforationLayout | None):
    return (_minus_half_2d if pipe.dim == 2 else _minus_half_3d)(pipe, res, layout)


def _mirror(p: np.ndarray, t: np.ndarray, shared: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Glue the half mesh to its mirror image through the ``shared`` vertices."""
    n = p.shape[1]
    mirrored = p.copy()
    mirrored[axis] *= -1.0
    index = np.arange(n) + n
    index[shared] = np.flatnonzero(shared)
    p_all = np.hstack([p, mirrored])
    t_all = np.hstack([t, index[t]])
    used, t_compact = np.unique(t_all, return_inverse=True)
    return p_all[:, used], t_compact.reshape(t_all.shape)


def _check_hole_resolution(layout: PerforationLayout, res: MeshResolution, hole_cells: float = 3.0) -> None:
    if layout.n_holes and res.h_hole > layout.min_hole_radius / hole_cells * (1.0 + 1e-12):
        raise ResolutionError(
            f"h_hole={res.h_hole:.4g} does not resolve the smallest hole (radius "
            f"{layout.min_hole_radius:.4g}); need h_hole <= radius/{hole_cells:g}")


def mesh_sieve_pipe(layout: PerforationLayout, res: MeshResolution) -> SieveMesh:
    """Mesh the perforated pipe.

    Raises:
        ResolutionError: ``h_hole`` exceeds a third of the smallest hole radius.
        MeshingError: Quality floor or closure check failed.
    """
    pipe = layout.pipe
    _check_hole_resolution(layout, res)
    p, t, shared, info = _minus_half(pipe, res, layout)
    p, t = _mirror(p, t, shared, pipe.axis)
    mesh = SieveMesh.from_arrays(p, t, MeshKind.EPS_LEVEL, pipe, res, layout, provenance=info)
    report = check_quality(mesh, res.quality_floor)
    _logger.info(f"[MESH] eps-level dim={pipe.dim} N={layout.n_holes} cells={mesh.n_cells} "
                 f"min_quality={report.min_quality:.3f}")
    return mesh


def mesh_half_domain(pipe: PipeParams, side: Region, res: MeshResolution) -> SieveMesh:
    """Mesh one half pipe, closed by a full wall at z = 0."""
    p, t, _, info = _minus_half(pipe, res, None)
    kind = MeshKind.HALF_MINUS
    if Region(side) is Region.PLUS:
        p = p.copy()
        p[pipe.axis] *= -1.0
        kind = MeshKind.HALF_PLUS
    mesh = SieveMesh.from_arrays(p, t, kind, pipe, res, provenance=info)
    report = check_quality(mesh, res.quality_floor)
    _logger.info(f"[MESH] {kind.name} dim={pipe.dim} cells={mesh.n_cells} min_quality={report.min_quality:.3f}")
    return mesh


def mesh_open_pipe(pipe: PipeParams, res: MeshResolution) -> SieveMesh:
    """Mesh the pipe without any wall at z = 0."""
    p, t, _, info = _minus_half(pipe, res, None)
    on_sigma = np.abs(p[pipe.axis]) < SNAP_TOL * max(pipe.h, pipe.R)
    p, t = _mirror(p, t, on_sigma, pipe.axis)
    mesh = SieveMesh.from_arrays(p, t, MeshKind.OPEN, pipe, res, provenance=info)
    report = check_quality(mesh, res.quality_floor)
    _logger.info(f"[MESH] open pipe dim={pipe.dim} cells={mesh.n_cells} min_quality={report.min_quality:.3f}")
    return mesh
