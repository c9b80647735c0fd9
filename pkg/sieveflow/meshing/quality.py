from dataclasses import dataclass
from typing import Any

import numpy as np

from ..core.errors import MeshingError
from .sievemesh import SieveMesh, radius_ratio
from .tags import FacetTag


@dataclass(frozen=True)
class QualityReport:
    n_cells: int
    n_vertices: int
    min_quality: float
    mean_quality: float
    worst_cell: int
    worst_centroid: tuple[float, ...]
    tag_measures: dict[str, float]
    boundary_measure: float
    volume: float
    closure_defect: float

    @property
    def watertight(self) -> bool:
        return self.closure_defect <= 1e-10 * max(self.boundary_measure, 1.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_cells": self.n_cells,
            "n_vertices": self.n_vertices,
            "min_quality": self.min_quality,
            "mean_quality": self.mean_quality,
            "worst_cell": self.worst_cell,
            "worst_centroid": list(self.worst_centroid),
            "tag_measures": dict(self.tag_measures),
            "boundary_measure": self.boundary_measure,
            "volume": self.volume,
            "closure_defect": self.closure_defect,
            "watertight": self.watertight,
        }


def mesh_quality(mesh: SieveMesh) -> QualityReport:
    """Radius ratios, per-tag facet measures and the boundary closure defect.

    The closure defect is the norm of the summed outward area vectors over the
    whole boundary; it vanishes for a watertight cell complex.
    """
    if mesh.n_cells == 0:
        raise MeshingError("empty mesh: no cells")
    q = radius_ratio(mesh.vertices, mesh.cells)
    worst = int(np.argmin(q))
    boundary = mesh.mesh.boundary_facets()
    closure = np.sum(mesh.facet_area_vectors(boundary), axis=1)
    return QualityReport(
        n_cells=mesh.n_cells,
        n_vertices=int(mesh.vertices.shape[1]),
        min_quality=float(q[worst]),
        mean_quality=float(np.mean(q)),
        worst_cell=worst,
        worst_centroid=tuple(float(x) for x in mesh.cell_centroids[:, worst]),
        tag_measures={tag.name: mesh.tag_measure(tag) for tag in FacetTag},
        boundary_measure=float(np.sum(mesh.facet_measures(boundary))),
        volume=mesh.volume,
        closure_defect=float(np.linalg.norm(closure)),
    )


def check_quality(mesh: SieveMesh, floor: float) -> QualityReport:
    """mesh_quality plus enforcement of the quality floor and watertightness.

    Raises:
        MeshingError: With the worst-cell report.
    """
    report = mesh_quality(mesh)
    if report.min_quality < floor:
        raise MeshingError(
            f"cell quality {report.min_quality:.4f} below floor {floor} at {report.worst_centroid}",
            {"worst_cell": report.worst_cell, "quality": report.min_quality,
             "centroid": list(report.worst_centroid)})
    if not report.watertight:
        raise MeshingError(f"boundary not closed, defect {report.closure_defect:.3e}",
                           {"closure_defect": report.closure_defect})
    if bad := mesh.check_sieve_conformity():
        raise MeshingError(f"{len(bad)} facets on z = 0 are neither wall nor hole", {"facets": bad[:10]})
    return report
