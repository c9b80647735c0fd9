"""Plain-text mesh exchange format and VTK legacy export.

The exchange format is line oriented::

    # sieveflow-mesh 1
    META <key> <value>          (kind, dim, R, h, refinements, resolution, layout)
    VERTICES <n>
    <x> [<y>] <z>               (n lines)
    CELLS <m>
    <v0> ... <vdim> <region>    (m lines, region -1 below / +1 above z = 0)
    FACETS <k>
    <v0> ... <vdim-1> <TAG>     (k lines, boundary facets only)
    FIELD <name> <ncomp>        (optional, one line of values per vertex)
    END

Facet tags are recomputed from geometry on import and checked against the
FACETS section.
"""
import json
from pathlib import Path
from typing import Final, Mapping

import numpy as np

from ..core.errors import OutputError, SieveflowError
from ..core.utils import atomic_write_text, read_text
from ..geometry import PerforationLayout, PipeParams
from .sievemesh import MeshResolution, SieveMesh
from .tags import FacetTag, MeshKind

MESH_HEADER: Final[str] = "# sieveflow-mesh 1"
_VTK_CELL_TYPES: Final[dict[int, int]] = {2: 5, 3: 10}


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def mesh_to_text(mesh: SieveMesh, fields: Mapping[str, np.ndarray] | None = None) -> str:
    lines = [MESH_HEADER,
             f"META kind {mesh.kind.name}",
             f"META dim {mesh.dim}",
             f"META R {_fmt(mesh.pipe.R)}",
             f"META h {_fmt(mesh.pipe.h)}",
             f"META refinements {mesh.refinements}"]
    if mesh.resolution is not None:
        lines.append(f"META resolution {json.dumps(mesh.resolution.to_dict(), sort_keys=True)}")
    if mesh.layout is not None:
        lines.append(f"META layout {json.dumps(mesh.layout.to_dict(), sort_keys=True)}")

    p, t = mesh.vertices, mesh.cells
    lines.append(f"VERTICES {p.shape[1]}")
    lines.extend(" ".join(_fmt(x) for x in p[:, i]) for i in range(p.shape[1]))
    lines.append(f"CELLS {t.shape[1]}")
    lines.extend(" ".join(str(int(v)) for v in t[:, j]) + f" {int(mesh.regions[j])}" for j in range(t.shape[1]))

    tagged = [(f, tag) for tag in FacetTag for f in mesh.tags.get(tag, ())]
    lines.append(f"FACETS {len(tagged)}")
    facets = mesh.mesh.facets
    lines.extend(" ".join(str(int(v)) for v in facets[:, f]) + f" {tag.name}" for f, tag in tagged)

    for name, values in (fields or {}).items():
        values = np.asarray(values, dtype=float).reshape(p.shape[1], -1)
        lines.append(f"FIELD {name} {values.shape[1]}")
        lines.extend(" ".join(_fmt(x) for x in row) for row in values)
    lines.append("END")
    return "\n".join(lines) + "\n"


def write_mesh(path: Path, mesh: SieveMesh, fields: Mapping[str, np.ndarray] | None = None) -> None:
    atomic_write_text(path, mesh_to_text(mesh, fields))


class _Reader:
    def __init__(self, text: str, source: str):
        self.lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        self.pos = 0
        self.source = source

    def error(self, msg: str) -> OutputError:
        return OutputError(f"{self.source}: line {self.pos + 1}: {msg}")

    def peek(self) -> str | None:
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise self.error("unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def section(self, name: str) -> int:
        parts = self.next().split()
        if len(parts) != 2 or parts[0] != name:
            raise self.error(f"expected '{name} <count>'")
        return int(parts[1])


def _parse(text: str, source: str) -> tuple[SieveMesh, dict[str, np.ndarray]]:
    rd = _Reader(text, source)
    if rd.next() != MESH_HEADER:
        raise rd.error(f"missing header '{MESH_HEADER}'")
    meta: dict[str, str] = {}
    while (line := rd.peek()) is not None and line.startswith("META "):
        _, key, value = rd.next().split(" ", 2)
        meta[key] = value
    try:
        dim = int(meta["dim"])
        pipe = PipeParams(R=float(meta["R"]), h=float(meta["h"]), dim=dim)
        kind = MeshKind[meta["kind"]]
        resolution = MeshResolution(**json.loads(meta["resolution"])) if "resolution" in meta else None
        layout = PerforationLayout.from_dict(json.loads(meta["layout"])) if "layout" in meta else None
        refinements = int(meta.get("refinements", 0))

        n = rd.section("VERTICES")
        p = np.array([[float(x) for x in rd.next().split()] for _ in range(n)]).T
        m = rd.section("CELLS")
        rows = np.array([[int(x) for x in rd.next().split()] for _ in range(m)], dtype=np.int64)
        t, regions = rows[:, : dim + 1].T, rows[:, dim + 1]
        k = rd.section("FACETS")
        facet_rows = [rd.next().split() for _ in range(k)]
        fields: dict[str, np.ndarray] = {}
        while (line := rd.next()) != "END":
            head = line.split()
            if head[0] != "FIELD" or len(head) != 3:
                raise rd.error("expected FIELD <name> <ncomp> or END")
            ncomp = int(head[2])
            values = np.array([[float(x) for x in rd.next().split()] for _ in range(n)])
            if values.shape != (n, ncomp):
                raise rd.error(f"field {head[1]} has shape {values.shape}, expected {(n, ncomp)}")
            fields[head[1]] = values
    except (KeyError, ValueError, IndexError) as e:
        if isinstance(e, SieveflowError):
            raise
        raise rd.error(f"malformed mesh file ({e})") from e

    mesh = SieveMesh.from_arrays(p, t, kind, pipe, resolution, layout, refinements)
    if np.any(mesh.regions != regions):
        raise OutputError(f"{source}: cell regions disagree with geometry")
    expected = {(tuple(sorted(int(v) for v in row[:-1])), row[-1]) for row in facet_rows}
    found = {(tuple(sorted(int(v) for v in mesh.mesh.facets[:, f])), tag.name)
             for tag in FacetTag for f in mesh.tags.get(tag, ())}
    if expected != found:
        raise OutputError(f"{source}: FACETS section disagrees with the boundary of the cells")
    return mesh, fields


def parse_mesh(text: str, source: str = "<text>") -> SieveMesh:
    return _parse(text, source)[0]


def read_mesh(path: Path) -> SieveMesh:
    return _parse(read_text(path), str(path))[0]


def read_mesh_with_fields(path: Path) -> tuple[SieveMesh, dict[str, np.ndarray]]:
    return _parse(read_text(path), str(path))


def write_vtk(path: Path,
              mesh: SieveMesh,
              point_data: Mapping[str, np.ndarray] | None = None,
              title: str = "sieveflow") -> None:
    """Write the mesh and vertex fields as VTK legacy ASCII unstructured grid.

    Vector fields with ``dim`` components are padded to three.
    """
    p, t = mesh.vertices, mesh.cells
    n, m = p.shape[1], t.shape[1]
    pts = np.vstack([p, np.zeros((3 - mesh.dim, n))]) if mesh.dim < 3 else p
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines.extend(" ".join(_fmt(x) for x in pts[:, i]) for i in range(n))
    lines.append(f"CELLS {m} {m * (mesh.dim + 2)}")
    lines.extend(f"{mesh.dim + 1} " + " ".join(str(int(v)) for v in t[:, j]) for j in range(m))
    lines.append(f"CELL_TYPES {m}")
    lines.extend([str(_VTK_CELL_TYPES[mesh.dim])] * m)
    lines.append(f"CELL_DATA {m}")
    lines.append("SCALARS region int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(str(int(r)) for r in mesh.regions)
    if point_data:
        lines.append(f"POINT_DATA {n}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(_fmt(v) for v in values)
            else:
                vec = values.reshape(n, -1)
                vec = np.hstack([vec, np.zeros((n, 3 - vec.shape[1]))])
                lines.append(f"VECTORS {name} double")
                lines.extend(" ".join(_fmt(x) for x in row) for row in vec)
    atomic_write_text(path, "\n".join(lines) + "\n")
