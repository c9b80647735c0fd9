import numpy as np
import pytest

from sieveflow.core.errors import ConfigurationError, MeshingError, OutputError, ResolutionError
from sieveflow.geometry import LayoutStrategy, PerforationParams, generate_layout
from sieveflow.meshing import (
    FacetTag, MeshKind, MeshResolution, Region, check_quality, mesh_quality, mesh_sieve_pipe, mesh_to_text,
    parse_mesh, read_mesh, read_mesh_with_fields, refine_mesh, write_mesh, write_vtk,
)


def test_resolution_domain():
    for kwargs in (dict(h_far=0.1, h_hole=0.2), dict(grading_rate=1.0), dict(grading_rate=3.5),
                   dict(extrusion_layers=-1), dict(quality_floor=1.0), dict(rim_refinement=0.5)):
        with pytest.raises(ConfigurationError):
            MeshResolution(**kwargs)


def test_resolution_adapted_to_layout(layout2d, coarse):
    adapted = coarse.adapted_to(layout2d)
    assert adapted.h_hole == pytest.approx(layout2d.min_hole_radius / 3.0)
    assert adapted.h_far == coarse.h_far
    assert MeshResolution(h_far=0.5, h_hole=0.001).adapted_to(layout2d).h_hole == 0.001
    assert MeshResolution(rim_refinement=4.0).adapted_to(layout2d).rim_refinement == 4.0


def test_unresolved_holes_are_rejected(layout2d, coarse):
    with pytest.raises(ResolutionError):
        mesh_sieve_pipe(layout2d, coarse)


def test_eps_mesh_volume_and_tags(eps_mesh, layout2d):
    assert eps_mesh.kind is MeshKind.EPS_LEVEL
    assert eps_mesh.volume == pytest.approx(8.0, rel=1e-12)
    assert eps_mesh.tag_measure(FacetTag.INLET) == pytest.approx(2.0)
    assert eps_mesh.tag_measure(FacetTag.OUTLET) == pytest.approx(2.0)
    assert eps_mesh.tag_measure(FacetTag.LATERAL) == pytest.approx(8.0)
    # each wall facet on z = 0 belongs to both sides
    assert eps_mesh.tag_measure(FacetTag.SIEVE) == pytest.approx(2.0 * layout2d.sieve_measure(), rel=1e-9)


def test_tags_partition_the_boundary(eps_mesh):
    boundary = np.sort(eps_mesh.mesh.boundary_facets())
    tagged = np.concatenate([eps_mesh.tags[tag] for tag in FacetTag])
    assert tagged.size == boundary.size
    np.testing.assert_array_equal(np.sort(tagged), boundary)


def test_sigma_and_hole_facets(eps_mesh, layout2d):
    assert np.sum(eps_mesh.facet_measures(eps_mesh.sigma_facets)) == pytest.approx(2.0)
    assert np.sum(eps_mesh.facet_measures(eps_mesh.hole_facets())) == pytest.approx(layout2d.open_area())


def test_sieve_conformity_and_regions(eps_mesh):
    assert eps_mesh.check_sieve_conformity() == []
    z = eps_mesh.cell_centroids[eps_mesh.axis]
    assert np.all(z[eps_mesh.cells_in(Region.MINUS)] < 0.0)
    assert np.all(z[eps_mesh.cells_in(Region.PLUS)] > 0.0)
    assert eps_mesh.cells_in(Region.MINUS).size + eps_mesh.cells_in(Region.PLUS).size == eps_mesh.n_cells


def test_quality_report(eps_mesh):
    report = check_quality(eps_mesh, 0.05)
    assert report.watertight
    assert report.min_quality >= 0.05
    assert report.volume == pytest.approx(8.0)
    assert report.to_dict()["tag_measures"]["INLET"] == pytest.approx(2.0)


def test_quality_floor_violation(eps_mesh):
    with pytest.raises(MeshingError) as info:
        check_quality(eps_mesh, 0.99)
    assert "worst_cell" in info.value.report


def test_open_mesh(open_mesh):
    assert open_mesh.kind is MeshKind.OPEN
    assert not open_mesh.has_tag(FacetTag.SIEVE)
    assert open_mesh.check_sieve_conformity() == []
    assert mesh_quality(open_mesh).watertight


def test_closed_mesh(closed_mesh):
    assert closed_mesh.hole_facets().size == 0
    assert closed_mesh.tag_measure(FacetTag.SIEVE) == pytest.approx(4.0)


@pytest.mark.parametrize("side, kind", [(Region.MINUS, MeshKind.HALF_MINUS), (Region.PLUS, MeshKind.HALF_PLUS)])
def test_half_meshes(half_meshes, side, kind):
    mesh = half_meshes[side]
    assert mesh.kind is kind
    assert mesh.volume == pytest.approx(4.0)
    assert mesh.tag_measure(FacetTag.SIEVE) == pytest.approx(2.0)
    assert mesh.has_tag(FacetTag.INLET) == kind.has_inlet
    assert mesh.has_tag(FacetTag.OUTLET) == kind.has_outlet
    assert np.all(mesh.regions == int(side))


def test_refine_keeps_geometry(eps_mesh):
    fine = refine_mesh(eps_mesh)
    assert fine.n_cells == 4 * eps_mesh.n_cells
    assert fine.refinements == 1
    assert fine.volume == pytest.approx(eps_mesh.volume)
    for tag in FacetTag:
        assert fine.tag_measure(tag) == pytest.approx(eps_mesh.tag_measure(tag))
    assert fine.check_sieve_conformity() == []


def test_exchange_text(eps_mesh):
    text = mesh_to_text(eps_mesh)
    mesh = parse_mesh(text)
    np.testing.assert_array_equal(mesh.vertices, eps_mesh.vertices)
    np.testing.assert_array_equal(mesh.cells, eps_mesh.cells)
    assert mesh.kind is eps_mesh.kind
    assert mesh.layout.n_holes == eps_mesh.layout.n_holes
    assert mesh.resolution == eps_mesh.resolution


def test_exchange_file_with_field(tmp_path, half_meshes):
    mesh = half_meshes[Region.MINUS]
    force = np.column_stack([np.zeros(mesh.vertices.shape[1]), np.ones(mesh.vertices.shape[1])])
    write_mesh(tmp_path / "mesh.txt", mesh, {"force": force})
    back, fields = read_mesh_with_fields(tmp_path / "mesh.txt")
    assert back.kind is MeshKind.HALF_MINUS
    np.testing.assert_array_equal(fields["force"], force)
    assert read_mesh(tmp_path / "mesh.txt").n_cells == mesh.n_cells


@pytest.mark.parametrize("mutate", [
    lambda text: text.replace("# sieveflow-mesh 1", "# other-mesh 1"),
    lambda text: text.replace("FACETS", "FACES"),
    lambda text: text.replace("LATERAL", "INLET", 1),
    lambda text: text.rsplit("END", 1)[0],
])
def test_exchange_errors(open_mesh, mutate):
    with pytest.raises(OutputError):
        parse_mesh(mutate(mesh_to_text(open_mesh)))


def test_vtk(tmp_path, open_mesh):
    n = open_mesh.vertices.shape[1]
    write_vtk(tmp_path / "mesh.vtk", open_mesh, {"speed": np.ones(n), "u": np.zeros((n, 2))})
    text = (tmp_path / "mesh.vtk").read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"CELL_TYPES {open_mesh.n_cells}" in text
    assert "VECTORS u double" in text


@pytest.mark.slow
def test_eps_mesh_3d(pipe3d, coarse):
    layout = generate_layout(pipe3d, PerforationParams(0.6), LayoutStrategy.SQUARE_LATTICE)
    mesh = mesh_sieve_pipe(layout, coarse.adapted_to(layout))
    report = mesh_quality(mesh)
    assert report.watertight
    assert mesh.check_sieve_conformity() == []
    assert mesh.hole_facets().size > 0
    # polygonal rims and lateral wall approximate the discs from inside
    assert np.sum(mesh.facet_measures(mesh.sigma_facets)) == pytest.approx(np.pi, rel=0.05)
