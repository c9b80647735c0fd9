import math

import pytest

from sieveflow.geometry import LayoutStrategy, PerforationParams, PipeParams, generate_layout
from sieveflow.meshing import MeshResolution, Region, mesh_half_domain, mesh_open_pipe, mesh_sieve_pipe

# r_eps = exp(-1/epsilon) at the default sweep levels
R_EPS = {0.6: 0.1889, 0.5: 0.1353, 0.4: 0.0821, 0.3: 0.0357}

POISEUILLE_FLUX = {2: 1.0 / 6.0, 3: math.pi / 32.0}


@pytest.fixture(scope="session")
def pipe2d() -> PipeParams:
    return PipeParams(R=1.0, h=2.0, dim=2)


@pytest.fixture(scope="session")
def pipe3d() -> PipeParams:
    return PipeParams(R=1.0, h=2.0, dim=3)


@pytest.fixture(scope="session")
def coarse() -> MeshResolution:
    return MeshResolution(h_far=0.5, h_hole=0.25, grading_rate=1.5)


@pytest.fixture(scope="session")
def layout2d(pipe2d):
    return generate_layout(pipe2d, PerforationParams(0.5), LayoutStrategy.SQUARE_LATTICE)


@pytest.fixture(scope="session")
def eps_mesh(layout2d, coarse):
    return mesh_sieve_pipe(layout2d, coarse.adapted_to(layout2d))


@pytest.fixture(scope="session")
def open_mesh(pipe2d, coarse):
    return mesh_open_pipe(pipe2d, coarse)


@pytest.fixture(scope="session")
def closed_mesh(pipe2d, coarse):
    """Sieve without holes."""
    layout = generate_layout(pipe2d, PerforationParams(0.5), LayoutStrategy.EXPLICIT, centers=[])
    return mesh_sieve_pipe(layout, coarse)


@pytest.fixture(scope="session")
def half_meshes(pipe2d, coarse):
    return {side: mesh_half_domain(pipe2d, side, coarse) for side in Region}


@pytest.fixture
def config_text():
    return (
        "[pipe]\nR = 1.0\nh = 2.0\ndim = 2\n\n"
        "[perforation]\nepsilon = 0.5\nstrategy = square_lattice\n\n"
        "[mesh]\nh_far = 0.5\nh_hole = 0.25\ngrading_rate = 1.5\n\n"
        "[flow]\np_minus = 1.0\np_plus = 0.0\n\n"
        "[solver]\nmode = navier_stokes\n\n"
        "[sweep]\nepsilons = 0.6, 0.5\n\n"
        "[output]\nvtk = false\n"
    )
