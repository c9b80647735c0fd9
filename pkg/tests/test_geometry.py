import math

import numpy as np
import pytest

from conftest import R_EPS
from sieveflow.core.errors import ConfigurationError, EmptyLayoutError, OutputError, ParameterError
from sieveflow.geometry import (
    LayoutStrategy, PerforationLayout, PerforationParams, PipeParams, generate_layout, hole_radius,
    max_hole_count, validate_layout,
)


@pytest.mark.parametrize("epsilon", sorted(R_EPS))
def test_hole_radius_values(epsilon):
    assert hole_radius(epsilon, 1.0) == pytest.approx(R_EPS[epsilon], abs=5e-5)


def test_hole_radius_is_monotone():
    radii = [hole_radius(e, 1.0) for e in (0.2, 0.3, 0.5, 0.7, 0.9)]
    assert radii == sorted(radii)


@pytest.mark.parametrize("epsilon, alpha", [(0.0, 1.0), (1.0, 1.0), (-0.5, 1.0), (0.5, 0.0)])
def test_hole_radius_domain(epsilon, alpha):
    with pytest.raises(ParameterError):
        hole_radius(epsilon, alpha)


def test_max_hole_count():
    assert max_hole_count(1.0, 0.2, 0.5) == 100
    with pytest.raises(ParameterError):
        max_hole_count(1.0, 0.0, 0.5)


@pytest.mark.parametrize("kwargs", [dict(R=2.0, h=2.0), dict(R=0.0, h=1.0), dict(dim=4)])
def test_pipe_params_domain(kwargs):
    with pytest.raises(ParameterError):
        PipeParams(**kwargs)


def test_perforation_params_domain():
    with pytest.raises(ParameterError):
        PerforationParams(0.95)
    with pytest.raises(ParameterError):
        PerforationParams(0.5, delta0=-1.0)
    assert PerforationParams(0.5).r_eps == pytest.approx(math.exp(-2.0))


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("strategy", [LayoutStrategy.SQUARE_LATTICE, LayoutStrategy.HEX_LATTICE])
@pytest.mark.parametrize("epsilon", [0.6, 0.4])
def test_generated_layouts_validate(dim, strategy, epsilon):
    pipe = PipeParams(dim=dim)
    params = PerforationParams(epsilon)
    layout = generate_layout(pipe, params, strategy)
    assert layout.n_holes > 0
    assert validate_layout(layout).ok
    assert layout.n_holes <= max_hole_count(pipe.R, params.delta1, epsilon)
    assert all(r == pytest.approx(0.5 * params.delta0 * params.r_eps) for r in layout.hole_radii)


def test_hex_lattice_is_square_lattice_in_2d(pipe2d):
    params = PerforationParams(0.5)
    square = generate_layout(pipe2d, params, LayoutStrategy.SQUARE_LATTICE)
    hexagonal = generate_layout(pipe2d, params, LayoutStrategy.HEX_LATTICE)
    assert square.centers == hexagonal.centers


def test_lattice_pitch(pipe2d):
    params = PerforationParams(0.5)
    layout = generate_layout(pipe2d, params, margin=0.05)
    xs = sorted(c[0] for c in layout.centers)
    pitch = 2.0 * params.delta1 * params.epsilon * 1.05
    assert all(b - a == pytest.approx(pitch) for a, b in zip(xs, xs[1:]))
    assert all(abs(x) + params.delta1 * params.epsilon < pipe2d.R for x in xs)


def test_empty_lattice_raises():
    pipe = PipeParams(R=0.05, h=1.0, dim=2)
    with pytest.raises(EmptyLayoutError):
        generate_layout(pipe, PerforationParams(0.5), LayoutStrategy.SQUARE_LATTICE)


def test_explicit_empty_layout_is_valid(pipe2d):
    layout = generate_layout(pipe2d, PerforationParams(0.5), LayoutStrategy.EXPLICIT, centers=[])
    assert layout.n_holes == 0
    assert layout.open_area() == 0.0
    assert layout.sieve_measure() == pytest.approx(2.0)
    assert math.isinf(layout.min_hole_radius)


def test_explicit_layout_violations(pipe2d):
    params = PerforationParams(0.5)
    bad = PerforationLayout(params, pipe2d, centers=((0.0,), (0.1,), (0.95,)),
                            hole_radii=(0.01, 0.01, params.guard_radius), strategy=LayoutStrategy.EXPLICIT)
    report = validate_layout(bad)
    assert report.kinds() == {"spacing_overlap", "not_strictly_interior", "hole_exceeds_guard"}
    overlap = next(v for v in report.violations if v.kind == "spacing_overlap")
    assert overlap.indices == (0, 1)
    with pytest.raises(ConfigurationError, match="spacing_overlap"):
        generate_layout(pipe2d, params, LayoutStrategy.EXPLICIT, centers=[(0.0,), (0.1,)])


def test_guard_exceeds_spacing(pipe2d):
    params = PerforationParams(0.5, delta0=2.0, delta1=0.1)
    layout = PerforationLayout(params, pipe2d, centers=((0.0,),), hole_radii=(0.01,))
    assert "guard_exceeds_spacing" in validate_layout(layout).kinds()


def test_count_exceeded():
    pipe = PipeParams(R=1.0, h=2.0, dim=2)
    params = PerforationParams(0.5, delta1=1.2)
    centers = tuple((x,) for x in (-0.35, 0.0, 0.35))
    layout = PerforationLayout(params, pipe, centers=centers, hole_radii=(0.001,) * 3)
    assert "count_exceeded" in validate_layout(layout).kinds()


def test_layout_file_round_trip(tmp_path, layout2d):
    path = tmp_path / "layout.json"
    layout2d.write(path)
    again = PerforationLayout.read(path)
    assert again == layout2d
    assert again.to_dict()["format"] == layout2d.to_dict()["format"]


def test_layout_file_errors(tmp_path):
    path = tmp_path / "layout.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(OutputError):
        PerforationLayout.read(path)
    path.write_text("{not json")
    with pytest.raises(OutputError):
        PerforationLayout.read(path)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("dim", [2, 3])
def test_random_layout_round_trip(tmp_path, seed, dim):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    pipe = PipeParams(R=1.0, h=2.0, dim=dim)
    centers = tuple(tuple(float(v) for v in c) for c in rng.uniform(-0.6, 0.6, (n, dim - 1)))
    layout = PerforationLayout(PerforationParams(float(rng.uniform(0.2, 0.9))), pipe, centers=centers,
                               hole_radii=tuple(float(r) for r in rng.uniform(1e-4, 1e-2, n)),
                               strategy=LayoutStrategy.EXPLICIT)
    path = tmp_path / "layout.json"
    layout.write(path)
    assert PerforationLayout.read(path) == layout
