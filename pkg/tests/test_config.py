import pytest

from sieveflow.config import RESOLVED_NAME, RunConfig
from sieveflow.core.errors import ConfigurationError, ParameterError
from sieveflow.core.utils import git_blob_hash
from sieveflow.discretization import ConstantForce, RegionForce, ZeroForce
from sieveflow.geometry import LayoutStrategy
from sieveflow.meshing import Region
from sieveflow.solve import Scheme, SolverMode


def test_defaults():
    config = RunConfig.parse("")
    assert config.pipe().dim == 2
    assert config.sweep_section.epsilons == (0.6, 0.5, 0.4, 0.3)
    assert config.solver().damping == 0.7
    assert config.solver().newton_switch == 1e-3
    assert isinstance(config.force(), ZeroForce)
    assert config.resolution().quality_floor == 0.05
    assert config.resolution().rim_refinement == 8.0
    assert RunConfig.parse("[mesh]\nrim_refinement = 2\n").resolution().rim_refinement == 2.0


def test_quality_floor_follows_dimension():
    assert RunConfig.parse("[pipe]\ndim = 3\n").resolution().quality_floor == 0.02
    assert RunConfig.parse("[pipe]\ndim = 3\n[mesh]\nquality_floor = 0.1\n").resolution().quality_floor == 0.1


def test_parse_values(config_text):
    config = RunConfig.parse(config_text)
    assert config.pipe_section.R == 1.0
    assert config.perforation_section.strategy is LayoutStrategy.SQUARE_LATTICE
    assert config.solver().mode is SolverMode.NAVIER_STOKES
    assert config.solver().scheme is Scheme.PICARD_THEN_NEWTON
    assert config.sweep_section.epsilons == (0.6, 0.5)
    assert config.output_section.vtk is False


def test_keys_are_case_sensitive():
    with pytest.raises(ConfigurationError, match="unknown key 'r'"):
        RunConfig.parse("[pipe]\nr = 1.0\n")


@pytest.mark.parametrize("text", [
    "[pipes]\nR = 1\n",
    "[pipe]\nradius = 1\n",
    "[pipe]\ndim = 4\n",
    "[solver]\nmode = euler\n",
    "[solver]\ndamping = 1.5\n",
    "[sweep]\nconstants = maybe\n",
    "[mesh]\nrim_refinement = 0.5\n",
    "[mesh]\nh_hole = 0.5\nh_far = 0.25\n",
    "[flow]\nforce = constant\nforce_vector = 1, 0, 0\n",
    "[flow]\nforce = sampled\n",
    "[perforation]\ncenters = 0.0\n",
    "no section header\n",
])
def test_bad_config(text):
    with pytest.raises(ConfigurationError):
        RunConfig.parse(text)


def test_geometry_errors_surface_at_load():
    with pytest.raises(ParameterError):
        RunConfig.parse("[pipe]\nR = 3.0\nh = 2.0\n")


def test_forces():
    constant = RunConfig.parse("[flow]\nforce = constant\nforce_vector = 0.0, 1.0\n").force()
    assert isinstance(constant, ConstantForce)
    region = RunConfig.parse("[flow]\nforce = region\nforce_vector = 0, 1\nforce_region = plus\n").force()
    assert isinstance(region, RegionForce)
    assert region.region is Region.PLUS


def test_explicit_layout():
    config = RunConfig.parse("[perforation]\nstrategy = explicit\ncenters = -0.5; 0.5\n")
    layout = config.layout()
    assert layout.n_holes == 2
    assert layout.centers == ((-0.5,), (0.5,))


def test_resolved_text_round_trips(config_text):
    config = RunConfig.parse(config_text)
    again = RunConfig.parse(config.resolved_text())
    assert again.resolved_text() == config.resolved_text()
    assert again.config_hash() == config.config_hash()


def test_resolved_text_lists_every_key():
    text = RunConfig.parse("").resolved_text()
    for key in ("R", "epsilon_star", "quality_floor", "force_file", "growth_factor", "parallel_workers",
                "deterministic", "rim_refinement"):
        assert f"\n{key} = " in text


def test_hash_ignores_output_directory():
    a = RunConfig.parse("[output]\ndirectory = a\n")
    b = RunConfig.parse("[output]\ndirectory = b\n")
    c = RunConfig.parse("[output]\ndirectory = a\n[flow]\np_minus = 2.0\n")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 40
    assert a.config_hash() != git_blob_hash(a.resolved_text())


def test_overrides(tmp_path):
    config = RunConfig.parse("").with_overrides(output={"directory": str(tmp_path), "deterministic": "true"})
    assert config.deterministic
    assert config.out_dir == tmp_path
    path = config.write_resolved(tmp_path)
    assert path.name == RESOLVED_NAME
    assert RunConfig.load(path).deterministic


def test_override_unknown_key():
    with pytest.raises(ConfigurationError):
        RunConfig.parse("").with_overrides(output={"colour": "red"})
