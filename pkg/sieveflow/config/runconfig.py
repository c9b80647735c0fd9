"""The run configuration: one INI file, seven sections of ConfigFields."""
import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Final

from ..core.errors import ConfigurationError
from ..core.utils import atomic_write_text, git_blob_hash, read_text
from ..discretization import BodyForce, ConstantForce, RegionForce, SampledForce, ZeroForce
from ..geometry import LayoutStrategy, PerforationLayout, PerforationParams, PipeParams, generate_layout
from ..meshing import MeshResolution, Region, SieveMesh, read_mesh_with_fields
from ..solve import LinearSolverKind, Scheme, SolverConfig, SolverMode
from .fields import (
    ConfigField, ConfigSection, at_least, enum_parser, non_negative, one_of, parse_bool, parse_floats,
    parse_optional_float, parse_points, positive, render_bool, render_enum, render_float, render_floats,
    render_optional, render_points,
)

_logger = logging.getLogger("config")

RESOLVED_NAME: Final[str] = "config.resolved.ini"
RESOLVED_HEADER: Final[str] = "# sieveflow resolved configuration"
QUALITY_FLOOR: Final[dict[int, float]] = {2: 0.05, 3: 0.02}
_SOLVER = SolverConfig()


def _float(default: float, validator=None, doc: str = "") -> ConfigField[float]:
    return ConfigField(default, float, validator, render_float, doc)


def _int(default: int, validator=None, doc: str = "") -> ConfigField[int]:
    return ConfigField(default, int, validator, str, doc)


class PipeSection(ConfigSection):
    NAME = "pipe"
    R = _float(1.0, positive, "pipe radius (half width in 2D)")
    h = _float(2.0, positive, "half length; inlet at z = -h, outlet at z = h")
    dim = _int(2, one_of(2, 3))


class PerforationSection(ConfigSection):
    NAME = "perforation"
    epsilon = _float(0.5, positive, "perforation level; hole size r_eps = exp(-epsilon^-alpha)")
    alpha = _float(1.0, positive)
    delta0 = _float(0.5, positive, "guard disk radius delta0 * r_eps")
    delta1 = _float(0.2, positive, "spacing disk radius delta1 * epsilon")
    epsilon_star = _float(0.9, positive)
    strategy = ConfigField(LayoutStrategy.SQUARE_LATTICE, enum_parser(LayoutStrategy), None, render_enum)
    margin = _float(0.05, positive, "lattice pitch margin")
    centers = ConfigField((), parse_points, None, render_points, "explicit strategy: points 'x[,y]; ...'")
    hole_radii = ConfigField((), parse_floats, None, render_floats, "explicit strategy: optional radii")


class MeshSection(ConfigSection):
    NAME = "mesh"
    domain = ConfigField("eps_level", str.lower, one_of("eps_level", "open"), str,
                         "eps_level (perforated sieve) or open (no sieve)")
    h_far = _float(0.25, positive)
    h_hole = _float(0.05, positive)
    grading_rate = _float(1.3, positive)
    extrusion_layers = _int(2, non_negative)
    rim_refinement = _float(8.0, at_least(1.0), "h_hole / cell size at the 2D hole endpoints")
    quality_floor = ConfigField(None, parse_optional_float, None, render_optional,
                                "smallest radius ratio; auto is 0.05 in 2D and 0.02 in 3D")
    refinements = _int(0, non_negative, "uniform refinements after meshing")


class FlowSection(ConfigSection):
    NAME = "flow"
    p_minus = _float(1.0, None, "Bernoulli pressure on the inlet")
    p_plus = _float(0.0, None, "Bernoulli pressure on the outlet")
    force = ConfigField("zero", str.lower, one_of("zero", "constant", "region", "sampled"), str)
    force_vector = ConfigField((), parse_floats, None, render_floats, "constant and region forces")
    force_region = ConfigField("minus", str.lower, one_of("minus", "plus"), str)
    force_file = ConfigField("", str, None, str, "sampled force: mesh file with a FIELD force section")


class SolverSection(ConfigSection):
    NAME = "solver"
    mode = ConfigField(_SOLVER.mode, enum_parser(SolverMode), None, render_enum)
    scheme = ConfigField(_SOLVER.scheme, enum_parser(Scheme), None, render_enum)
    tol = _float(_SOLVER.tol, positive)
    max_iter = _int(_SOLVER.max_iter, positive)
    damping = _float(_SOLVER.damping, positive)
    newton_switch = _float(_SOLVER.newton_switch, positive)
    linear_solver = ConfigField(_SOLVER.linear_solver, enum_parser(LinearSolverKind), None, render_enum)
    linear_tol = _float(_SOLVER.linear_tol, positive)
    patience = _int(_SOLVER.patience, positive)
    growth_factor = _float(_SOLVER.growth_factor, positive)


class SweepSection(ConfigSection):
    NAME = "sweep"
    epsilons = ConfigField((0.6, 0.5, 0.4, 0.3), parse_floats, None, render_floats, "strictly descending")
    constants = ConfigField(False, parse_bool, None, render_bool, "estimate functional constants per level")
    parallel_workers = _int(1, positive)


class OutputSection(ConfigSection):
    NAME = "output"
    directory = ConfigField("out", str, None, str, hashed=False)
    deterministic = ConfigField(False, parse_bool, None, render_bool, "no worker processes, no timestamps")
    vtk = ConfigField(True, parse_bool, None, render_bool, "also write VTK files")
    log_level = ConfigField("INFO", str.upper, one_of("DEBUG", "INFO", "WARNING", "ERROR"), str, hashed=False)


SECTIONS: Final[tuple[type[ConfigSection], ...]] = (
    PipeSection, PerforationSection, MeshSection, FlowSection, SolverSection, SweepSection, OutputSection,
)


@dataclass
class RunConfig:
    """Every parameter of a run, with the builders for the objects they describe."""
    pipe_section: PipeSection = field(default_factory=PipeSection)
    perforation_section: PerforationSection = field(default_factory=PerforationSection)
    mesh_section: MeshSection = field(default_factory=MeshSection)
    flow_section: FlowSection = field(default_factory=FlowSection)
    solver_section: SolverSection = field(default_factory=SolverSection)
    sweep_section: SweepSection = field(default_factory=SweepSection)
    output_section: OutputSection = field(default_factory=OutputSection)
    source: str = "<defaults>"

    @classmethod
    def parse(cls, text: str, source: str = "<text>") -> "RunConfig":
        """Read an INI text; absent keys keep their defaults.

        Raises:
            ConfigurationError: On syntax errors, unknown sections or keys and bad values.
        """
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                           default_section="__none__")
        parser.optionxform = str
        try:
            parser.read_string(text, source)
        except configparser.Error as e:
            raise ConfigurationError(f"{source}: {e}") from e
        by_name = {section.NAME: section for section in SECTIONS}
        unknown = [name for name in parser.sections() if name not in by_name]
        if unknown:
            raise ConfigurationError(f"{source}: unknown sections {unknown}; expected {list(by_name)}")
        kwargs = {f"{name}_section": by_name[name](dict(parser.items(name))) for name in parser.sections()}
        config = cls(**kwargs, source=source)
        config.validate()
        return config

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        return cls.parse(read_text(path), str(path))

    def validate(self) -> None:
        """Build the geometry objects once so cross-field errors surface at load time."""
        pipe = self.pipe()
        if self.mesh_section.domain == "eps_level":
            self.perforation()
        self.resolution()
        if self.flow_section.force in ("constant", "region") and len(self.flow_section.force_vector) != pipe.dim:
            raise ConfigurationError(
                f"[flow] force_vector needs {pipe.dim} components, got {list(self.flow_section.force_vector)}")
        if self.flow_section.force == "sampled" and not self.flow_section.force_file:
            raise ConfigurationError("[flow] force = sampled needs force_file")
        if self.perforation_section.strategy is not LayoutStrategy.EXPLICIT and (
                self.perforation_section.centers or self.perforation_section.hole_radii):
            raise ConfigurationError("[perforation] centers and hole_radii need strategy = explicit")
        self.solver()

    def sections(self) -> tuple[ConfigSection, ...]:
        return (self.pipe_section, self.perforation_section, self.mesh_section, self.flow_section,
                self.solver_section, self.sweep_section, self.output_section)

    def resolved_text(self) -> str:
        """Every field, defaults included, in declaration order."""
        return RESOLVED_HEADER + "\n\n" + "\n".join(s.render() for s in self.sections())

    def config_hash(self) -> str:
        """Git blob hash of the resolved text without the keys that cannot change results."""
        return git_blob_hash("\n".join(s.render(hashed_only=True) for s in self.sections()))

    def write_resolved(self, out_dir: Path) -> Path:
        path = Path(out_dir) / RESOLVED_NAME
        atomic_write_text(path, self.resolved_text())
        return path

    def with_overrides(self, **overrides: dict[str, Any]) -> "RunConfig":
        """Copy with some keys replaced, e.g. ``output={"deterministic": "true"}``."""
        text = self.resolved_text()
        config = RunConfig.parse(text, self.source)
        for name, values in overrides.items():
            section = getattr(config, f"{name}_section")
            for key, value in values.items():
                if key not in section.field_names():
                    raise ConfigurationError(f"unknown key '{key}' in section [{name}]")
                setattr(section, key, value)
        config.validate()
        return config

    # Builders

    def pipe(self) -> PipeParams:
        s = self.pipe_section
        return PipeParams(R=s.R, h=s.h, dim=s.dim)

    def perforation(self, epsilon: float | None = None) -> PerforationParams:
        s = self.perforation_section
        return PerforationParams(s.epsilon if epsilon is None else epsilon, s.alpha, s.delta0, s.delta1,
                                 s.epsilon_star)

    def layout(self, epsilon: float | None = None) -> PerforationLayout:
        s = self.perforation_section
        explicit = s.strategy is LayoutStrategy.EXPLICIT
        return generate_layout(self.pipe(), self.perforation(epsilon), s.strategy,
                               centers=s.centers if explicit else None, margin=s.margin,
                               hole_radii=s.hole_radii if explicit and s.hole_radii else None)

    def resolution(self) -> MeshResolution:
        s = self.mesh_section
        floor = QUALITY_FLOOR[self.pipe_section.dim] if s.quality_floor is None else s.quality_floor
        return MeshResolution(s.h_far, s.h_hole, s.grading_rate, s.extrusion_layers, floor, s.rim_refinement)

    def force(self) -> BodyForce:
        """The configured body force; a sampled force comes with its mesh from ``sampled_force``."""
        s = self.flow_section
        match s.force:
            case "zero":
                return ZeroForce()
            case "constant":
                return ConstantForce(s.force_vector)
            case "region":
                return RegionForce(ConstantForce(s.force_vector), Region[s.force_region.upper()])
            case _:
                return self.sampled_force()[1]

    def sampled_force(self) -> tuple[SieveMesh, SampledForce]:
        path = Path(self.flow_section.force_file)
        mesh, fields = read_mesh_with_fields(path)
        if "force" not in fields:
            raise ConfigurationError(f"{path} has no FIELD force section")
        return mesh, SampledForce(fields["force"], str(path))

    def solver(self) -> SolverConfig:
        s = self.solver_section
        return SolverConfig(s.mode, s.scheme, s.tol, s.max_iter, s.damping, s.newton_switch, s.linear_solver,
                            s.linear_tol, s.patience, s.growth_factor)

    @property
    def out_dir(self) -> Path:
        return Path(self.output_section.directory)

    @property
    def deterministic(self) -> bool:
        return self.output_section.deterministic

    @property
    def log_level(self) -> int:
        return logging.getLevelName(self.output_section.log_level)
