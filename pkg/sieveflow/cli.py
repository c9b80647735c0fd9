"""Command line front end: ``sieveflow <command> --config PATH``."""
import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Final, Sequence

from .analysis import (
    energy, energy_identity_residual, estimate_constants, flux_profile, pressure_mean_identity,
    pressure_split, run_sweep, trace_norm_sigma, velocity_norms,
)
from .config import RunConfig
from .core import init_log_config
from .core.errors import ConfigurationError, PartialSweepError, SieveflowError
from .core.utils import atomic_write_json, atomic_write_text, json_safe
from .discretization import assemble, build_space
from .geometry import validate_layout
from .meshing import (
    Region, SieveMesh, mesh_open_pipe, mesh_quality, mesh_sieve_pipe, refine_mesh, write_mesh, write_vtk,
)
from .solve import (
    FlowState, solve_limit_problems, solve_stationary, write_history_csv, write_state, write_state_vtk,
)

_logger = logging.getLogger("cli")

ERROR_FORMAT: Final[str] = "sieveflow-error/1"
DIAGNOSTICS_FORMAT: Final[str] = "sieveflow-diagnostics/1"


def build_mesh(config: RunConfig) -> SieveMesh:
    """Mesh of the configured domain, ``h_hole`` adapted to the smallest hole."""
    res = config.resolution()
    if config.flow_section.force == "sampled":
        mesh = config.sampled_force()[0]
    elif config.mesh_section.domain == "open":
        mesh = mesh_open_pipe(config.pipe(), res)
    else:
        layout = config.layout()
        mesh = mesh_sieve_pipe(layout, res.adapted_to(layout))
    for _ in range(config.mesh_section.refinements):
        mesh = refine_mesh(mesh)
    return mesh


def diagnostics(state: FlowState) -> dict[str, Any]:
    """Scalar diagnostics of a converged state."""
    split = pressure_split(state)
    out = {
        "energy": energy(state),
        "energy_identity_residual": energy_identity_residual(state),
        "flux": flux_profile(state).to_dict(),
        "pressure": split.to_dict(),
        "pressure_mean_identity": {r.name.lower(): pressure_mean_identity(state, r) for r in Region},
        "velocity": {"all": velocity_norms(state)} | {
            r.name.lower(): velocity_norms(state, r) for r in Region if split.side(r) is not None},
        "state": state.describe(),
    }
    if state.mesh.sigma_facets.size:
        out["trace_sigma"] = trace_norm_sigma(state)
    return out


def cmd_layout(config: RunConfig, out: Path) -> None:
    layout = config.layout()
    layout.write(out / "layout.json")
    atomic_write_json(out / "validation.json", validate_layout(layout).to_dict())


def cmd_mesh(config: RunConfig, out: Path) -> None:
    mesh = build_mesh(config)
    write_mesh(out / "mesh.txt", mesh)
    if config.output_section.vtk:
        write_vtk(out / "mesh.vtk", mesh)
    atomic_write_json(out / "quality.json", mesh_quality(mesh).to_dict() | {"mesh": mesh.describe()})


def cmd_solve(config: RunConfig, out: Path) -> None:
    mesh = build_mesh(config)
    flow = config.flow_section
    system = assemble(build_space(mesh), flow.p_minus, flow.p_plus, config.force())
    state = solve_stationary(system, config.solver())
    write_state(out / "state", state)
    if config.output_section.vtk:
        write_state_vtk(out / "state.vtk", state)
    write_history_csv(out / "history.csv", state)
    atomic_write_json(out / "diagnostics.json", {"format": DIAGNOSTICS_FORMAT,
                                                  "config_hash": config.config_hash()} | diagnostics(state))


def cmd_limit(config: RunConfig, out: Path) -> None:
    if config.flow_section.force == "sampled":
        raise ConfigurationError("limit problems need an analytic force; sampled forces live on one mesh")
    flow = config.flow_section
    states = solve_limit_problems(config.pipe(), flow.p_minus, flow.p_plus, config.force(),
                                  config.resolution(), config.solver())
    report: dict[str, Any] = {"format": DIAGNOSTICS_FORMAT, "config_hash": config.config_hash()}
    for name, state in zip(("minus", "plus"), states):
        write_state(out / name, state)
        if config.output_section.vtk:
            write_state_vtk(out / f"{name}.vtk", state)
        report[name] = diagnostics(state)
    atomic_write_json(out / "limit.json", report)


CONSTANTS_COLUMNS: Final[tuple[str, ...]] = ("epsilon", "r_eps", "trace_const", "poincare_const", "bogovskii_lower")


def cmd_constants(config: RunConfig, out: Path) -> None:
    constants = estimate_constants(build_mesh(config)).to_dict()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CONSTANTS_COLUMNS)
    writer.writerow("" if constants[c] is None else repr(float(constants[c])) for c in CONSTANTS_COLUMNS)
    atomic_write_text(out / "constants.csv", buf.getvalue())


def cmd_sweep(config: RunConfig, out: Path) -> None:
    if config.flow_section.force == "sampled":
        raise ConfigurationError("sweeps need an analytic force; sampled forces live on one mesh")
    flow, sweep, perforation = config.flow_section, config.sweep_section, config.perforation_section
    try:
        report = run_sweep(config.pipe(), sweep.epsilons, perforation.strategy, flow.p_minus, flow.p_plus,
                           config.force(), config.resolution(), config.solver(),
                           params=config.perforation(sweep.epsilons[0] if sweep.epsilons else None),
                           margin=perforation.margin, constants=sweep.constants,
                           parallel_workers=sweep.parallel_workers, deterministic=config.deterministic,
                           log_level=config.log_level)
    except PartialSweepError as e:
        e.report.with_config_hash(config.config_hash()).write(out)
        raise
    report.with_config_hash(config.config_hash()).write(out)


COMMANDS: Final[dict[str, Callable[[RunConfig, Path], None]]] = {
    "layout": cmd_layout,
    "mesh": cmd_mesh,
    "solve": cmd_solve,
    "limit": cmd_limit,
    "constants": cmd_constants,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sieveflow",
                                     description="Navier-Stokes flow through a perforated sieve in a pipe.")
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", type=Path, required=True, help="INI run configuration")
    parser.add_argument("--out", type=Path, default=None, help="output directory (overrides [output] directory)")
    parser.add_argument("--deterministic", action="store_true",
                        help="no worker processes and no timestamps; outputs are bit-identical")
    parser.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def _report_error(error: SieveflowError, out: Path | None) -> int:
    doc = json_safe({"format": ERROR_FORMAT} | error.to_dict() | {"exit_code": error.exit_code})
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            atomic_write_text(out / "error.json", text + "\n")
        except SieveflowError as e:
            _logger.warning(f"cannot write error.json: {e}")
    return error.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    init_log_config(logging.INFO)
    out: Path | None = args.out
    try:
        overrides: dict[str, dict[str, str]] = {"output": {}}
        if args.out is not None:
            overrides["output"]["directory"] = str(args.out)
        if args.deterministic:
            overrides["output"]["deterministic"] = "true"
        if args.log_level:
            overrides["output"]["log_level"] = args.log_level
        config = RunConfig.load(args.config).with_overrides(**overrides)
        out = config.out_dir
        logging.getLogger().setLevel(config.log_level)
        config.write_resolved(out)
        _logger.info(f"[RUN] {args.command} config={config.source} hash={config.config_hash()[:12]} out={out}")
        COMMANDS[args.command](config, out)
    except SieveflowError as e:
        _logger.error(f"{args.command} failed: {e}", exc_info=_logger.isEnabledFor(logging.DEBUG))
        return _report_error(e, out)
    _logger.info(f"[EXIT] {args.command} done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
