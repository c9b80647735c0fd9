"""FlowState serialization.

A state directory holds ``mesh.txt`` (mesh exchange format) and
``state.npz`` with the coefficient arrays ``u``, ``phi``, ``b_f``, the
residual and energy histories and a JSON ``meta`` record.
"""
import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Final

import numpy as np

from ..core.errors import OutputError
from ..core.utils import atomic_write_text
from ..discretization import BCProfile, BodyForce, FunctionSpace, build_space
from ..meshing import read_mesh, write_mesh, write_vtk
from .config import SolverMode
from .state import FlowState, ProblemData, static_pressure

STATE_FORMAT: Final[str] = "sieveflow-state/1"

_logger = logging.getLogger("state-io")


class RecordedForce(BodyForce):
    """Force known only through its assembled load vector."""
    name = "recorded"

    def __init__(self, load_vector: np.ndarray, description: dict[str, Any]):
        self.load_vector = np.asarray(load_vector, dtype=float)
        self.description = description

    @property
    def is_zero(self) -> bool:
        return not np.any(self.load_vector)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise OutputError("a recorded force cannot be evaluated pointwise")

    def load(self, space: FunctionSpace) -> np.ndarray:
        if self.load_vector.shape != (space.n_velocity,):
            raise OutputError(f"recorded load has {self.load_vector.size} entries, space has {space.n_velocity}")
        return self.load_vector.copy()

    def describe(self) -> dict[str, Any]:
        return dict(self.description)


def write_state(directory: Path, state: FlowState) -> None:
    directory = Path(directory)
    write_mesh(directory / "mesh.txt", state.mesh)
    meta = {"format": STATE_FORMAT, "profile": str(state.space.profile), "iterations": state.iterations,
            "converged": state.converged} | state.data.to_dict()
    buffer = io.BytesIO()
    np.savez(buffer, u=state.u, phi=state.phi, b_f=state.operators.b_f, history=np.array(state.history),
             energy_history=np.array(state.energy_history), meta=np.array(json.dumps(meta, sort_keys=True)))
    path = directory / "state.npz"
    try:
        path.write_bytes(buffer.getvalue())
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}") from e
    _logger.info(f"[WRITE] state -> {directory}")


def read_state(directory: Path) -> FlowState:
    directory = Path(directory)
    mesh = read_mesh(directory / "mesh.txt")
    path = directory / "state.npz"
    try:
        with np.load(path, allow_pickle=False) as npz:
            arrays = {key: npz[key] for key in npz.files}
    except (OSError, ValueError) as e:
        raise OutputError(f"Cannot read {path}: {e}") from e
    try:
        meta = json.loads(str(arrays["meta"]))
        if meta.get("format") != STATE_FORMAT:
            raise OutputError(f"{path}: unsupported format {meta.get('format')!r}")
        space = build_space(mesh, BCProfile(meta["profile"]))
        data = ProblemData(float(meta["p_minus"]), float(meta["p_plus"]),
                           RecordedForce(arrays["b_f"], meta["force"]), SolverMode(meta["mode"]))
        return FlowState(space, arrays["u"], arrays["phi"], data, tuple(arrays["history"]),
                         int(meta["iterations"]), bool(meta["converged"]), tuple(arrays["energy_history"]))
    except (KeyError, ValueError) as e:
        raise OutputError(f"{path}: malformed state file ({e})") from e


def write_state_vtk(path: Path, state: FlowState) -> None:
    """Velocity, Bernoulli pressure and static pressure at the mesh vertices."""
    pdofs = state.space.vertex_dofs(pressure=True)
    write_vtk(path, state.mesh, {
        "velocity": state.velocity_at_vertices().T,
        "bernoulli": state.phi[pdofs],
        "pressure": static_pressure(state)[pdofs],
    }, title=f"sieveflow {state.space.profile}")


def history_csv(state: FlowState) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["iteration", "residual", "energy"])
    energies = state.energy_history or (float("nan"),) * len(state.history)
    for k, (r, e) in enumerate(zip(state.history, energies)):
        writer.writerow([k, f"{r:.17g}", f"{e:.17g}"])
    return out.getvalue()


def write_history_csv(path: Path, state: FlowState) -> None:
    atomic_write_text(path, history_csv(state))
