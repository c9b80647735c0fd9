from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import scipy.sparse as sp
from skfem import CellBasis

from ..discretization import BodyForce, DiscreteSystem, FunctionSpace, assemble
from ..meshing import FacetTag, Region, SieveMesh
from .config import SolverMode

# Relative inward shift applied to evaluation points so they land inside the source mesh.
NUDGE_FRACTION = 1e-9


@dataclass(frozen=True)
class ProblemData:
    p_minus: float
    p_plus: float
    force: BodyForce
    mode: SolverMode

    @property
    def drop(self) -> float:
        """``p⁺ − p⁻``."""
        return self.p_plus - self.p_minus

    def to_dict(self) -> dict[str, Any]:
        return {"p_minus": self.p_minus, "p_plus": self.p_plus, "force": self.force.describe(),
                "mode": str(self.mode)}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FlowState:
    """Velocity ``u`` and Bernoulli pressure ``Φ`` on a FunctionSpace.

    Coefficient arrays are read-only and every constrained velocity DOF is
    exactly zero.
    """
    space: FunctionSpace
    u: np.ndarray
    phi: np.ndarray
    data: ProblemData
    history: tuple[float, ...] = ()
    iterations: int = 0
    converged: bool = False
    energy_history: tuple[float, ...] = ()
    system: DiscreteSystem | None = field(default=None, repr=False)

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.shape != (self.space.n_velocity,) or np.shape(self.phi) != (self.space.n_pressure,):
            raise ValueError(f"state arrays {u.shape}, {np.shape(self.phi)} do not match the space")
        u[self.space.constrained] = 0.0
        object.__setattr__(self, "u", _readonly(u))
        object.__setattr__(self, "phi", _readonly(self.phi))
        object.__setattr__(self, "history", tuple(float(r) for r in self.history))
        object.__setattr__(self, "energy_history", tuple(float(e) for e in self.energy_history))

    @property
    def mesh(self) -> SieveMesh:
        return self.space.mesh

    @property
    def final_residual(self) -> float:
        return self.history[-1] if self.history else float("nan")

    @cached_property
    def operators(self) -> DiscreteSystem:
        """The system this state solves, assembled on demand for states read from disk."""
        if self.system is not None:
            return self.system
        return assemble(self.space, self.data.p_minus, self.data.p_plus, self.data.force)

    def velocity_at_vertices(self) -> np.ndarray:
        """Velocity at mesh vertices, shape ``(dim, n_vertices)``."""
        return self.space.components(self.u)[:, self.space.vertex_dofs()]

    def bernoulli_at_vertices(self) -> np.ndarray:
        return self.phi[self.space.vertex_dofs(pressure=True)]

    def describe(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_residual": self.final_residual,
            "problem": self.data.to_dict(),
        }


def static_pressure(state: FlowState) -> np.ndarray:
    """Nodal values of ``p = Φ − |u|²/2`` on the pressure space."""
    p = np.array(state.phi)
    p[state.space.vertex_dofs(pressure=True)] -= 0.5 * np.sum(state.velocity_at_vertices() ** 2, axis=0)
    return p


def lateral_inradius(mesh: SieveMesh) -> float:
    """Distance from the axis to the closest lateral facet plane."""
    facets = mesh.facets_of(FacetTag.LATERAL)
    if facets.size == 0:
        return mesh.pipe.R
    normals = mesh.outward_normals(facets)[:-1]
    anchors = mesh.vertices[:-1, mesh.mesh.facets[0, facets]]
    return float(np.min(np.abs(np.sum(normals * anchors, axis=0))))


def nudge_points(points: np.ndarray, mesh: SieveMesh, side: Region | None = None) -> np.ndarray:
    """Move ``points`` into ``mesh`` along the axis and towards it.

    With a ``side``, points are also kept strictly on that side of z = 0, so
    points on the sieve wall read the values of that side of the slit.
    """
    x = np.array(points, dtype=float)
    z = mesh.vertices[-1]
    lo, hi = float(z.min()), float(z.max())
    margin = NUDGE_FRACTION * (hi - lo)
    if side is Region.MINUS:
        hi = min(hi, 0.0)
    elif side is Region.PLUS:
        lo = max(lo, 0.0)
    x[-1] = np.clip(x[-1], lo + margin, hi - margin)
    rho = np.linalg.norm(x[:-1], axis=0)
    limit = lateral_inradius(mesh) * (1.0 - NUDGE_FRACTION)
    scale = np.where(rho > limit, limit / np.maximum(rho, limit), 1.0)
    x[:-1] *= scale
    return x


def point_evaluation(basis: CellBasis, mesh: SieveMesh, points: np.ndarray,
                 side: Region | None = None) -> sp.csr_matrix:
    """Sparse map from the DOFs of ``basis`` to values at ``points``."""
    return sp.csr_matrix(basis.probes(nudge_points(points, mesh, side)))


def interpolate_velocity(state: FlowState, space: FunctionSpace, enforce: bool = True,
                         side: Region | None = None) -> np.ndarray:
    """Interpolate ``state.u`` onto the DOF locations of ``space``, read from ``side`` if given."""
    at_points = point_evaluation(state.space.vbasis, state.mesh, space.vbasis.doflocs, side)
    u = np.concatenate([at_points @ uc for uc in state.space.components(state.u)])
    return space.enforce(u) if enforce else u


def interpolate_bernoulli(state: FlowState, space: FunctionSpace, side: Region | None = None) -> np.ndarray:
    return point_evaluation(state.space.pbasis, state.mesh, space.pbasis.doflocs, side) @ state.phi


def transfer_state(state: FlowState, space: FunctionSpace) -> FlowState:
    """Interpolate ``state`` onto another space, zeroing its constraints.

    The result carries no history and is not marked converged.
    """
    return FlowState(space, interpolate_velocity(state, space), interpolate_bernoulli(state, space), state.data)
