import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from skfem import asm

from ..discretization.assembly import mass, unit_load
from ..meshing import Region
from ..solve import FlowState, SolverMode


@dataclass(frozen=True, eq=False)
class SidePressure:
    """Mean ``φ`` and fluctuation ``P = Φ − φ`` of the Bernoulli pressure on one region."""
    region: Region
    mean: float
    fluctuation: np.ndarray     # P1 coefficients, zero off the region
    norm: float                 # ‖P‖ on the region
    volume: float
    dofs: np.ndarray

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean, "fluctuation_norm": self.norm, "volume": self.volume}


@dataclass(frozen=True, eq=False)
class PressureSplit:
    minus: SidePressure | None
    plus: SidePressure | None

    def side(self, region: Region) -> SidePressure | None:
        return self.minus if Region(region) is Region.MINUS else self.plus

    def to_dict(self) -> dict[str, Any]:
        return {"minus": self.minus.to_dict() if self.minus else None,
                "plus": self.plus.to_dict() if self.plus else None}


def _side(state: FlowState, region: Region) -> SidePressure | None:
    basis = state.space.region_basis(region, pressure=True)
    if basis is None:
        return None
    weights = asm(unit_load, basis)
    volume = float(np.sum(weights))
    mean = float(weights @ state.phi) / volume
    dofs = np.unique(basis.element_dofs)
    fluctuation = np.zeros_like(state.phi)
    fluctuation[dofs] = state.phi[dofs] - mean
    norm = math.sqrt(max(float(fluctuation @ (asm(mass, basis) @ fluctuation)), 0.0))
    return SidePressure(region, mean, fluctuation, norm, volume, dofs)


def pressure_split(state: FlowState) -> PressureSplit:
    """Region means ``φ±`` and fluctuations ``P±`` of the Bernoulli pressure.

    A side without cells in the mesh is reported as None.
    """
    return PressureSplit(_side(state, Region.MINUS), _side(state, Region.PLUS))


def _unit_flux_field(state: FlowState, region: Region) -> np.ndarray:
    """Interpolant of ``(z/h)² (R² − ρ²) k̂`` on one side, zero on the other."""
    space, pipe = state.space, state.mesh.pipe
    x = space.vbasis.doflocs
    z = x[-1]
    rho2 = np.sum(x[:-1] ** 2, axis=0)
    profile = (z / pipe.h) ** 2 * np.maximum(pipe.R ** 2 - rho2, 0.0) * (z * int(region) > 0)
    v = space.zero_velocity()
    space.components(v)[space.axis] = profile
    return space.enforce(v)


def pressure_mean_identity(state: FlowState, region: Region) -> float | None:
    """``φ±`` recovered from the momentum equation tested with a flux field.

    The test field is a parabolic axial profile, weighted by ``(z/h)²``, which
    vanishes on the wall and on z = 0 and has unit flux through the end of
    its side after normalisation. It agrees with ``pressure_split`` up to the
    solver residual.
    """
    region = Region(region)
    split = pressure_split(state).side(region)
    system = state.operators
    end_flux = system.inlet_flux if region is Region.MINUS else system.outlet_flux
    if split is None:
        return None
    v = _unit_flux_field(state, region)
    through = end_flux(v)
    if through == 0.0:
        return None
    k = system.A if state.data.mode is SolverMode.STOKES else system.A + system.convection(state.u)
    viscous = float((k @ state.u) @ v)
    load = float(system.b_f @ v)
    pressure_work = float(split.fluctuation @ (system.B @ v))
    if region is Region.MINUS:
        return system.p_minus + (load - viscous - pressure_work) / through
    return system.p_plus + (viscous + pressure_work - load) / through
