import math

import numpy as np
from skfem import asm

from ..discretization.assembly import laplace, mass
from ..meshing import Region
from ..solve import FlowState


def energy(state: FlowState) -> float:
    """``‖∇u‖`` over the whole mesh."""
    return math.sqrt(max(state.operators.dirichlet_energy(state.u), 0.0))


def velocity_norms(state: FlowState, region: Region | None = None) -> dict[str, float]:
    """L² norm, H¹ seminorm and H¹ norm of ``u`` on one region (None for all cells)."""
    basis = state.space.region_basis(region)
    if basis is None:
        return {"l2": 0.0, "h1_semi": 0.0, "h1": 0.0}
    return vector_norms(state.space.components(state.u), asm(mass, basis), asm(laplace, basis))


def vector_norms(components: np.ndarray, m, k) -> dict[str, float]:
    l2 = max(sum(float(c @ (m @ c)) for c in components), 0.0)
    semi = max(sum(float(c @ (k @ c)) for c in components), 0.0)
    return {"l2": math.sqrt(l2), "h1_semi": math.sqrt(semi), "h1": math.sqrt(l2 + semi)}


def energy_identity_residual(state: FlowState) -> float:
    """``‖∇u‖² − ∫f·u + p⁺F_O − p⁻F_I``, which vanishes for exact discrete solutions.

    For solenoidal ``u`` the inlet and outlet fluxes agree and the expression
    is ``‖∇u‖² − ∫f·u + (p⁺ − p⁻)F``.
    """
    system, u = state.operators, state.u
    return (system.dirichlet_energy(u) - float(system.b_f @ u)
            + system.p_plus * system.outlet_flux(u) - system.p_minus * system.inlet_flux(u))
