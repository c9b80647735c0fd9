import logging

from ..discretization import BCProfile, BodyForce, ZeroForce, assemble, build_space
from ..geometry import PipeParams
from ..meshing import MeshResolution, Region, mesh_half_domain, refine_mesh
from .config import SolverConfig
from .nonlinear import solve_stationary
from .state import FlowState

_logger = logging.getLogger("limit")

_PROFILES = {Region.MINUS: BCProfile.HALF_MINUS, Region.PLUS: BCProfile.HALF_PLUS}


def solve_half_problem(pipe: PipeParams,
                       side: Region,
                       p_minus: float,
                       p_plus: float,
                       f: BodyForce,
                       res: MeshResolution,
                       cfg: SolverConfig,
                       refinements: int = 0) -> FlowState:
    """Solve the limit problem on one half pipe closed by a full wall at z = 0."""
    mesh = mesh_half_domain(pipe, side, res)
    for _ in range(refinements):
        mesh = refine_mesh(mesh)
    space = build_space(mesh, _PROFILES[Region(side)])
    return solve_stationary(assemble(space, p_minus, p_plus, f), cfg)


def solve_limit_problems(pipe: PipeParams,
                         p_minus: float,
                         p_plus: float,
                         f: BodyForce | None = None,
                         res: MeshResolution | None = None,
                         cfg: SolverConfig | None = None) -> tuple[FlowState, FlowState]:
    """Solve the two decoupled limit problems on Ω₋ and Ω₊.

    Returns:
        The states on the lower and the upper half pipe.
    """
    f = f or ZeroForce()
    res = res or MeshResolution()
    cfg = cfg or SolverConfig()
    minus = solve_half_problem(pipe, Region.MINUS, p_minus, p_plus, f, res, cfg)
    plus = solve_half_problem(pipe, Region.PLUS, p_minus, p_plus, f, res, cfg)
    _logger.info(f"[LIMIT] energies {minus.operators.dirichlet_energy(minus.u):.3e} / "
                 f"{plus.operators.dirichlet_energy(plus.u):.3e}")
    return minus, plus
