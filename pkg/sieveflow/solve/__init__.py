from .config import LinearSolverKind, Scheme, SolverConfig, SolverMode
from .state import (
    FlowState, ProblemData, interpolate_bernoulli, interpolate_velocity, nudge_points, point_evaluation,
    static_pressure, transfer_state,
)
from .linear import solve_saddle
from .nonlinear import solve_stationary
from .limits import solve_half_problem, solve_limit_problems
from .reference import (
    ConvergenceStudy, ManufacturedSolution, convergence_study, error_norms, poiseuille_bernoulli,
    poiseuille_flux, poiseuille_gradient, poiseuille_velocity,
)
from .io import read_state, write_history_csv, write_state, write_state_vtk
