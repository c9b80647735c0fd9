import logging

import numpy as np

from ..core.errors import ConfigurationError, NonconvergenceError
from ..core.utils import Stopwatch
from ..discretization import DiscreteSystem
from .config import Scheme, SolverConfig, SolverMode
from .linear import solve_saddle
from .state import FlowState, ProblemData

_logger = logging.getLogger("solver")


class _Iterate:
    """Mutable iterate of the nonlinear loop and its divergence bookkeeping."""

    def __init__(self, system: DiscreteSystem, cfg: SolverConfig, initial: FlowState | None):
        space = system.space
        self.system, self.cfg = system, cfg
        if initial is not None:
            if (initial.space.n_velocity, initial.space.n_pressure) != (space.n_velocity, space.n_pressure):
                raise ConfigurationError("initial state lives on a different space; use transfer_state first")
            self.u = space.enforce(initial.u)
            self.phi = np.array(initial.phi, dtype=float)
        else:
            self.u = space.zero_velocity()
            self.phi = np.zeros(space.n_pressure)
        self.history: list[float] = []
        self.energies: list[float] = []
        self.scale = max(float(np.linalg.norm(system.rhs[space.free])), np.finfo(float).tiny)
        self._growing = 0

    def residual(self, stokes: bool = False) -> np.ndarray:
        return self.system.residual(self.u, self.phi, stokes=stokes)

    def record(self, residual: np.ndarray) -> float:
        rel = float(np.linalg.norm(residual)) / self.scale
        self.history.append(rel)
        self.energies.append(self.system.dirichlet_energy(self.u))
        return rel

    def check_growth(self, rel: float) -> None:
        if not np.isfinite(rel):
            raise NonconvergenceError("residual is not finite", self.history)
        best = min(self.history)
        self._growing = self._growing + 1 if rel > self.cfg.growth_factor * best else 0
        if self._growing >= self.cfg.patience:
            raise NonconvergenceError(
                f"residual {rel:.3e} above {self.cfg.growth_factor} x best {best:.3e} "
                f"for {self._growing} iterations", self.history)

    def apply(self, x: np.ndarray, damping: float = 1.0, increment: bool = False) -> None:
        free = self.system.space.free
        du, dphi = x[:free.size], x[free.size:]
        if increment:
            self.u[free] += du
            self.phi += dphi
        else:
            self.u[free] += damping * (du - self.u[free])
            self.phi += damping * (dphi - self.phi)

    def state(self, iterations: int, converged: bool) -> FlowState:
        data = ProblemData(self.system.p_minus, self.system.p_plus, self.system.force, self.cfg.mode)
        return FlowState(self.system.space, self.u, self.phi, data, tuple(self.history), iterations,
                         converged, tuple(self.energies), self.system)


def solve_stationary(system: DiscreteSystem,
                     cfg: SolverConfig | None = None,
                     initial: FlowState | None = None) -> FlowState:
    """Solve the assembled problem.

    STOKES performs one saddle solve. NAVIER_STOKES iterates damped Picard
    steps ``[A + C(u), Bᵀ; B, 0]``, Newton steps with the full Jacobian, or
    Picard until the relative residual falls below ``cfg.newton_switch`` and
    Newton afterwards. The relative residual is the coupled residual norm over
    the norm of the load on the free DOFs.

    Args:
        system: Assembled operators and loads.
        cfg: Solver settings.
        initial: Optional warm start on the same space.

    Raises:
        NonconvergenceError: If the residual keeps growing or ``cfg.max_iter`` is reached.
        SolverError: If a linear solve is singular or inaccurate.
    """
    cfg = cfg or SolverConfig()
    it = _Iterate(system, cfg, initial)
    free = system.space.free
    rhs = np.concatenate([system.rhs[free], np.zeros(system.space.n_pressure)])

    with Stopwatch() as sw:
        if cfg.mode is SolverMode.STOKES:
            it.apply(solve_saddle(system, system.A, rhs, cfg.linear_solver, cfg.linear_tol))
            rel = it.record(it.residual(stokes=True))
            state = it.state(1, True)
        else:
            state = _iterate(it, rhs)
            rel = state.final_residual
    _logger.info(f"[SOLVE] {cfg.mode} {state.iterations} iterations, residual {rel:.2e}, "
                 f"energy {it.energies[-1]:.6e} in {sw.elapsed:.2f}s")
    return state


def _iterate(it: _Iterate, rhs: np.ndarray) -> FlowState:
    system, cfg = it.system, it.cfg
    newton = cfg.scheme is Scheme.NEWTON
    for k in range(cfg.max_iter + 1):
        r = it.residual()
        rel = it.record(r)
        _logger.debug(f"[ITER] {k} {'newton' if newton else 'picard'} residual {rel:.3e}")
        if rel <= cfg.tol:
            return it.state(k, True)
        if k == cfg.max_iter:
            break
        it.check_growth(rel)
        if not newton and cfg.scheme is Scheme.PICARD_THEN_NEWTON and rel < cfg.newton_switch:
            _logger.debug(f"[ITER] switching to newton at {k}")
            newton = True
        if newton:
            x = solve_saddle(system, system.jacobian(it.u), -r, cfg.linear_solver, cfg.linear_tol)
            it.apply(x, increment=True)
        else:
            k_mat = system.A + system.convection(it.u)
            it.apply(solve_saddle(system, k_mat, rhs, cfg.linear_solver, cfg.linear_tol), cfg.damping)
    raise NonconvergenceError(f"no convergence in {cfg.max_iter} iterations "
                              f"(residual {it.history[-1]:.3e}, tol {cfg.tol:.1e})", it.history)
