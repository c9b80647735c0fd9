import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, splu

from ..core.errors import SolverError
from ..discretization import DiscreteSystem
from .config import LinearSolverKind

_logger = logging.getLogger("linear")

GMRES_RESTART = 200


def _factorize(matrix: sp.spmatrix, what: str):
    try:
        return splu(sp.csc_matrix(matrix))
    except RuntimeError as e:
        raise SolverError(f"{what} is singular: {e}") from e


def _block_preconditioner(system: DiscreteSystem, velocity_block: sp.spmatrix) -> LinearOperator:
    """Inverse of ``[K, Bᵀ; 0, −S]`` with S the lumped pressure mass."""
    free = system.space.free
    k = velocity_block.tocsr()[free][:, free]
    bt = system.B[:, free].T.tocsr()
    k_lu = _factorize(k, "velocity block")
    s_diag = np.asarray(system.pressure_mass.sum(axis=1)).ravel()
    n = free.size

    def apply(r: np.ndarray) -> np.ndarray:
        y_p = -r[n:] / s_diag
        y_u = k_lu.solve(r[:n] - bt @ y_p)
        return np.concatenate([y_u, y_p])

    return LinearOperator((n + s_diag.size,) * 2, matvec=apply, dtype=float)


def solve_saddle(system: DiscreteSystem,
                 velocity_block: sp.spmatrix,
                 rhs: np.ndarray,
                 kind: LinearSolverKind = LinearSolverKind.DIRECT,
                 linear_tol: float = 1e-8) -> np.ndarray:
    """Solve ``[K, Bᵀ; B, 0] x = rhs`` on the free velocity DOFs and all pressure DOFs.

    Raises:
        SolverError: If the matrix is singular or the coupled residual exceeds
            ``linear_tol`` times the rhs norm.
    """
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    matrix = system.saddle(velocity_block)
    if kind is LinearSolverKind.DIRECT:
        lu = _factorize(matrix, "saddle matrix")
        x = lu.solve(rhs)
        x += lu.solve(rhs - matrix @ x)  # one step of iterative refinement
    else:
        m = _block_preconditioner(system, velocity_block)
        x, info = gmres(matrix, rhs, rtol=0.1 * linear_tol, atol=0.0, restart=GMRES_RESTART,
                        maxiter=20, M=m)
        if info != 0:
            raise SolverError(f"GMRES stopped without convergence (info={info})")
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values")
    residual = float(np.linalg.norm(matrix @ x - rhs))
    if residual > linear_tol * rhs_norm:
        raise SolverError(f"linear residual {residual:.3e} exceeds {linear_tol:.1e} x rhs {rhs_norm:.3e}")
    _logger.debug(f"[SOLVE] {kind} residual {residual / rhs_norm:.2e}")
    return x
