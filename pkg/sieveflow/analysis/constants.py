"""Discrete estimates of the functional constants of a perforated mesh.

Every estimate is a discrete sup (or a witness value), hence a lower bound
of the continuous constant that grows under refinement; results always
carry the mesh they were computed on.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Final

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cholesky, eigh, eigvalsh
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh, splu
from skfem import Basis, ElementTetP2, ElementTriP2, FacetBasis, Functional, LinearForm, asm

from ..core.errors import EigenSolverError, FeasibilityError, SolverError
from ..core.procmanager import ManagedProcess
from ..core.utils import Stopwatch
from ..discretization import (
    BCProfile, CELL_QUADRATURE, FACET_QUADRATURE, DiscreteSystem, FunctionSpace, assemble, build_space,
)
from ..discretization.assembly import (
    divergence_at_quadrature, divergence_load, grad_div_matrix, laplace, mass, unit_load,
)
from ..meshing import FacetTag, SieveMesh, parse_mesh
from ..meshing.sievemesh import SNAP_TOL

_logger = logging.getLogger("constants")

# Generalized eigenproblems up to this size are solved densely.
DENSE_EIGEN_LIMIT: Final[int] = 200
# Masses on at most this many DOFs are reduced to a dense problem on their support.
SUPPORT_EIGEN_LIMIT: Final[int] = 1500
SUPPORT_BLOCK: Final[int] = 100
EIGEN_TOL: Final[float] = 1e-10
EIGEN_MAX_ITER: Final[int] = 5000
FEASIBILITY_TOL: Final[float] = 1e-8
LIFT_GRAD_DIV: Final[float] = 1e4
LIFT_RTOL: Final[float] = 1e-3
LIFT_MAX_ITER: Final[int] = 30

ScalarField = Callable[[np.ndarray], np.ndarray]


def _scalar_problem(mesh: SieveMesh, *clamped: FacetTag) -> tuple[Basis, np.ndarray, sp.csr_matrix]:
    """Scalar P2 basis, the DOFs left free by ``clamped`` and the stiffness on them."""
    element = ElementTriP2() if mesh.dim == 2 else ElementTetP2()
    basis = Basis(mesh.mesh, element, intorder=CELL_QUADRATURE[mesh.dim])
    facets = mesh.facets_of(*clamped)
    fixed = basis.get_dofs(facets).flatten() if facets.size else np.empty(0, dtype=np.int64)
    free = np.setdiff1d(np.arange(basis.N), fixed)
    k = asm(laplace, basis).tocsr()[free][:, free]
    return basis, free, k


def _low_rank_eigenvalue(k: sp.spmatrix, m: sp.spmatrix, support: np.ndarray) -> float:
    """Largest eigenvalue of ``(K⁻¹)_SS M_SS`` for a mass supported on the DOFs ``S``."""
    try:
        lu = splu(sp.csc_matrix(k))
    except RuntimeError as e:
        raise EigenSolverError(f"stiffness matrix is singular: {e}") from e
    n = k.shape[0]
    c = np.empty((support.size, support.size))
    for start in range(0, support.size, SUPPORT_BLOCK):
        cols = support[start:start + SUPPORT_BLOCK]
        rhs = np.zeros((n, cols.size))
        rhs[cols, np.arange(cols.size)] = 1.0
        c[:, start:start + cols.size] = lu.solve(rhs)[support]
    try:
        lower = cholesky(0.5 * (c + c.T), lower=True)
    except LinAlgError as e:
        raise EigenSolverError(f"stiffness matrix is not positive definite: {e}") from e
    m_ss = m[support][:, support].toarray()
    return float(eigvalsh(lower.T @ m_ss @ lower)[-1])


def largest_generalized_eigenvalue(k: sp.spmatrix, m: sp.spmatrix, tol: float = EIGEN_TOL,
                                   max_iter: int | None = EIGEN_MAX_ITER) -> float:
    """Largest ``λ`` of ``M x = λ K x`` for positive definite ``K`` and semidefinite ``M``.

    Small problems are solved densely. A mass living on few DOFs ``S`` (a
    trace mass) reduces to the dense problem for ``(K⁻¹)_SS M_SS``. Otherwise
    ARPACK runs in shift-invert mode around 0 on ``K x = μ M x``, whose
    smallest ``μ`` is ``1/λ``. A zero ``M`` gives 0.

    Raises:
        EigenSolverError: If ``K`` is singular or ARPACK does not converge.
    """
    m = sp.csc_matrix(m)
    if m.nnz == 0 or not np.any(m.data):
        return 0.0
    if k.shape[0] <= DENSE_EIGEN_LIMIT:
        try:
            values = eigh(m.toarray(), sp.csc_matrix(k).toarray(), eigvals_only=True)
        except LinAlgError as e:
            raise EigenSolverError(f"stiffness matrix is not positive definite: {e}") from e
        return float(values[-1])
    support = np.unique(m.nonzero()[0])
    if support.size <= SUPPORT_EIGEN_LIMIT:
        lam = _low_rank_eigenvalue(k, m, support)
    else:
        try:
            mu = eigsh(sp.csc_matrix(k), k=1, M=m, sigma=0.0, which="LM", tol=tol, maxiter=max_iter,
                       return_eigenvectors=False)
        except ArpackNoConvergence as e:
            raise EigenSolverError(f"ARPACK did not converge: {e}") from e
        except (ArpackError, RuntimeError) as e:
            raise EigenSolverError(f"stiffness matrix is singular: {e}") from e
        lam = 1.0 / float(mu[0])
    _logger.debug(f"[CONST] n={k.shape[0]} support={support.size} lambda_max={lam:.6e}")
    return lam


def estimate_trace_constant(mesh: SieveMesh) -> float:
    """``sup ‖φ‖_{L²(Σ)} / ‖∇φ‖`` over scalar P2 fields vanishing on the lateral wall and the sieve.

    The sup only sees the holes, so a mesh without holes gives 0.
    """
    basis, free, k = _scalar_problem(mesh, FacetTag.LATERAL, FacetTag.SIEVE)
    sigma = mesh.sigma_facets
    if sigma.size == 0:
        return 0.0
    fb = FacetBasis(mesh.mesh, basis.elem, facets=sigma, intorder=FACET_QUADRATURE)
    m = asm(mass, fb).tocsr()[free][:, free]
    if m.nnz == 0 or not np.any(m.data):
        return 0.0
    return math.sqrt(largest_generalized_eigenvalue(k, m))


def estimate_poincare_constant(mesh: SieveMesh) -> float:
    """``sup ‖φ‖_{L²} / ‖∇φ‖`` over scalar P2 fields vanishing on the lateral wall."""
    basis, free, k = _scalar_problem(mesh, FacetTag.LATERAL)
    m = asm(mass, basis).tocsr()[free][:, free]
    return math.sqrt(largest_generalized_eigenvalue(k, m))


def cell_components(mesh: SieveMesh) -> tuple[int, np.ndarray]:
    """Connected components of the cell graph through interior facets."""
    f2t = mesh.mesh.f2t
    inner = f2t[1] >= 0
    a, b = f2t[0, inner], f2t[1, inner]
    n = mesh.n_cells
    graph = sp.coo_matrix((np.ones(a.size), (a, b)), shape=(n, n))
    return connected_components(graph, directed=False)


def _check_feasible(mesh: SieveMesh, cell_integrals: np.ndarray) -> tuple[int, np.ndarray]:
    """Divergence data must integrate to zero on every closed part of the mesh."""
    n_comp, labels = cell_components(mesh)
    totals = np.bincount(labels, weights=cell_integrals, minlength=n_comp)
    volumes = np.bincount(labels, weights=mesh.cell_volumes, minlength=n_comp)
    bad = np.flatnonzero(np.abs(totals) > FEASIBILITY_TOL * np.maximum(volumes, 1.0))
    if bad.size:
        raise FeasibilityError(
            f"divergence data has integral {totals[bad[0]]:.4e} on a closed part of the mesh "
            f"(volume {volumes[bad[0]]:.4e}); no velocity vanishing on its boundary carries it")
    return n_comp, labels


class DivergenceSolver:
    """Factorized saddle system for velocities with prescribed weak divergence on a CLAMPED space.

    Solves ``min ½‖∇v‖² + ½γ‖div v − f‖²`` subject to ``B v = data``, the
    constraint bordered with one pressure-mean multiplier per cell component
    to remove the constant pressure modes. ``γ = 0`` gives the minimal-gradient
    velocity.

    Raises:
        SolverError: If the bordered matrix cannot be factorized.
    """

    def __init__(self, system: DiscreteSystem, labels: np.ndarray, n_comp: int, grad_div: float = 0.0):
        space = system.space
        self.system = system
        self.free = space.free
        weights = asm(unit_load, space.pbasis)
        cell_dofs = space.pbasis.element_dofs
        dof_component = np.zeros(space.n_pressure, dtype=np.int64)
        dof_component[cell_dofs.ravel()] = np.broadcast_to(labels, cell_dofs.shape).ravel()
        border = sp.csr_matrix((weights, (np.arange(space.n_pressure), dof_component)),
                               shape=(space.n_pressure, n_comp))
        velocity_block = system.A + grad_div * grad_div_matrix(space) if grad_div else system.A
        a = velocity_block[self.free][:, self.free]
        b = system.B[:, self.free]
        matrix = sp.bmat([[a, b.T, None], [b, None, border], [None, border.T, None]], format="csc")
        self.n_comp = n_comp
        try:
            self._lu = splu(matrix)
        except RuntimeError as e:
            raise SolverError(f"divergence saddle matrix is singular: {e}") from e

    def solve(self, data: np.ndarray, load: np.ndarray | None = None) -> np.ndarray:
        """Velocity with ``B v = data``; ``load`` is the velocity right-hand side (zero by default)."""
        n = self.free.size
        top = np.zeros(n) if load is None else load[self.free]
        x = self._lu.solve(np.concatenate([top, data, np.zeros(self.n_comp)]))
        if not np.all(np.isfinite(x)):
            raise SolverError("divergence solve produced non-finite values")
        v = self.system.space.zero_velocity()
        v[self.free] = x[:n]
        return v


def solve_divergence(system: DiscreteSystem, data: np.ndarray, labels: np.ndarray, n_comp: int) -> np.ndarray:
    """Minimal-gradient velocity with ``B v = data`` on a CLAMPED space."""
    return DivergenceSolver(system, labels, n_comp).solve(data)


def _gradient_norm(system: DiscreteSystem, v: np.ndarray) -> float:
    return math.sqrt(max(system.dirichlet_energy(v), 0.0))


@LinearForm
def _sign_load(q, w):
    return np.where(w.x[-1] < 0.0, -1.0, 1.0) * q.value


def bogovskii_witness(mesh: SieveMesh) -> float:
    """``‖∇v*‖ / ‖g*‖`` for the minimal-gradient ``v*`` vanishing on the whole boundary with
    ``div v* = g*``, where ``g* = −1`` below and ``+1`` above the sieve.

    Raises:
        FeasibilityError: If ``g*`` cannot be carried, e.g. through a closed sieve.
    """
    g = np.where(mesh.cell_centroids[mesh.axis] < 0.0, -1.0, 1.0)
    n_comp, labels = _check_feasible(mesh, g * mesh.cell_volumes)
    system = assemble(build_space(mesh, BCProfile.CLAMPED), 0.0, 0.0)
    # B v = −∫ q div v
    v = solve_divergence(system, -asm(_sign_load, system.space.pbasis), labels, n_comp)
    return _gradient_norm(system, v) / math.sqrt(mesh.volume)


@dataclass(frozen=True, eq=False)
class LiftResult:
    space: FunctionSpace
    Y: np.ndarray
    grad_ratio: float
    divergence_residual: float
    u0_flux: float
    total: float
    iterations: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"grad_ratio": self.grad_ratio, "divergence_residual": self.divergence_residual,
                "u0_flux": self.u0_flux, "total": self.total, "iterations": self.iterations}


def poiseuille_section_integral(mesh: SieveMesh) -> float:
    """``∫ (R² − ρ²)`` over the outlet section as the constrained P2 field sees it, in closed form.

    The 2D section is the segment ``[−R, R]``. The 3D section is the polygon
    of lateral vertices at the outlet, integrated by its fan of triangles from
    the axis. The lateral edge midpoints are constrained to zero, so each
    drops ``(R² − ρ_m²)|T|/3`` with ``T`` its outlet triangle. The value tends
    to ``πR⁴/2`` under refinement.
    """
    R, h = mesh.pipe.R, mesh.pipe.h
    if mesh.dim == 2:
        return 4.0 * R ** 3 / 3.0
    p = mesh.vertices
    ring = np.unique(mesh.mesh.facets[:, mesh.facets_of(FacetTag.LATERAL)])
    ring = ring[np.abs(p[2, ring] - h) <= SNAP_TOL * max(R, h)]
    ring = ring[np.argsort(np.arctan2(p[1, ring], p[0, ring]))]
    a = p[:2, ring]
    b = np.roll(a, -1, axis=1)
    area = 0.5 * (a[0] * b[1] - a[1] * b[0])
    polar = area / 6.0 * (np.sum(a * a, axis=0) + np.sum(b * b, axis=0) + np.sum(a * b, axis=0))
    polygon = float(np.sum(R ** 2 * area - polar))

    n = p.shape[1]
    rim = np.sort(np.vstack([ring, np.roll(ring, -1)]), axis=0)
    rim_keys = rim[0] * n + rim[1]
    outlet = mesh.facets_of(FacetTag.OUTLET)
    tris = mesh.mesh.facets[:, outlet]
    thirds = mesh.facet_measures(outlet) / 3.0
    lost = 0.0
    for i, j in ((0, 1), (1, 2), (0, 2)):
        lo, hi = np.minimum(tris[i], tris[j]), np.maximum(tris[i], tris[j])
        on_rim = np.isin(lo * n + hi, rim_keys)
        mid = 0.5 * (p[:2, tris[i]] + p[:2, tris[j]])[:, on_rim]
        lost += float(np.sum((R ** 2 - np.sum(mid * mid, axis=0)) * thirds[on_rim]))
    return polygon - lost


def _outlet_shape(space: FunctionSpace) -> np.ndarray:
    """Hagen–Poiseuille field of unit outlet flow rate times ``z(z+h)/(2h²)``, zero on the walls."""
    pipe = space.mesh.pipe
    x = space.vbasis.doflocs
    z = x[-1]
    rho2 = np.sum(x[:-1] ** 2, axis=0)
    profile = np.maximum(pipe.R ** 2 - rho2, 0.0) / poiseuille_section_integral(space.mesh)
    shape = space.zero_velocity()
    space.components(shape)[space.axis] = z * (z + pipe.h) / (2.0 * pipe.h ** 2) * profile
    return space.enforce(shape)


def divergence_lift(mesh: SieveMesh, q: ScalarField, grad_div: float = LIFT_GRAD_DIV,
                    rtol: float = LIFT_RTOL, max_iter: int = LIFT_MAX_ITER) -> LiftResult:
    """Velocity ``Y`` in the ε-level space with ``div Y = q``.

    ``Y = Q + X``: ``Q = (∫q) U₀`` carries the total source out through the
    outlet, ``U₀`` the Hagen–Poiseuille field normalized in closed form to
    unit outlet flow rate. ``X`` vanishes on the whole boundary, satisfies
    ``div X = q − div Q`` weakly against the pressure space, and is driven
    towards it in L² by augmented Lagrangian steps with grad-div weight
    ``grad_div``, stopping once ``‖div Y − q‖ ≤ rtol ‖q‖``.

    Raises:
        FeasibilityError: If the remainder has nonzero integral on a closed part of the mesh.
    """
    space = build_space(mesh, BCProfile.EPS_LEVEL)
    clamped = assemble(build_space(mesh, BCProfile.CLAMPED), 0.0, 0.0)
    dim = mesh.dim

    @Functional
    def integral(w):
        return q(w.x)

    @Functional
    def square(w):
        return q(w.x) ** 2

    @LinearForm
    def source(p, w):
        return q(w.x) * p.value

    @Functional
    def divergence_gap(w):
        return q(w.x) - sum(w[f"v{c}"].grad[c] for c in range(dim))

    def fields(v: np.ndarray) -> dict[str, Any]:
        return {f"v{c}": space.vbasis.interpolate(vc) for c, vc in enumerate(space.components(v))}

    @Functional
    def l2(w):
        return w["r"].value ** 2

    total = float(asm(integral, space.vbasis))
    u0 = _outlet_shape(space)
    outlet = clamped.outlet_flux_vec
    u0_flux = float(outlet @ u0)
    # Q carries exactly ∫q through the outlet
    Q = total / u0_flux * u0

    n_comp, labels = _check_feasible(mesh, divergence_gap.elemental(space.vbasis, **fields(Q)))
    q_norm = math.sqrt(max(float(asm(square, space.vbasis)), 0.0))
    target = q(space.vbasis.global_coordinates().value) - divergence_at_quadrature(space, Q)
    data = -asm(source, space.pbasis) - clamped.B @ Q

    solver = DivergenceSolver(clamped, labels, n_comp, grad_div)
    multiplier = np.zeros_like(target)
    scale = q_norm if q_norm else 1.0
    for it in range(1, max_iter + 1):
        X = solver.solve(data, divergence_load(space, grad_div * target - multiplier))
        gap = divergence_at_quadrature(space, X) - target
        residual = math.sqrt(max(float(asm(l2, space.vbasis, r=gap)), 0.0)) / scale
        if residual <= rtol or not grad_div:
            break
        multiplier = multiplier + grad_div * gap
    else:
        _logger.warning(f"[CONST] lift residual {residual:.3e} above {rtol:g} after {max_iter} steps")
    Y = space.enforce(Q + X)

    grad_ratio = _gradient_norm(clamped, Y) / q_norm if q_norm else 0.0
    result = LiftResult(space, Y, grad_ratio, residual, u0_flux, total, it)
    _logger.info(f"[CONST] lift total={total:.4e} residual={residual:.3e} ratio={grad_ratio:.4e} steps={it}")
    return result


@dataclass(frozen=True)
class FunctionalConstants:
    """Constants of one mesh; an infeasible Bogovskii witness is stored as ``inf``."""
    epsilon: float | None
    r_eps: float | None
    trace_const: float
    poincare_const: float
    bogovskii_lower: float
    provenance: dict[str, Any] = field(default_factory=dict)

    @property
    def bogovskii_feasible(self) -> bool:
        return math.isfinite(self.bogovskii_lower)

    def to_dict(self) -> dict[str, Any]:
        return {"epsilon": self.epsilon, "r_eps": self.r_eps, "trace_const": self.trace_const,
                "poincare_const": self.poincare_const, "bogovskii_lower": self.bogovskii_lower,
                "provenance": dict(self.provenance)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FunctionalConstants":
        return cls(d.get("epsilon"), d.get("r_eps"), float(d["trace_const"]), float(d["poincare_const"]),
                   float(d["bogovskii_lower"]), dict(d.get("provenance", {})))


def estimate_constants(mesh: SieveMesh) -> FunctionalConstants:
    params = mesh.layout.params if mesh.layout is not None else None
    with Stopwatch() as sw:
        trace = estimate_trace_constant(mesh)
        poincare = estimate_poincare_constant(mesh)
        try:
            bogovskii = bogovskii_witness(mesh)
        except FeasibilityError as e:
            _logger.info(f"[CONST] bogovskii witness infeasible: {e}")
            bogovskii = math.inf
    _logger.info(f"[CONST] trace={trace:.4e} poincare={poincare:.4e} bogovskii={bogovskii:.4e} "
                 f"({sw.elapsed:.2f}s)")
    return FunctionalConstants(params.epsilon if params else None, params.r_eps if params else None,
                               trace, poincare, bogovskii, mesh.describe())


class ConstantsProcess(ManagedProcess):
    """Estimates the constants of one mesh in a spawned worker.

    The mesh travels as exchange-format text.
    """

    def __init__(self, mesh_text: str, *, name: str, log_level: int = logging.NOTSET):
        super().__init__(name=name, log_level=log_level)
        self.mesh_text = mesh_text

    def task(self) -> dict[str, Any]:
        return estimate_constants(parse_mesh(self.mesh_text, self.name)).to_dict()
