"""Operators of the rotational-form Navier–Stokes system.

With viscosity 1 the discrete problem reads::

    (A + C(u)) u + Bᵀ Φ = b_drop + b_f
                   B u  = 0

where ``C(w)`` is the matrix of ``u ↦ (∇w − ∇wᵀ) u``, which is skew-symmetric,
and ``b_drop = −p⁺∫_O φ_z + p⁻∫_I φ_z`` carries the Bernoulli pressure
prescribed at the two ends.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from skfem import BilinearForm, LinearForm, asm
from skfem.helpers import dot, grad

from ..core.errors import ConfigurationError
from ..core.utils import Stopwatch
from ..meshing import FacetTag
from .forcing import BodyForce, ZeroForce
from .space import FunctionSpace

_logger = logging.getLogger("assembly")


@BilinearForm
def laplace(u, v, w):
    return dot(grad(u), grad(v))


@BilinearForm
def mass(u, v, w):
    return u.value * v.value


@LinearForm
def unit_load(v, w):
    return v.value


def _divergence_block(c: int) -> BilinearForm:
    @BilinearForm
    def form(u, q, w):
        return -u.grad[c] * q.value
    return form


def _rotation_block(c: int, d: int) -> BilinearForm:
    @BilinearForm
    def form(u, v, w):
        return (w[f"w{c}"].grad[d] - w[f"w{d}"].grad[c]) * u.value * v.value
    return form


def _newton_block(c: int, e: int, dim: int) -> BilinearForm:
    @BilinearForm
    def form(u, v, w):
        out = -w[f"w{e}"].value * u.grad[c] * v.value
        if c == e:
            out = out + sum(w[f"w{d}"].value * u.grad[d] for d in range(dim)) * v.value
        return out
    return form


def _grad_div_block(c: int, d: int) -> BilinearForm:
    @BilinearForm
    def form(u, v, w):
        return u.grad[d] * v.grad[c]
    return form


def _divergence_load(c: int) -> LinearForm:
    @LinearForm
    def form(v, w):
        return w["f"].value * v.grad[c]
    return form


def grad_div_matrix(space: FunctionSpace) -> sp.csr_matrix:
    """Matrix of ``∫ div u div v``."""
    dim = space.dim
    return sp.bmat([[asm(_grad_div_block(c, d), space.vbasis) for d in range(dim)] for c in range(dim)],
                   format="csr")


def divergence_load(space: FunctionSpace, f: np.ndarray) -> np.ndarray:
    """Vector of ``∫ f div v`` for ``f`` given at the cell quadrature points."""
    return np.concatenate([asm(_divergence_load(c), space.vbasis, f=f) for c in range(space.dim)])


def divergence_at_quadrature(space: FunctionSpace, u: np.ndarray) -> np.ndarray:
    """``div u`` at the cell quadrature points, shape ``(n_cells, n_points)``."""
    return sum(space.vbasis.interpolate(uc).grad[c] for c, uc in enumerate(space.components(u)))


def _fields(space: FunctionSpace, w: np.ndarray) -> dict:
    return {f"w{c}": space.vbasis.interpolate(wc) for c, wc in enumerate(space.components(w))}


def convection_matrix(space: FunctionSpace, w: np.ndarray) -> sp.csr_matrix:
    """Matrix of ``u ↦ (∇w − ∇wᵀ) u``.

    Block ``(c, d)`` is the scalar mass matrix weighted by ``∂_d w_c − ∂_c w_d``.
    Only the upper blocks are assembled; the lower ones are their negatives,
    so the result is skew-symmetric.
    """
    dim, n2 = space.dim, space.n_scalar
    fields = _fields(space, w)
    blocks: list[list] = [[None] * dim for _ in range(dim)]
    for c in range(dim):
        for d in range(c + 1, dim):
            m = asm(_rotation_block(c, d), space.vbasis, **fields)
            blocks[c][d], blocks[d][c] = m, -m
        blocks[c][c] = sp.csr_matrix((n2, n2))
    return sp.bmat(blocks, format="csr")


def newton_matrix(space: FunctionSpace, w: np.ndarray) -> sp.csr_matrix:
    """Matrix of ``δ ↦ (∇δ − ∇δᵀ) w``, the part of the Jacobian not in C(w)."""
    dim = space.dim
    fields = _fields(space, w)
    blocks = [[asm(_newton_block(c, e, dim), space.vbasis, **fields) for e in range(dim)] for c in range(dim)]
    return sp.bmat(blocks, format="csr")


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Assembled operators and loads on one FunctionSpace.

    Vectors and matrices are indexed over all velocity DOFs; solvers restrict
    them to ``space.free``.
    """
    space: FunctionSpace
    A: sp.csr_matrix
    B: sp.csr_matrix
    b_drop: np.ndarray
    b_f: np.ndarray
    outlet_flux_vec: np.ndarray
    inlet_flux_vec: np.ndarray
    p_minus: float
    p_plus: float
    force: BodyForce

    @property
    def rhs(self) -> np.ndarray:
        return self.b_drop + self.b_f

    @cached_property
    def scalar_stiffness(self) -> sp.csr_matrix:
        return asm(laplace, self.space.vbasis).tocsr()

    @cached_property
    def scalar_mass(self) -> sp.csr_matrix:
        return asm(mass, self.space.vbasis).tocsr()

    @cached_property
    def velocity_mass(self) -> sp.csr_matrix:
        return sp.block_diag([self.scalar_mass] * self.space.dim, format="csr")

    @cached_property
    def pressure_mass(self) -> sp.csr_matrix:
        return asm(mass, self.space.pbasis).tocsr()

    def convection(self, w: np.ndarray) -> sp.csr_matrix:
        return convection_matrix(self.space, w)

    def jacobian(self, w: np.ndarray) -> sp.csr_matrix:
        """Velocity block of the Newton matrix at ``w``: ``A + C(w) + D(w)``."""
        return (self.A + convection_matrix(self.space, w) + newton_matrix(self.space, w)).tocsr()

    def saddle(self, velocity_block: sp.spmatrix) -> sp.csc_matrix:
        """``[K, Bᵀ; B, 0]`` restricted to the free velocity DOFs."""
        free = self.space.free
        k = velocity_block.tocsr()[free][:, free]
        b = self.B[:, free]
        return sp.bmat([[k, b.T], [b, None]], format="csc")

    def residual(self, u: np.ndarray, phi: np.ndarray, stokes: bool = False) -> np.ndarray:
        """Coupled residual on the free velocity DOFs followed by the continuity rows."""
        k = self.A if stokes else self.A + self.convection(u)
        momentum = k @ u + self.B.T @ phi - self.rhs
        return np.concatenate([momentum[self.space.free], self.B @ u])

    def outlet_flux(self, u: np.ndarray) -> float:
        return float(self.outlet_flux_vec @ u)

    def inlet_flux(self, u: np.ndarray) -> float:
        return float(self.inlet_flux_vec @ u)

    def dirichlet_energy(self, u: np.ndarray) -> float:
        """``‖∇u‖²``."""
        return float(u @ (self.A @ u))

    def describe(self) -> dict:
        return {
            "profile": str(self.space.profile),
            "velocity_dofs": self.space.n_velocity,
            "free_velocity_dofs": int(self.space.free.size),
            "pressure_dofs": self.space.n_pressure,
            "p_minus": self.p_minus,
            "p_plus": self.p_plus,
            "force": self.force.describe(),
        }


def _axial_functional(space: FunctionSpace, tag: FacetTag) -> np.ndarray:
    out = space.zero_velocity()
    basis = space.facet_basis(space.mesh.facets_of(tag))
    if basis is not None:
        n2 = space.n_scalar
        out[space.axis * n2:(space.axis + 1) * n2] = asm(unit_load, basis)
    return out


def assemble(space: FunctionSpace,
             p_minus: float = 1.0,
             p_plus: float = 0.0,
             f: BodyForce | None = None) -> DiscreteSystem:
    """Assemble the operators and loads of one problem.

    Raises:
        ConfigurationError: If the force needs a finer cell quadrature than the space uses.
    """
    f = f or ZeroForce()
    if f.min_quadrature > space.intorder:
        raise ConfigurationError(
            f"force '{f.name}' needs quadrature degree {f.min_quadrature}, space uses {space.intorder}")
    with Stopwatch() as sw:
        k = asm(laplace, space.vbasis).tocsr()
        a = sp.block_diag([k] * space.dim, format="csr")
        b = sp.hstack([asm(_divergence_block(c), space.vbasis, space.pbasis) for c in range(space.dim)],
                      format="csr")
        outlet = _axial_functional(space, FacetTag.OUTLET)
        inlet = _axial_functional(space, FacetTag.INLET)
        b_drop = -p_plus * outlet + p_minus * inlet
        b_f = f.load(space)
    _logger.info(f"[ASSEMBLE] {space.profile} {space.n_velocity}+{space.n_pressure} dofs "
                 f"in {sw.elapsed:.2f}s")
    return DiscreteSystem(space, a, b, b_drop, b_f, outlet, inlet, float(p_minus), float(p_plus), f)
