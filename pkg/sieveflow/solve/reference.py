"""Closed-form reference flows.

Hagen–Poiseuille flow is the exact STOKES solution of the hole-free pipe, and
a stream-function flow with matching forcing serves as manufactured solution
of the full problem in 2D.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from skfem import Functional, asm

from ..core.errors import ConfigurationError
from ..discretization import ManufacturedForce, assemble, build_space
from ..geometry import PipeParams
from ..meshing import MeshResolution, SieveMesh, mesh_open_pipe, refine_mesh
from .config import SolverConfig, SolverMode
from .nonlinear import solve_stationary
from .state import FlowState

_logger = logging.getLogger("reference")


def poiseuille_gradient(pipe: PipeParams, p_minus: float, p_plus: float) -> float:
    """Axial pressure gradient magnitude ``G = (p⁻ − p⁺)/(2h)``."""
    return (p_minus - p_plus) / (2.0 * pipe.h)


def poiseuille_velocity(pipe: PipeParams, p_minus: float, p_plus: float, x: np.ndarray) -> np.ndarray:
    """Velocity at points ``x`` of shape ``(dim, ...)``."""
    g = poiseuille_gradient(pipe, p_minus, p_plus)
    rho2 = np.sum(x[:-1] ** 2, axis=0)
    out = np.zeros_like(x, dtype=float)
    out[-1] = g / (2.0 * (pipe.dim - 1)) * (pipe.R ** 2 - rho2)
    return out


def poiseuille_bernoulli(pipe: PipeParams, p_minus: float, p_plus: float, x: np.ndarray) -> np.ndarray:
    return p_minus - poiseuille_gradient(pipe, p_minus, p_plus) * (x[-1] + pipe.h)


def poiseuille_flux(pipe: PipeParams, p_minus: float, p_plus: float) -> float:
    """``πGR⁴/8`` in 3D, ``2GR³/3`` for the channel."""
    g = poiseuille_gradient(pipe, p_minus, p_plus)
    if pipe.dim == 3:
        return math.pi * g * pipe.R ** 4 / 8.0
    return 2.0 * g * pipe.R ** 3 / 3.0


@dataclass(frozen=True)
class ManufacturedSolution:
    """Smooth 2D channel flow satisfying every boundary condition of the open pipe.

    With ``a = (R² − x²)²`` and ``b = cos(kz)``, ``k = π/h``::

        u_x = σ a b'
        u_z = −σ a' b + γ (R² − x²)
        Φ   = p⁻ + (p⁺ − p⁻)(z + h)/(2h) + κ cos(πx/2R) sin(kz)

    ``u`` is solenoidal, vanishes on |x| = R, its tangential part vanishes at
    z = ±h and Φ takes the end values p∓ there.
    """
    pipe: PipeParams
    p_minus: float = 1.0
    p_plus: float = 0.0
    sigma: float = 0.5
    gamma: float = 0.5
    kappa: float = 0.25

    def __post_init__(self):
        if self.pipe.dim != 2:
            raise ConfigurationError("the manufactured solution is defined for dim 2 only")

    @property
    def k(self) -> float:
        return math.pi / self.pipe.h

    def _a(self, x):
        s = self.pipe.R ** 2 - x ** 2
        return s ** 2, -4.0 * x * s, -4.0 * self.pipe.R ** 2 + 12.0 * x ** 2, 24.0 * x

    def _b(self, z):
        k = self.k
        c, s = np.cos(k * z), np.sin(k * z)
        return c, -k * s, -k ** 2 * c, k ** 3 * s

    def velocity(self, x: np.ndarray) -> np.ndarray:
        a, a1, _, _ = self._a(x[0])
        b, b1, _, _ = self._b(x[1])
        return np.stack([self.sigma * a * b1,
                         -self.sigma * a1 * b + self.gamma * (self.pipe.R ** 2 - x[0] ** 2)])

    def velocity_gradient(self, x: np.ndarray) -> np.ndarray:
        """``G[c, d] = ∂_d u_c``, shape ``(2, 2, ...)``."""
        a, a1, a2, _ = self._a(x[0])
        b, b1, b2, _ = self._b(x[1])
        s, g = self.sigma, self.gamma
        return np.stack([np.stack([s * a1 * b1, s * a * b2]),
                         np.stack([-s * a2 * b - 2.0 * g * x[0], -s * a1 * b1])])

    def bernoulli(self, x: np.ndarray) -> np.ndarray:
        h, r = self.pipe.h, self.pipe.R
        linear = self.p_minus + (self.p_plus - self.p_minus) * (x[1] + h) / (2.0 * h)
        return linear + self.kappa * np.cos(math.pi * x[0] / (2.0 * r)) * np.sin(self.k * x[1])

    def static_pressure(self, x: np.ndarray) -> np.ndarray:
        return self.bernoulli(x) - 0.5 * np.sum(self.velocity(x) ** 2, axis=0)

    def force(self, x: np.ndarray) -> np.ndarray:
        """``f = −Δu + ω(−u_z, u_x) + ∇Φ`` with vorticity ``ω = ∂_x u_z − ∂_z u_x``."""
        h, r, k = self.pipe.h, self.pipe.R, self.k
        a, a1, a2, a3 = self._a(x[0])
        b, b1, b2, b3 = self._b(x[1])
        s, g = self.sigma, self.gamma
        u = self.velocity(x)
        lap_x = s * (a2 * b1 + a * b3)
        lap_z = -s * (a3 * b + a1 * b2) - 2.0 * g
        omega = -s * a2 * b - 2.0 * g * x[0] - s * a * b2
        w = math.pi / (2.0 * r)
        dphi_x = -self.kappa * w * np.sin(w * x[0]) * np.sin(k * x[1])
        dphi_z = (self.p_plus - self.p_minus) / (2.0 * h) + self.kappa * k * np.cos(w * x[0]) * np.cos(k * x[1])
        return np.stack([-lap_x - omega * u[1] + dphi_x,
                         -lap_z + omega * u[0] + dphi_z])

    def describe(self) -> dict[str, Any]:
        return {"sigma": self.sigma, "gamma": self.gamma, "kappa": self.kappa,
                "p_minus": self.p_minus, "p_plus": self.p_plus}


def error_norms(state: FlowState, solution: ManufacturedSolution) -> dict[str, float]:
    """L² and H¹-seminorm velocity errors and the L² Bernoulli pressure error."""
    space = state.space

    @Functional
    def velocity_l2(w):
        exact = solution.velocity(w.x)
        return sum((w[f"u{c}"].value - exact[c]) ** 2 for c in range(2))

    @Functional
    def velocity_h1(w):
        exact = solution.velocity_gradient(w.x)
        return sum((w[f"u{c}"].grad[d] - exact[c, d]) ** 2 for c in range(2) for d in range(2))

    @Functional
    def bernoulli_l2(w):
        return (w["phi"].value - solution.bernoulli(w.x)) ** 2

    fields = {f"u{c}": space.vbasis.interpolate(uc) for c, uc in enumerate(space.components(state.u))}
    return {
        "velocity_l2": math.sqrt(asm(velocity_l2, space.vbasis, **fields)),
        "velocity_h1": math.sqrt(asm(velocity_h1, space.vbasis, **fields)),
        "bernoulli_l2": math.sqrt(asm(bernoulli_l2, space.pbasis, phi=space.pbasis.interpolate(state.phi))),
    }


@dataclass(frozen=True)
class ConvergenceStudy:
    rows: tuple[dict[str, float], ...]
    orders: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"rows": [dict(r) for r in self.rows], "orders": {k: list(v) for k, v in self.orders.items()}}


def observed_orders(sizes: np.ndarray, errors: np.ndarray) -> tuple[float, ...]:
    """``log(e_k/e_{k+1}) / log(h_k/h_{k+1})`` for consecutive levels."""
    return tuple(float(o) for o in np.log(errors[:-1] / errors[1:]) / np.log(sizes[:-1] / sizes[1:]))


def convergence_study(levels: int = 3,
                      pipe: PipeParams | None = None,
                      res: MeshResolution | None = None,
                      cfg: SolverConfig | None = None,
                      solution: ManufacturedSolution | None = None,
                      base: SieveMesh | None = None) -> ConvergenceStudy:
    """Solve the manufactured problem on ``levels + 1`` uniformly refined meshes.

    Each refinement halves the mesh size, so observed orders follow from
    consecutive error ratios.
    """
    pipe = pipe or PipeParams(R=1.0, h=2.0, dim=2)
    solution = solution or ManufacturedSolution(pipe)
    cfg = (cfg or SolverConfig()).with_mode(SolverMode.NAVIER_STOKES)
    mesh = base or mesh_open_pipe(pipe, res or MeshResolution(h_far=0.5, h_hole=0.5))
    force = ManufacturedForce(solution)
    rows = []
    state = None
    for level in range(levels + 1):
        if level:
            mesh = refine_mesh(mesh)
        space = build_space(mesh)
        state = solve_stationary(assemble(space, solution.p_minus, solution.p_plus, force), cfg)
        errors = error_norms(state, solution)
        rows.append({"level": level, "size": 0.5 ** level, "cells": mesh.n_cells,
                     "iterations": state.iterations} | errors)
        _logger.info(f"[SOLVE] manufactured level {level}: {errors}")
    sizes = np.array([r["size"] for r in rows])
    orders = {key: observed_orders(sizes, np.array([r[key] for r in rows]))
              for key in ("velocity_l2", "velocity_h1", "bernoulli_l2")}
    return ConvergenceStudy(tuple(rows), orders)
