from abc import ABC, abstractmethod
from typing import Any, ClassVar, Protocol, Sequence

import numpy as np
from skfem import LinearForm, asm

from ..core.errors import ConfigurationError
from ..meshing import Region
from .space import FunctionSpace


class AnalyticField(Protocol):
    def force(self, x: np.ndarray) -> np.ndarray: ...


def _component_load(c: int, fn):
    @LinearForm
    def load(v, w):
        return fn(w.x)[c] * v.value
    return load


class BodyForce(ABC):
    """Volume force ``f`` entering the load ``b_f = ∫ f·φ``.

    ``min_quadrature`` is the cell quadrature degree the force needs to be
    integrated accurately; assembly refuses coarser rules.
    """
    name: ClassVar[str] = "force"
    min_quadrature: int = 0

    @property
    def is_zero(self) -> bool:
        return False

    @abstractmethod
    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points ``x`` of shape ``(dim, ...)``; returns the same shape."""

    def load(self, space: FunctionSpace) -> np.ndarray:
        if self.is_zero:
            return space.zero_velocity()
        n2 = space.n_scalar
        out = np.zeros(space.n_velocity)
        for c in range(space.dim):
            out[c * n2:(c + 1) * n2] = asm(_component_load(c, self), space.vbasis)
        return out

    def describe(self) -> dict[str, Any]:
        return {"type": self.name}


class ZeroForce(BodyForce):
    name = "zero"

    @property
    def is_zero(self) -> bool:
        return True

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)


class ConstantForce(BodyForce):
    name = "constant"

    def __init__(self, vector: Sequence[float]):
        self.vector = np.asarray(vector, dtype=float)
        if self.vector.ndim != 1 or self.vector.size not in (2, 3):
            raise ConfigurationError(f"constant force needs 2 or 3 components, got {list(self.vector)}")

    @property
    def is_zero(self) -> bool:
        return not np.any(self.vector)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.vector.size:
            raise ConfigurationError(f"force has {self.vector.size} components, domain has {x.shape[0]}")
        return np.broadcast_to(self.vector.reshape((-1,) + (1,) * (x.ndim - 1)), x.shape).copy()

    def describe(self) -> dict[str, Any]:
        return {"type": self.name, "vector": self.vector.tolist()}


class RegionForce(BodyForce):
    """``base`` restricted to one side of the sieve."""
    name = "region"

    def __init__(self, base: BodyForce, region: Region):
        self.base = base
        self.region = Region(region)
        self.min_quadrature = base.min_quadrature

    @property
    def is_zero(self) -> bool:
        return self.base.is_zero

    def __call__(self, x: np.ndarray) -> np.ndarray:
        inside = (x[-1] * int(self.region)) > 0
        return self.base(x) * inside

    def load(self, space: FunctionSpace) -> np.ndarray:
        # Integrate on the region's cells only so the cut at z = 0 is exact.
        basis = space.region_basis(self.region)
        if self.is_zero or basis is None:
            return space.zero_velocity()
        n2 = space.n_scalar
        out = np.zeros(space.n_velocity)
        for c in range(space.dim):
            out[c * n2:(c + 1) * n2] = asm(_component_load(c, self.base), basis)
        return out

    def describe(self) -> dict[str, Any]:
        return {"type": self.name, "region": self.region.name, "base": self.base.describe()}


class ManufacturedForce(BodyForce):
    name = "manufactured"
    min_quadrature = 4

    def __init__(self, solution: AnalyticField):
        self.solution = solution

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.solution.force(x)

    def describe(self) -> dict[str, Any]:
        describe = getattr(self.solution, "describe", None)
        return {"type": self.name, "solution": describe() if describe else type(self.solution).__name__}


class SampledForce(BodyForce):
    """Per-vertex samples, interpolated piecewise linearly."""
    name = "sampled"

    def __init__(self, values: np.ndarray, source: str = ""):
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 2:
            raise ConfigurationError(f"sampled force must be (n_vertices, dim), got shape {self.values.shape}")
        self.source = source

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise ConfigurationError("sampled force is only defined through its mesh")

    def load(self, space: FunctionSpace) -> np.ndarray:
        n_vertices, ncomp = self.values.shape
        if n_vertices != space.mesh.vertices.shape[1] or ncomp != space.dim:
            raise ConfigurationError(
                f"sampled force shape {self.values.shape} does not match mesh "
                f"({space.mesh.vertices.shape[1]} vertices, dim {space.dim})")
        if self.is_zero:
            return space.zero_velocity()

        @LinearForm
        def load(v, w):
            return w["fc"].value * v.value

        pdofs = space.vertex_dofs(pressure=True)
        n2 = space.n_scalar
        out = np.zeros(space.n_velocity)
        for c in range(space.dim):
            nodal = np.zeros(space.n_pressure)
            nodal[pdofs] = self.values[:, c]
            out[c * n2:(c + 1) * n2] = asm(load, space.vbasis, fc=space.pbasis.interpolate(nodal))
        return out

    def describe(self) -> dict[str, Any]:
        return {"type": self.name, "source": self.source}
