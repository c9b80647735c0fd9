import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Final

import numpy as np
from skfem import Basis, CellBasis, ElementTetP1, ElementTetP2, ElementTriP1, ElementTriP2, FacetBasis

from ..core.errors import ConfigurationError
from ..meshing import FacetTag, MeshKind, Region, SieveMesh

# Quadrature degrees on cells (per dimension) and on facets.
CELL_QUADRATURE: Final[dict[int, int]] = {2: 5, 3: 4}
FACET_QUADRATURE: Final[int] = 4

_ELEMENTS: Final = {2: (ElementTriP2, ElementTriP1), 3: (ElementTetP2, ElementTetP1)}

_logger = logging.getLogger("discretization")


class BCProfile(StrEnum):
    EPS_LEVEL = "eps_level"
    HALF_MINUS = "half_minus"
    HALF_PLUS = "half_plus"
    CLAMPED = "clamped"     # every velocity component fixed on the whole boundary


_PROFILE_KINDS: Final[dict[BCProfile, tuple[MeshKind, ...]]] = {
    BCProfile.EPS_LEVEL: (MeshKind.EPS_LEVEL, MeshKind.OPEN),
    BCProfile.HALF_MINUS: (MeshKind.HALF_MINUS,),
    BCProfile.HALF_PLUS: (MeshKind.HALF_PLUS,),
    BCProfile.CLAMPED: tuple(MeshKind),
}


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    """Taylor–Hood pair on a SieveMesh.

    Velocity is ``dim`` copies of one scalar P2 basis, global DOF ``c * N2 + i``
    for component ``c`` of scalar DOF ``i``; the last component is axial.
    Pressure is a continuous P1 basis without mean constraint.
    """
    mesh: SieveMesh
    profile: BCProfile
    vbasis: CellBasis
    pbasis: CellBasis
    constrained: np.ndarray
    free: np.ndarray
    intorder: int
    _region_bases: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def axis(self) -> int:
        return self.mesh.dim - 1

    @property
    def n_scalar(self) -> int:
        return self.vbasis.N

    @property
    def n_velocity(self) -> int:
        return self.dim * self.vbasis.N

    @property
    def n_pressure(self) -> int:
        return self.pbasis.N

    def components(self, u: np.ndarray) -> np.ndarray:
        """View of ``u`` as an array of shape ``(dim, N2)``."""
        return np.asarray(u).reshape(self.dim, self.n_scalar)

    def component(self, u: np.ndarray, c: int) -> np.ndarray:
        return self.components(u)[c]

    def scalar_dofs(self, facets: np.ndarray) -> np.ndarray:
        """Scalar P2 DOFs on ``facets``."""
        if facets.size == 0:
            return np.empty(0, dtype=np.int64)
        return np.asarray(self.vbasis.get_dofs(facets).flatten(), dtype=np.int64)

    def facet_basis(self, facets: np.ndarray, pressure: bool = False) -> FacetBasis | None:
        if facets.size == 0:
            return None
        velocity_element, pressure_element = _ELEMENTS[self.dim]
        element = pressure_element() if pressure else velocity_element()
        return FacetBasis(self.mesh.mesh, element, facets=facets, intorder=FACET_QUADRATURE)

    def region_basis(self, region: Region | None, pressure: bool = False) -> CellBasis | None:
        """Cell basis restricted to one region (None for the whole mesh)."""
        if region is None:
            return self.pbasis if pressure else self.vbasis
        key = (int(region), pressure)
        if key not in self._region_bases:
            cells = self.mesh.cells_in(region)
            if cells.size == 0:
                self._region_bases[key] = None
            else:
                element = _ELEMENTS[self.dim][1 if pressure else 0]()
                self._region_bases[key] = Basis(self.mesh.mesh, element, elements=cells, intorder=self.intorder)
        return self._region_bases[key]

    def vertex_dofs(self, pressure: bool = False) -> np.ndarray:
        """DOF index of every mesh vertex in the scalar velocity (or pressure) basis."""
        basis = self.pbasis if pressure else self.vbasis
        return np.asarray(basis.nodal_dofs[0], dtype=np.int64)

    def zero_velocity(self) -> np.ndarray:
        return np.zeros(self.n_velocity)

    def enforce(self, u: np.ndarray) -> np.ndarray:
        """Copy of ``u`` with every constrained DOF set to zero."""
        u = np.array(u, dtype=float)
        u[self.constrained] = 0.0
        return u


def _check_profile(mesh: SieveMesh, profile: BCProfile) -> None:
    if mesh.kind not in _PROFILE_KINDS[profile]:
        raise ConfigurationError(f"boundary profile {profile} does not fit a {mesh.kind.name} mesh")
    if profile is BCProfile.CLAMPED:
        return
    wants_inlet = profile in (BCProfile.EPS_LEVEL, BCProfile.HALF_MINUS)
    wants_outlet = profile in (BCProfile.EPS_LEVEL, BCProfile.HALF_PLUS)
    if mesh.has_tag(FacetTag.INLET) != wants_inlet or mesh.has_tag(FacetTag.OUTLET) != wants_outlet:
        raise ConfigurationError(
            f"boundary profile {profile} needs inlet={wants_inlet}, outlet={wants_outlet}; mesh has "
            f"inlet={mesh.has_tag(FacetTag.INLET)}, outlet={mesh.has_tag(FacetTag.OUTLET)}")


def build_space(mesh: SieveMesh, profile: BCProfile | str = BCProfile.EPS_LEVEL) -> FunctionSpace:
    """Build the velocity/pressure pair and its constraint set.

    All components vanish on LATERAL and SIEVE facets. On INLET and OUTLET only
    the tangential components are fixed; the axial one stays free. CLAMPED
    fixes every component on the whole boundary.

    Raises:
        ConfigurationError: If the mesh tags do not fit the profile.
    """
    profile = BCProfile(profile)
    _check_profile(mesh, profile)
    velocity_element, pressure_element = _ELEMENTS[mesh.dim]
    intorder = CELL_QUADRATURE[mesh.dim]
    vbasis = Basis(mesh.mesh, velocity_element(), intorder=intorder)
    pbasis = Basis(mesh.mesh, pressure_element(), intorder=intorder)
    space = FunctionSpace(mesh, profile, vbasis, pbasis, np.empty(0, dtype=np.int64),
                          np.empty(0, dtype=np.int64), intorder)

    n2, dim = vbasis.N, mesh.dim
    if profile is BCProfile.CLAMPED:
        walls = space.scalar_dofs(mesh.mesh.boundary_facets())
        ends = np.empty(0, dtype=np.int64)
    else:
        walls = space.scalar_dofs(mesh.facets_of(FacetTag.LATERAL, FacetTag.SIEVE))
        ends = space.scalar_dofs(mesh.facets_of(FacetTag.INLET, FacetTag.OUTLET))
    parts = [c * n2 + walls for c in range(dim)] + [c * n2 + ends for c in range(dim - 1)]
    constrained = np.unique(np.concatenate(parts))
    free = np.setdiff1d(np.arange(dim * n2), constrained, assume_unique=True)
    _logger.debug(f"[SPACE] {profile} velocity={dim * n2} (free {free.size}) pressure={pbasis.N}")
    return FunctionSpace(mesh, profile, vbasis, pbasis, constrained, free, intorder)
