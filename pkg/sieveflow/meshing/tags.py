from enum import IntEnum


class FacetTag(IntEnum):
    """Boundary facet labels."""
    INLET = 1
    OUTLET = 2
    LATERAL = 3
    SIEVE = 4


class Region(IntEnum):
    """Cell labels below (MINUS) and above (PLUS) the sieve plane z = 0."""
    MINUS = -1
    PLUS = 1


class MeshKind(IntEnum):
    EPS_LEVEL = 0   # perforated pipe
    OPEN = 1        # pipe without wall at z = 0
    HALF_MINUS = 2  # z in (-h, 0), closed at z = 0
    HALF_PLUS = 3   # z in (0, h), closed at z = 0

    @property
    def has_inlet(self) -> bool:
        return self is not MeshKind.HALF_PLUS

    @property
    def has_outlet(self) -> bool:
        return self is not MeshKind.HALF_MINUS

    @property
    def z_range(self) -> tuple[float, float]:
        """Axial extent in units of h."""
        return {MeshKind.HALF_MINUS: (-1.0, 0.0), MeshKind.HALF_PLUS: (0.0, 1.0)}.get(self, (-1.0, 1.0))
