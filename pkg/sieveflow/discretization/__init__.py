from .space import BCProfile, FunctionSpace, build_space, CELL_QUADRATURE, FACET_QUADRATURE
from .forcing import BodyForce, ZeroForce, ConstantForce, RegionForce, ManufacturedForce, SampledForce
from .assembly import DiscreteSystem, assemble, convection_matrix, newton_matrix
