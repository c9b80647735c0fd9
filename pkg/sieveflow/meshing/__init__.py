from .tags import FacetTag, MeshKind, Region
from .sievemesh import MeshResolution, SieveMesh, radius_ratio, refine_mesh
from .quality import QualityReport, check_quality, mesh_quality
from .mesher import mesh_half_domain, mesh_open_pipe, mesh_sieve_pipe
from .exchange import mesh_to_text, parse_mesh, read_mesh, read_mesh_with_fields, write_mesh, write_vtk
