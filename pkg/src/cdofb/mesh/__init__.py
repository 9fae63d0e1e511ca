from .core import CellGroup, MeshError, PolytopalMesh
from .generators import build_cartesian, build_voronoi_polygonal_2d
from .io import MeshParseError, read_mesh, write_mesh

__all__ = [
    "CellGroup", "MeshError", "MeshParseError", "PolytopalMesh",
    "build_cartesian", "build_voronoi_polygonal_2d", "read_mesh", "write_mesh",
]
