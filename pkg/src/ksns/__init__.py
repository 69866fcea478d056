"""Bound-preserving stabilized FEM for chemotaxis coupled to incompressible flow."""

from .mesh import (
    TriMesh,
    generate_disc_mesh,
    compute_symmetric_nodes,
    check_weak_acuteness,
    refine_region,
    save_mesh,
    load_mesh,
)

__all__ = [
    "TriMesh",
    "generate_disc_mesh",
    "compute_symmetric_nodes",
    "check_weak_acuteness",
    "refine_region",
    "save_mesh",
    "load_mesh",
]

__version__ = "0.1.0"
