"""Hybrid high-order discretisations on two-dimensional polygonal meshes.

Submodules: ``mesh`` (mesh families, refinement), ``polycalc`` (monomial
bases, quadrature), ``hho_core`` (local reconstructions and stabilisations),
``linsolve`` (sparse solvers), ``poisson``, ``estimators`` (a posteriori
bounds, adaptivity), ``plaplace``, ``adr`` (diffusion-advection-reaction),
``export`` and ``cli``.
"""
from .hho_core import DofVector, HHOSpace
from .mesh import PolytopalMesh, generate_mesh, l_shaped_mesh, read_mesh, refine, write_mesh
from .poisson import solve_poisson

__all__ = ["DofVector", "HHOSpace", "PolytopalMesh", "generate_mesh", "l_shaped_mesh", "read_mesh",
           "refine", "write_mesh", "solve_poisson"]
__version__ = "0.1.0"
