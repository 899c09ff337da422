"""Vacuum poloidal-flux reconstruction from over-determined boundary data.

Reconstructs the flux between a vessel wall (carrying both a Dirichlet trace
and a weighted Neumann trace) and a fictitious inner contour, by minimizing
a regularized energy-gap functional over the unknown inner Dirichlet value,
then extracts the plasma boundary as an isoflux line.
"""

from .completion import (CauchyData, CompletionResult, KVSystem, assemble_kv,
                         evaluate, optimality_residual, quadratic_misfit,
                         solve_completion)
from .fem import (FluxField, StiffnessMatrix, assemble_stiffness,
                  boundary_flux_load, energy_norm_sq, interpolate,
                  solve_dirichlet, solve_neumann, trace,
                  weighted_normal_derivative)
from .mesh import (INNER, OUTER, BoundaryIndex, Mesh, build_boundary_index,
                   circle_loop, dee_loop, generate_annulus_mesh, load_mesh,
                   save_mesh, scale_toward_centroid)
from .postprocess import (FieldSample, Isoline, extract_isoline,
                          find_plasma_boundary, magnetic_field)
from .regularization import LCurve, default_grid, find_corner, sweep

__version__ = "0.1.0"

__all__ = [
    "CauchyData", "CompletionResult", "KVSystem", "assemble_kv", "evaluate",
    "optimality_residual", "quadratic_misfit", "solve_completion",
    "FluxField", "StiffnessMatrix", "assemble_stiffness", "boundary_flux_load",
    "energy_norm_sq", "interpolate", "solve_dirichlet", "solve_neumann",
    "trace", "weighted_normal_derivative",
    "INNER", "OUTER", "BoundaryIndex", "Mesh", "build_boundary_index",
    "circle_loop", "dee_loop", "generate_annulus_mesh", "load_mesh",
    "save_mesh", "scale_toward_centroid",
    "FieldSample", "Isoline", "extract_isoline", "find_plasma_boundary",
    "magnetic_field",
    "LCurve", "default_grid", "find_corner", "sweep",
    "__version__",
]
