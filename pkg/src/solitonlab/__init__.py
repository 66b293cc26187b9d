"""Finite-difference construction and analysis of graphical translating solitons."""

from .errors import SolitonLabError
from .grid import BoundarySpec, DomainSpec, Grid, ScalarField, build_grid
from .pde import SolveReport, SolverConfig, solve_bvp, translator_residual
from .surfaces import SurfaceKind, construct_piece

__all__ = [
    "BoundarySpec", "DomainSpec", "Grid", "ScalarField", "SolitonLabError", "SolveReport",
    "SolverConfig", "SurfaceKind", "build_grid", "construct_piece", "solve_bvp",
    "translator_residual",
]

__version__ = "0.1.0"
