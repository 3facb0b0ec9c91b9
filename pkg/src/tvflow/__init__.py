"""Desk-scale numerics for the total variation flow with Dirichlet boundary and L1 data.

Modules: :mod:`~tvflow.grid` (grids, fields, truncations), :mod:`~tvflow.calculus`
(discrete gradient, divergence, pairing), :mod:`~tvflow.solvers` (implicit
Euler / ROF steps and the p-Laplacian path), :mod:`~tvflow.entropy`
(entropy-formulation residuals), :mod:`~tvflow.theorems` (end-to-end
experiments) and :mod:`~tvflow.config` / :mod:`~tvflow.storage` /
:mod:`~tvflow.cli` (plumbing).
"""

__version__ = "0.1.0"

from .calculus import boundary_flux, divergence, gradient, green_residual, pairing, tv
from .grid import Grid2D, ScalarField, Shape, VectorField, gk, jk, lp_norm, make_field, trunc
from .solvers import InnerOptions, SolveConfig, Source, Trajectory, evolve, rof_step

__all__ = [
    "Grid2D", "ScalarField", "VectorField", "Shape", "make_field", "lp_norm",
    "trunc", "gk", "jk", "gradient", "divergence", "tv", "pairing", "boundary_flux",
    "green_residual", "InnerOptions", "SolveConfig", "Source", "Trajectory", "evolve",
    "rof_step",
]
