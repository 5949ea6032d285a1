"""First-order solver for L2 Dirichlet, Neumann and regularity problems
for divergence-form systems on the periodic half-space."""
from .grid import Grid, make_grid, nodes_for
from .coefficients import CoefficientField
from .bvp import BvpProblem, Setup, Solution, prepare, solve, wellposedness_margin

__version__ = "0.1.0"

__all__ = ["Grid", "make_grid", "nodes_for", "CoefficientField", "BvpProblem", "Setup",
           "Solution", "prepare", "solve", "wellposedness_margin"]
