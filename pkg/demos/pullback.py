"""Laplace equation above a Lipschitz graph, flattened.

The region t > phi(x) is mapped to the half-space; the Laplacian becomes a
t-independent coefficient field.  A harmonic function that decays upward is
fed in through its boundary values on the graph and recovered in the bulk.
"""
import numpy as np

from hdbvp import BvpProblem, make_grid, solve
from hdbvp import coefficients as co

g = make_grid(1, 1, 64, 2 * np.pi, 2.0 ** -6, 2.0 ** 6, 49)
x = g.coords[:, 0]
graph = 0.3 * np.sin(x)
A = co.pullback_coefficients(co.identity(g), graph, g)
kappa, _ = co.accretivity(A)
print(f"pulled-back coefficients: accretivity constant {kappa:.3f}")


def harmonic(x, s):
    # e^{-|k| s} e^{ikx}, s the height above the flat plane
    return (np.exp(-s + 1j * x) + (0.5 - 0.25j) * np.exp(-2 * s + 2j * x)
            + 0.2 * np.exp(-3 * s - 3j * x))


phi = harmonic(x, graph)
sol = solve(BvpProblem("dirichlet", A, phi))
print(f"boundary residual {sol.boundary_residual():.2e}")
print("\n   t      error vs exact")
for k in range(0, 40, 6):
    t = g.t_nodes[k]
    exact = harmonic(x, graph + t)
    err = np.linalg.norm(sol.u[k, :, 0] - exact) / np.linalg.norm(exact)
    print(f"{t:7.4f}   {err:.2e}")
