"""Dirichlet problem for the Laplacian, solved through the first-order system.

With A = I the solution must be the Poisson extension, so this script prints
the per-slice error against the Fourier multiplier e^{-t|xi|} and a few
norms of the gradient.
"""
import numpy as np

from hdbvp import BvpProblem, make_grid, solve
from hdbvp import coefficients as co
from hdbvp.norms import sup_l2, y_norm
from hdbvp.verify import poisson_compare, poisson_oracle

g = make_grid(1, 1, 32, 2 * np.pi, 2.0 ** -6, 2.0 ** 6, 49)
x = g.coords[:, 0]
phi = np.cos(x) + 0.4 * np.sin(2 * x + 0.3) + 0.3

sol = solve(BvpProblem("dirichlet", co.identity(g), phi))
cmp = poisson_compare(sol.u, phi, g)
print(f"boundary residual      {sol.boundary_residual():.2e}")
print(f"worst slice error      {cmp['error']:.2e} over {cmp['slices']} slices")
print(f"constant at infinity   {sol.traces['c'][0].real:.6f}")
print(f"sup_t ||u_t - c||      {sup_l2(g, sol.u - sol.traces['c']):.4f}")
print(f"||grad u||_Y           {y_norm(g, sol.g):.4f}")

ex = poisson_oracle(phi, g)
print("\n   t        ||u_t - c||    error")
for k in range(0, g.K, 8):
    t = g.t_nodes[k]
    du = np.linalg.norm(sol.u[k] - sol.traces["c"]) * np.sqrt(g.cell)
    err = np.linalg.norm(sol.u[k] - ex[k]) / np.linalg.norm(ex[k])
    print(f"{t:8.4f}   {du:10.3e}   {err:8.1e}")
