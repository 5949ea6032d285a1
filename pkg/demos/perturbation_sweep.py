"""Neumann problem on a Hermitean background with a growing slab perturbation.

For each amplitude we print the Carleson-type size of the discrepancy, the
spectral radius of S_A on X, the Picard rate on a generic free term and the
smallest singular value of the boundary map.  The rate tracks the spectral
radius; once that passes 1 the series stops converging ("div"), the solver
falls back to GMRES, and the boundary map stays invertible regardless.
"""
import numpy as np

from hdbvp import BvpProblem, make_grid, prepare, solve, wellposedness_margin
from hdbvp import coefficients as co
from hdbvp import perturbation as pt

g = make_grid(1, 1, 16, 2 * np.pi, 2.0 ** -6, 2.0 ** 6, 49)
base = co.hermitean_random(g, 1, 0.5)
x = g.coords[:, 0]
phi = np.cos(x) - 0.5 * np.sin(3 * x)
rng = np.random.default_rng(0)
free = rng.standard_normal((g.K, g.P, g.d)) + 1j * rng.standard_normal((g.K, g.P, g.d))

print("  eps    star     rho_X   rate    sigma_min  bc")
for eps in (0.1, 0.25, 0.5, 1.0, 1.5):
    A = co.perturb(base, "slab", eps=eps, seed=3, t0=0.25, t1=1.0)
    S = prepare(A, check_accretive=False)
    m = wellposedness_margin(S, kinds=("neumann",))
    _, diag = pt.picard_solve(S.dec, S.E, free)
    rate = f"{diag.contraction_rate:6.3f}" if diag.converged else "   div"
    sol = solve(BvpProblem("neumann", A, phi), S)
    print(f"{eps:5.2f}  {m.star[1]:6.3f}  {m.op_norm_X[1]:6.3f}  {rate}  "
          f"{m.sigma_min['neumann']:8.4f}  {sol.boundary_residual():.1e}")
