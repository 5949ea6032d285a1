"""Picard divergence on purpose.

The adversarial discrepancy is the slab scaled so that the spectral radius of
S_A is 2; the free term is aligned with the top power-iteration vector.  The
iterates then double every step, so the relative Picard increment stalls
near 1 instead of shrinking.  GMRES still solves the equation, and a tenth of
the amplitude converges again.
"""
import numpy as np

from hdbvp import make_grid, prepare
from hdbvp import coefficients as co
from hdbvp import perturbation as pt

g = make_grid(1, 1, 16, 2 * np.pi, 2.0 ** -6, 2.0 ** 6, 49)
A = co.perturb(co.hermitean_random(g, 1, 0.5), "slab", eps=1.0, seed=3, t0=0.25, t1=1.0)
S = prepare(A, check_accretive=False)

adv = pt.adversarial(S.dec, S.E, 2.0, seed=0)
print(f"unit spectral radius {adv.rho_unit:.3f}, amplitude {adv.amplitude:.3f}")

_, diag = pt.picard_solve(S.dec, adv.E, adv.free)
print(f"picard: converged={diag.converged} after {diag.iterations} steps")
for it, res in diag.as_rows()[:8]:
    print(f"  {it:3d}  {res:.3e}")

f, dg = pt.gmres_solve(S.dec, adv.E, adv.free)
print(f"gmres: converged={dg.converged}, residual {dg.fixed_point_residual:.1e}")

_, d10 = pt.picard_solve(S.dec, adv.E.scaled(0.1), adv.free)
print(f"tenth amplitude: converged={d10.converged}, rate {d10.contraction_rate:.3f}")
