"""Neumann, regularity and Dirichlet solvers on the half-space.

Each solve goes through the same steps: trace coefficients A0, B0 = hat A0,
the discrepancy E = B0 - hat A, the DB0 calculus, the boundary map (Gamma
for Neumann / regularity, Gamma~ for Dirichlet) assembled column by column,
one inversion of that map, and one last fixed-point solve for the datum.

All boundary maps act between orthonormal bases in the plain l2 inner product
on lattice values.  Domain: an orthonormal basis of the discrete E0+ H.
Codomain: mean-zero Fourier modes of the normal part (Neumann), the
xi/|xi| tangential modes (regularity), or all Fourier modes of the normal
part (Dirichlet, which also carries the m constants c).
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as sla

from . import perturbation as pt
from .calculus import SpectralDecomp, apply_D, multiply, range_basis, spectral_decompose
from .coefficients import (CoefficientField, Discrepancy, conormal_to_gradient, discrepancy,
                           hat_transform, require_accretive, trace_coefficients)
from .grid import Grid, GridError
from .norms import NormReport, norm_report, sup_l2, x_norm, y_norm

KINDS = ("neumann", "regularity", "dirichlet")
SIGMA_MIN = 1e-6
CONTRACTION_LIMIT = 0.9
DIRICHLET_SIGN = -1     # u = c + sign * v_perp


class BvpError(ValueError):
    pass


class NotWellPosed(RuntimeError):
    pass


def _kind(kind: str) -> str:
    k = str(kind).lower()
    if k not in KINDS:
        raise BvpError(f"unknown problem kind {kind!r}")
    return k


@dataclass(eq=False)
class BvpProblem:
    kind: str
    A: CoefficientField
    phi: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.kind = _kind(self.kind)
        g = self.A.grid
        width = g.n * g.m if self.kind == "regularity" else g.m
        phi = np.asarray(self.phi, dtype=complex)
        if phi.shape == (g.P,) and width == 1:
            phi = phi[:, None]
        if phi.shape != (g.P, width):
            raise GridError(f"datum shape {phi.shape}, expected {(g.P, width)}")
        if not np.all(np.isfinite(phi)):
            raise BvpError("non-finite datum")
        self.phi = phi
        nphi = np.linalg.norm(phi)
        if self.kind == "regularity" and nphi > 0:
            c = _tangential_coords(g, phi)
            back = _tangential_field(g, c)
            if np.linalg.norm(back - phi) > 1e-9 * nphi:
                raise BvpError("regularity datum is not a tangential gradient (curl or mean part)")
        if self.kind == "neumann" and nphi > 0:
            if np.linalg.norm(phi.mean(axis=0)) * np.sqrt(g.P) > 1e-9 * nphi:
                raise BvpError("Neumann datum must have zero mean on the torus")

    @property
    def grid(self) -> Grid:
        return self.A.grid


# --- codomain coordinates ---------------------------------------------------------

def _mode_split(grid: Grid):
    """Column indices of the normal and tangential halves of the range basis."""
    Qc = range_basis(grid).shape[1]
    idx = np.arange(Qc).reshape(-1, 2, grid.m)
    return idx[:, 0, :].ravel(), idx[:, 1, :].ravel()


def _normal_coords(grid: Grid, f_perp, with_mean: bool):
    """Unitary Fourier coordinates of a (..., P, m) field; mean mode optional."""
    fh = grid.fft(np.asarray(f_perp))
    keep = grid.xi_abs > 0 if not with_mean else np.ones(grid.P, bool)
    return fh[..., keep, :].reshape(fh.shape[:-2] + (-1,))


def _normal_field(grid: Grid, c, with_mean: bool):
    keep = grid.xi_abs > 0 if not with_mean else np.ones(grid.P, bool)
    c = np.asarray(c)
    fh = np.zeros(c.shape[:-1] + (grid.P, grid.m), dtype=complex)
    fh[..., keep, :] = c.reshape(c.shape[:-1] + (int(keep.sum()), grid.m))
    return grid.ifft(fh)


def _tangential_coords(grid: Grid, f_par):
    """Coefficients on xi/|xi| e^{i xi x}/sqrt(P) (x) e_a of a (..., P, n m) field."""
    f_par = np.asarray(f_par)
    fh = grid.fft(f_par).reshape(f_par.shape[:-1] + (grid.n, grid.m))
    keep = grid.xi_abs > 0
    xh = grid.xi[keep] / grid.xi_abs[keep, None]
    return np.einsum("...pia,pi->...pa", fh[..., keep, :, :], xh).reshape(f_par.shape[:-2] + (-1,))


def _tangential_field(grid: Grid, c):
    c = np.asarray(c)
    keep = grid.xi_abs > 0
    xh = grid.xi[keep] / grid.xi_abs[keep, None]
    ca = c.reshape(c.shape[:-1] + (int(keep.sum()), grid.m))
    fh = np.zeros(c.shape[:-1] + (grid.P, grid.n, grid.m), dtype=complex)
    fh[..., keep, :, :] = np.einsum("...pa,pi->...pia", ca, xh)
    fh = fh.reshape(c.shape[:-1] + (grid.P, grid.n * grid.m))
    return grid.ifft(fh)


# --- domain basis ---------------------------------------------------------------

def plus_basis(dec: SpectralDecomp):
    """Orthonormal basis of the discrete E0+ H: engine coordinates Y (r+, r)."""
    eng = pt.engine(dec)
    if eng.diag:
        plus = dec.plus
        W = dec.basis @ dec.V[:, plus]
        _, R = np.linalg.qr(W)
        Y = np.zeros((int(plus.sum()), dec.r), dtype=complex)
        Y[:, plus] = sla.solve_triangular(R, np.eye(R.shape[0]), lower=False).T
        return Y
    U = sla.orth(eng.cp)
    return U.T.copy()


# --- boundary maps ---------------------------------------------------------------

@dataclass
class GammaMatrix:
    kind: str
    matrix: np.ndarray = field(repr=False)
    domain: np.ndarray = field(repr=False)     # engine coordinates of the E0+ H basis
    singular_values: np.ndarray = field(repr=False)
    diagnostics: list = field(default_factory=list, repr=False)
    n_constants: int = 0

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])

    @property
    def cond(self) -> float:
        s = self.singular_values
        return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def _norm_mode(kind):
    return "Y" if kind == "dirichlet" else "X"


def _free_term(dec, kind, Y):
    eng = pt.engine(dec)
    if kind == "dirichlet":
        return pt.dirichlet_free(dec, Y)
    return eng.field(eng.extend(Y))


def _fixed_point(dec, E, free, kind, solver):
    mode = _norm_mode(kind)
    if solver == "gmres":
        return pt.gmres_solve(dec, E, free, norm_mode=mode)
    f, diag = pt.picard_solve(dec, E, free, mode)
    if not diag.converged:
        if solver == "auto":
            return pt.gmres_solve(dec, E, free, norm_mode=mode)
        raise pt.PicardDivergence(
            f"Picard iteration failed ({diag.iterations} steps, rate {diag.contraction_rate:.3g})")
    return f, diag


def _boundary_image(dec, E, f, Y, kind):
    """Codomain coordinates of Gamma h+ (or Gamma~ h~+) for fixed points f."""
    g = dec.grid
    eng = pt.engine(dec)
    ym = np.zeros_like(Y) if E.is_zero else eng.boundary_minus(eng.coords_hat(E.apply(f)))
    if kind == "dirichlet":
        v0 = multiply(dec.B0, eng.field(Y))
        if not E.is_zero:
            v0 = v0 - multiply(dec.B0, eng.field(eng.mul(eng.inv_mu, ym)))
        return _normal_coords(g, DIRICHLET_SIGN * v0[..., :g.m], with_mean=True)
    f0 = eng.field(Y + ym)
    if kind == "neumann":
        return _normal_coords(g, f0[..., :g.m], with_mean=False)
    return _tangential_coords(g, f0[..., g.m:])


def assemble_gamma(dec: SpectralDecomp, E, kind: str, chunk: int = 64, solver: str = "auto") -> GammaMatrix:
    """Dense boundary map, one fixed-point solve per E0+ H basis vector.

    solver: 'picard' (divergence aborts), 'gmres', or 'auto' (Picard, GMRES
    when Picard does not converge).
    """
    kind = _kind(kind)
    g = dec.grid
    E = pt._as_disc(g, E)
    Y = plus_basis(dec)
    cols, diags = [], []
    for s in range(0, Y.shape[0], chunk):
        Yc = Y[s:s + chunk]
        free = _free_term(dec, kind, Yc)
        if E.is_zero:
            f = free
        else:
            f, diag = _fixed_point(dec, E, free, kind, solver)
            diags.append(diag)
        cols.append(_boundary_image(dec, E, f, Yc, kind))
    G = np.concatenate(cols, axis=0).T
    nconst = 0
    if kind == "dirichlet":
        # constants c: unit mean-mode columns
        C = np.zeros((G.shape[0], g.m), dtype=complex)
        C[:g.m, :] = np.eye(g.m)        # mean mode is the first lattice mode
        G = np.hstack([G, C])
        nconst = g.m
    sv = np.linalg.svd(G, compute_uv=False)
    return GammaMatrix(kind, G, Y, sv, diags, nconst)


# --- solutions ---------------------------------------------------------------------

@dataclass(eq=False)
class Solution:
    kind: str
    grid: Grid = field(repr=False)
    f: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    u: np.ndarray | None = field(default=None, repr=False)
    traces: dict = field(default_factory=dict, repr=False)
    reports: dict = field(default_factory=dict)

    def boundary_residual(self) -> float:
        return float(self.reports.get("bc_residual", np.nan))


@dataclass
class Setup:
    """Everything that depends on A only: reusable across data."""
    A: CoefficientField
    A0: CoefficientField
    B: CoefficientField
    B0: CoefficientField
    E: Discrepancy
    dec: SpectralDecomp
    trace_report: object = None
    gammas: dict = field(default_factory=dict)
    star: object = None

    def gamma(self, kind, solver="auto") -> GammaMatrix:
        kind = _kind(kind)
        if kind not in self.gammas:
            self.gammas[kind] = assemble_gamma(self.dec, self.E, kind, solver=solver)
        return self.gammas[kind]


def prepare(A: CoefficientField, method: str = "auto", cache_dir=None, check_accretive: bool = True) -> Setup:
    """A0, hats, discrepancy and DB0 calculus; A0 must be accretive in any case."""
    if check_accretive:
        require_accretive(A)
    A0, finite, rep = trace_coefficients(A)
    if not finite:
        raise NotWellPosed("discrepancy A - A0 has divergent Carleson norm")
    B = hat_transform(A)
    B0 = hat_transform(A0)
    E = discrepancy(B, B0)
    dec = spectral_decompose(B0, A.grid, "DB0", method=method, cache_dir=cache_dir)
    return Setup(A, A0, B, B0, E, dec, rep)


def _check_sigma(G: GammaMatrix, threshold):
    if G.sigma_min < threshold:
        raise NotWellPosed(f"boundary map smallest singular value {G.sigma_min:.3g} below {threshold:g}: "
                           "not well-posed at this scale")


def _estimates(grid, g_field, boundary, phi):
    nt = x_norm(grid, g_field)
    nb = float(np.sqrt(np.sum(np.abs(boundary) ** 2) * grid.cell))
    nphi = float(np.sqrt(np.sum(np.abs(phi) ** 2) * grid.cell))
    return dict(N_star_g=nt, g0_norm=nb, phi_norm=nphi,
                ratio_N_g0=nt / nb if nb else np.nan, ratio_g0_phi=nb / nphi if nphi else np.nan)


def solve_neumann(problem: BvpProblem, setup: Setup | None = None, threshold: float = SIGMA_MIN,
                  solver: str = "auto") -> Solution:
    if problem.kind not in ("neumann", "regularity"):
        raise BvpError("solve_neumann handles Neumann and regularity problems")
    return _solve_nr(problem, setup, threshold, solver)


def solve_regularity(problem: BvpProblem, setup: Setup | None = None, threshold: float = SIGMA_MIN,
                     solver: str = "auto") -> Solution:
    if problem.kind != "regularity":
        raise BvpError("not a regularity problem")
    return _solve_nr(problem, setup, threshold, solver)


def _solve_nr(problem, setup, threshold, solver):
    g = problem.grid
    kind = problem.kind
    S = setup or prepare(problem.A)
    dec, E = S.dec, S.E
    eng = pt.engine(dec)
    phi = problem.phi
    if not np.any(phi):
        zero = np.zeros((g.K, g.P, g.d), complex)
        return Solution(kind, g, zero, zero.copy(), None,
                        dict(g0=zero[0].copy(), h_plus=zero[0].copy(), f0=zero[0].copy()),
                        dict(bc_residual=0.0, sigma_min=np.nan))
    G = S.gamma(kind, solver)
    _check_sigma(G, threshold)
    rhs = _normal_coords(g, phi, False) if kind == "neumann" else _tangential_coords(g, phi)
    z = np.linalg.solve(G.matrix, rhs)
    y = z @ G.domain
    free = eng.field(eng.extend(y))
    f, diag = (free, pt.PicardDiagnostics(1, [0.0], 0.0, True, "X", 0.0)) if E.is_zero else \
        _fixed_point(dec, E, free, kind, solver)
    tr = pt.trace_neumann_repr(f, dec, E, free=free)
    # the exact h+ is y; the extracted one is a consistency check
    h_plus = eng.field(y)
    ym = np.zeros_like(y) if E.is_zero else eng.boundary_minus(eng.coords_hat(E.apply(f)))
    f0 = h_plus + eng.field(ym)
    gfield = conormal_to_gradient(np.asarray(S.B.entries), f, g.m)
    g0 = conormal_to_gradient(S.B0.slice0, f0, g.m)
    A0g0 = np.einsum("pij,pj->pi", S.A0.slice0, g0)
    if kind == "neumann":
        bc = A0g0[:, :g.m]
    else:
        bc = g0[:, g.m:]
    nphi = np.linalg.norm(phi)
    rep = dict(
        bc_residual=float(np.linalg.norm(bc - phi) / nphi),
        sigma_min=G.sigma_min, gamma_cond=G.cond,
        picard=diag.as_dict(),
        extracted_h_plus_defect=float(np.linalg.norm(tr.h_plus - h_plus) / max(np.linalg.norm(h_plus), 1e-300)),
        plus_defect=tr.plus_defect, trace_defect=tr.trace_defect,
        h_minus_norm=float(np.linalg.norm(eng.field(ym))),
        h_plus_norm=float(np.linalg.norm(h_plus)),
    )
    rep.update(_estimates(g, gfield, g0, phi))
    return Solution(kind, g, f, gfield, None, dict(g0=g0, f0=f0, h_plus=h_plus, h_minus=eng.field(ym)), rep)


def solve_dirichlet(problem: BvpProblem, setup: Setup | None = None, threshold: float = SIGMA_MIN,
                    solver: str = "auto") -> Solution:
    if problem.kind != "dirichlet":
        raise BvpError("not a Dirichlet problem")
    g = problem.grid
    S = setup or prepare(problem.A)
    dec, E = S.dec, S.E
    eng = pt.engine(dec)
    phi = problem.phi
    if not np.any(phi):
        zero = np.zeros((g.K, g.P, g.d), complex)
        return Solution("dirichlet", g, zero, zero.copy(), np.zeros((g.K, g.P, g.m), complex),
                        dict(u0=np.zeros((g.P, g.m), complex)), dict(bc_residual=0.0, sigma_min=np.nan))
    G = S.gamma("dirichlet", solver)
    _check_sigma(G, threshold)
    rhs = _normal_coords(g, phi, True)
    z = np.linalg.solve(G.matrix, rhs)
    zc = z[-G.n_constants:]
    y = z[:-G.n_constants] @ G.domain
    c = zc / np.sqrt(g.P)                       # unit mean mode = constant 1/sqrt(P)
    free = pt.dirichlet_free(dec, y)
    if E.is_zero:
        f, diag = free, pt.PicardDiagnostics(1, [0.0], 0.0, True, "Y", 0.0)
    else:
        f, diag = _fixed_point(dec, E, free, "dirichlet", solver)
    pot = pt.dirichlet_potential(f, dec, E, y_plus=y)
    v = pot.v
    # orientation check: grad_x(sign v_perp) should reproduce f_par
    best, orient = _orientation(g, v, f)
    sign = DIRICHLET_SIGN
    u = c[None, None, :] + sign * v[..., :g.m]
    u0 = c[None, :] + sign * pot.v0[:, :g.m]
    gfield = conormal_to_gradient(np.asarray(S.B.entries), f, g.m)
    nphi = np.linalg.norm(phi)
    rep = dict(
        bc_residual=float(np.linalg.norm(u0 - phi) / nphi),
        first_slice_defect=float(np.linalg.norm(u[0] - phi) / nphi),
        sigma_min=G.sigma_min, gamma_cond=G.cond, picard=diag.as_dict(),
        sign=sign, orientation_agrees=bool(best == sign), orientation_defects=orient, constants=c.tolist(),
        Dv_defect=pot.Dv_defect, equation_defect=pot.equation_defect,
        v_start_defect=pot.start_defect, v_end_norm=pot.end_norm,
        grad_Y=y_norm(g, gfield), sup_u=sup_l2(g, u), sup_u_minus_c=sup_l2(g, u - c[None, None, :]),
        phi_norm=float(np.sqrt(np.sum(np.abs(phi) ** 2) * g.cell)),
    )
    return Solution("dirichlet", g, f, gfield, u,
                    dict(u0=u0, h_tilde_plus=multiply(dec.B0, eng.field(y)), h_tilde_minus=pot.h_tilde_minus,
                         v0=pot.v0, c=c), rep)


def _orientation(grid, v, f):
    """Compare grad_x(-v_perp) and grad_x(+v_perp) with f_par; returns the better sign."""
    vp = v[..., :grid.m]
    grad = apply_D(grid, np.concatenate([vp, np.zeros(vp.shape[:-1] + (grid.n * grid.m,))], axis=-1))
    # D [a; 0] = [0; -grad a]
    gx = -grad[..., grid.m:]
    fp = f[..., grid.m:]
    nf = max(np.linalg.norm(fp), 1e-300)
    d = {s: float(np.linalg.norm(s * gx - fp) / nf) for s in (-1, 1)}
    s = min(d, key=d.get)
    return s, {str(k): v for k, v in d.items()}


def solve(problem: BvpProblem, setup: Setup | None = None, **kw) -> Solution:
    if problem.kind == "dirichlet":
        return solve_dirichlet(problem, setup, **kw)
    return _solve_nr(problem, setup, kw.get("threshold", SIGMA_MIN), kw.get("solver", "auto"))


# --- well-posedness margin ------------------------------------------------------------

@dataclass
class Margin:
    sigma_min: dict
    sigma_min_A0: dict
    gamma_shift: dict            # ||Gamma_A - Gamma_A0||
    star: tuple                  # (lower, estimate, upper)
    op_norm_X: tuple             # (power-iteration lower bound, spectral radius estimate)
    op_norm_Y: tuple
    radius: dict                 # sigma_min(Gamma_A0) / slope, slope = shift / star estimate

    def as_dict(self):
        return asdict(self)


def wellposedness_margin(setup: Setup, kinds=("neumann", "regularity", "dirichlet"),
                         solver: str = "auto") -> Margin:
    dec, E = setup.dec, setup.E
    zero = Discrepancy(dec.grid, np.zeros_like(E.entries))
    sb = E.star_bounds()
    sig, sig0, shift, rad = {}, {}, {}, {}
    for k in kinds:
        G = setup.gamma(k, solver)
        G0 = assemble_gamma(dec, zero, k)
        sig[k] = G.sigma_min
        sig0[k] = G0.sigma_min
        shift[k] = float(np.linalg.norm(G.matrix - G0.matrix, 2))
        slope = shift[k] / sb.estimate if sb.estimate > 0 else 0.0
        rad[k] = float(sig0[k] / slope) if slope > 0 else np.inf
    ox = pt.operator_norm_estimate(dec, E, "X")
    oy = pt.operator_norm_estimate(dec, E, "Y")
    return Margin(sig, sig0, shift, (sb.lower, sb.estimate, sb.upper), ox, oy, rad)
