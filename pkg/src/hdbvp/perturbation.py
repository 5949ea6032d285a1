"""The integral operators S_A and S~_A, Picard solves and trace extraction.

E_s f_s is taken piecewise constant on the t-cells [a_j, b_j] around the
nodes, and the semigroup kernels are integrated exactly over each cell:

    int_a^b  Lambda e^{-(t-s) Lambda} ds = e^{-(t-b) Lambda} - e^{-(t-a) Lambda}

(mirrored for s > t).  Nothing singular is ever evaluated at s = t.  The
sums over cells are done by a forward (E0+ part) and a backward (E0- part)
recursion, so one application costs O(K) semigroup multiplications.

Discrepancy convention: B = B0 - E, so  d_t f + D B0 f = D E f.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, gmres

from .calculus import SpectralDecomp, chi_minus, chi_plus, hatE_coords, multiply
from .coefficients import Discrepancy
from .grid import GridError
from .norms import x_norm, y_norm

PICARD_TOL = 1e-10
PICARD_MAXIT = 200
DIVERGENCE_STEPS = 5


class PicardDivergence(RuntimeError):
    pass


class TraceError(RuntimeError):
    pass


# --- kernel engine ----------------------------------------------------------

class _Engine:
    """Cell-integrated semigroup kernels in eigen- (or Schur basis) coordinates."""

    def __init__(self, dec: SpectralDecomp):
        if dec.kind != "DB0":
            raise ValueError("kernels are built on the DB0 decomposition")
        self.dec = dec
        g = dec.grid
        self.grid = g
        self.t = g.t_nodes
        e = g.t_edges
        self.a, self.b = e[:-1], e[1:]
        self.diag = dec.method == "eig"
        if self.diag:
            self.mu = dec.mu
            self.cp = chi_plus(dec.lam).astype(float)
            self.cm = chi_minus(dec.lam).astype(float)
            self.inv_mu = 1.0 / self.mu
        else:
            self.Lam = dec._sign @ dec.T
            self.cp = dec.function_matrix(chi_plus)
            self.cm = dec.function_matrix(chi_minus)
            self.inv_mu = np.linalg.inv(self.Lam)
        self._build()

    def E(self, tau):
        if self.diag:
            return np.exp(-tau * self.mu)
        return sla.expm(-tau * self.Lam)

    def mul(self, op, y):
        return op * y if self.diag else y @ op.T

    def one_minus(self, op):
        return 1.0 - op if self.diag else np.eye(op.shape[0]) - op

    def _build(self):
        t, a, b, K = self.t, self.a, self.b, len(self.t)
        self.own_p = [self.one_minus(self.E(t[k] - a[k])) for k in range(K)]
        self.own_m = [self.one_minus(self.E(b[k] - t[k])) for k in range(K)]
        # forward: F_{k+1} = E(t_{k+1}-t_k) F_k + [E(t_{k+1}-b_k) - E(t_{k+1}-a_k)] Y_k
        self.step = [self.E(t[k + 1] - t[k]) for k in range(K - 1)]
        self.in_p = [self.E(t[k + 1] - b[k]) - self.E(t[k + 1] - a[k]) for k in range(K - 1)]
        # backward: G_{k-1} = E(t_k-t_{k-1}) G_k + [E(a_k-t_{k-1}) - E(b_k-t_{k-1})] Y_k
        self.in_m = [None] + [self.E(a[k] - t[k - 1]) - self.E(b[k] - t[k - 1]) for k in range(1, K)]
        # boundary (t = 0) weights of each cell
        self.at0 = [self.E(a[k]) - self.E(b[k]) for k in range(K)]

    # coordinate maps
    def coords_hat(self, u):
        """Coordinates of B0^{-1} P_{B0 H} u (so hat E0+- = chi+- in these coordinates)."""
        if self.diag:
            return hatE_coords(self.dec, u)
        x, _ = self.dec._flat(u)
        pre = x @ self.dec._CD.T
        return np.linalg.solve(self.dec.T, pre.reshape(-1, pre.shape[-1]).T).T.reshape(pre.shape)

    def coords(self, u):
        if self.diag:
            return self.dec.coords(u)
        return self.dec.basis_coords(u)

    def field(self, y):
        return self.dec.from_coords(y) if self.diag else self.dec.from_basis(y)

    def sweep(self, Y):
        """Per-node plus and minus sums (un-projected) for Y of shape (..., K, r)."""
        K = Y.shape[-2]
        Yp = self.mul(self.cp, Y)
        Ym = self.mul(self.cm, Y)
        Zp = np.empty_like(Yp)
        Zm = np.empty_like(Ym)
        F = np.zeros_like(Yp[..., 0, :])
        for k in range(K):
            Zp[..., k, :] = F + self.mul(self.own_p[k], Yp[..., k, :])
            if k < K - 1:
                F = self.mul(self.step[k], F) + self.mul(self.in_p[k], Yp[..., k, :])
        G = np.zeros_like(F)
        for k in range(K - 1, -1, -1):
            Zm[..., k, :] = G + self.mul(self.own_m[k], Ym[..., k, :])
            if k > 0:
                G = self.mul(self.step[k - 1], G) + self.mul(self.in_m[k], Ym[..., k, :])
        return Zp, Zm

    def boundary_minus(self, Y):
        """sum_j [E(a_j) - E(b_j)] chi- Y_j: the t = 0 value of the E0- integral."""
        Ym = self.mul(self.cm, Y)
        out = np.zeros_like(Ym[..., 0, :])
        for k in range(Y.shape[-2]):
            out = out + self.mul(self.at0[k], Ym[..., k, :])
        return out

    def extend(self, y):
        """e^{-t_k Lambda} y on all nodes: (..., r) -> (..., K, r)."""
        if self.diag:
            return np.exp(-np.multiply.outer(self.t, self.mu)) * y[..., None, :]
        return np.stack([self.mul(self.E(tk), y) for tk in self.t], axis=-2)


_ENGINES: dict = {}


def engine(dec: SpectralDecomp) -> _Engine:
    key = id(dec)
    hit = _ENGINES.get(key)
    if hit is not None and hit.dec is dec:
        return hit
    eng = _Engine(dec)
    if len(_ENGINES) > 16:
        _ENGINES.clear()
    _ENGINES[key] = eng
    return eng


def _as_disc(grid, E) -> Discrepancy:
    if isinstance(E, Discrepancy):
        if not E.grid.same_as(grid):
            raise GridError("discrepancy lives on another grid")
        return E
    E = np.asarray(E, dtype=complex)
    if E.shape != (grid.K, grid.P, grid.d, grid.d):
        raise GridError(f"discrepancy shape {E.shape} does not match grid")
    if not np.all(np.isfinite(E)):
        raise ValueError("non-finite discrepancy")
    return Discrepancy(grid, E)


def _check_f(grid, f):
    f = np.asarray(f, dtype=complex)
    if f.shape[-3:] != (grid.K, grid.P, grid.d):
        raise GridError(f"field shape {f.shape} does not match grid")
    return f


# --- S_A and S~_A ---------------------------------------------------------------

def apply_SA(dec: SpectralDecomp, E, f) -> np.ndarray:
    """S_A f for f of shape (..., K, P, d)."""
    g = dec.grid
    f = _check_f(g, f)
    E = _as_disc(g, E)
    if E.is_zero:
        return np.zeros_like(f)
    eng = engine(dec)
    Y = eng.coords_hat(E.apply(f))
    Zp, Zm = eng.sweep(Y)
    return eng.field(Zp + Zm)


def apply_tilde_SA(dec: SpectralDecomp, E, f) -> np.ndarray:
    """S~_A f, computed through B0 e^{-t Lambda~} E~0+- = B0 e^{-t Lambda} hat E0+- B0."""
    g = dec.grid
    f = _check_f(g, f)
    E = _as_disc(g, E)
    if E.is_zero:
        return np.zeros_like(f)
    eng = engine(dec)
    Y = eng.coords_hat(E.apply(f))
    Zp, Zm = eng.sweep(Y)
    w = eng.field(eng.mul(eng.inv_mu, Zp - Zm))
    return multiply(dec.B0, w)


# --- Picard / GMRES ------------------------------------------------------------

@dataclass
class PicardDiagnostics:
    iterations: int
    residual_history: list = field(default_factory=list)
    contraction_rate: float = 0.0
    converged: bool = False
    norm_mode: str = "X"
    fixed_point_residual: float = float("nan")
    method: str = "picard"

    def as_rows(self):
        return [(i + 1, r) for i, r in enumerate(self.residual_history)]

    def as_dict(self):
        return asdict(self)


def field_norm(grid, f, mode: str):
    if mode == "X":
        return x_norm(grid, f)
    if mode == "Y":
        return y_norm(grid, f)
    raise ValueError(f"norm_mode must be 'X' or 'Y', got {mode!r}")


def _rate(hist) -> float:
    h = np.asarray(hist, float)
    h = h[h > 0]
    if h.size < 2:
        return 0.0
    tail = h[-min(h.size, 8):]
    if tail.size < 2:
        return 0.0
    # skip the final steps that sit at round-off
    slope = np.polyfit(np.arange(tail.size), np.log(tail), 1)[0]
    return float(np.exp(slope))


def picard_solve(dec: SpectralDecomp, E, free, norm_mode: str = "X", tol: float = PICARD_TOL,
                 maxit: int = PICARD_MAXIT, f0=None, raise_on_divergence: bool = False):
    """Fixed point f = free + S_A f by iteration from f = free (or f0).

    free may carry leading batch axes; convergence is judged on the worst
    column.  Returns (f, PicardDiagnostics).
    """
    g = dec.grid
    free = _check_f(g, free)
    if not np.all(np.isfinite(free)):
        raise ValueError("non-finite free term")
    E = _as_disc(g, E)
    f = free.copy() if f0 is None else _check_f(g, f0).copy()
    hist, grow = [], 0
    diag = PicardDiagnostics(0, hist, 0.0, False, norm_mode)
    if E.is_zero:
        diag.iterations, diag.converged, diag.fixed_point_residual = 1, True, 0.0
        hist.append(0.0)
        return free.copy(), diag
    for it in range(1, maxit + 1):
        fn = free + apply_SA(dec, E, f)
        num = np.atleast_1d(field_norm(g, fn - f, norm_mode))
        den = np.atleast_1d(field_norm(g, fn, norm_mode))
        rel = float(np.max(np.where(den > 0, num / np.where(den > 0, den, 1), num)))
        f = fn
        diag.iterations = it
        if not np.isfinite(rel):
            break
        grow = grow + 1 if hist and rel > hist[-1] else 0
        hist.append(rel)
        if rel < tol:
            diag.converged = True
            break
        if grow >= DIVERGENCE_STEPS:
            break
    diag.contraction_rate = _rate(hist)
    if diag.converged:
        r = free + apply_SA(dec, E, f) - f
        nf = np.atleast_1d(field_norm(g, f, norm_mode))
        nr = np.atleast_1d(field_norm(g, r, norm_mode))
        diag.fixed_point_residual = float(np.max(nr / np.where(nf > 0, nf, 1)))
    elif raise_on_divergence:
        raise PicardDivergence(f"Picard iteration failed after {diag.iterations} steps")
    return f, diag


def gmres_solve(dec: SpectralDecomp, E, free, tol: float = 1e-12, norm_mode: str = "X",
                restart: int = 60, maxiter: int = 50):
    """(I - S_A) f = free by GMRES; for scenarios outside the contraction regime."""
    g = dec.grid
    free = _check_f(g, free)
    E = _as_disc(g, E)
    shape = free.shape[-3:]
    M = int(np.prod(shape))

    def mv(x):
        x = x.reshape(shape)
        return (x - apply_SA(dec, E, x)).ravel()

    op = LinearOperator((M, M), matvec=mv, dtype=complex)
    batch = free.reshape((-1,) + shape)
    out = np.empty_like(batch)
    hist, ok = [], True
    for i, b in enumerate(batch):
        res = []
        x, info = gmres(op, b.ravel(), rtol=tol, atol=0.0, restart=restart, maxiter=maxiter,
                        callback=lambda r: res.append(float(r)), callback_type="pr_norm")
        ok &= info == 0
        out[i] = x.reshape(shape)
        hist.extend(res)
    f = out.reshape(free.shape)
    r = free + apply_SA(dec, E, f) - f
    nf = np.atleast_1d(field_norm(g, f, norm_mode))
    nr = np.atleast_1d(field_norm(g, r, norm_mode))
    fpr = float(np.max(nr / np.where(nf > 0, nf, 1)))
    diag = PicardDiagnostics(len(hist), hist, _rate(hist), bool(ok) and fpr < 1e-8, norm_mode, fpr, "gmres")
    return f, diag


def operator_norm_estimate(dec: SpectralDecomp, E, norm_mode: str = "X", iterations: int = 30,
                           seed: int = 0, return_vector: bool = False):
    """Power iteration f <- S_A f / ||S_A f||.

    Returns (norm_lower, rho): the largest observed ratio ||S_A f|| / ||f||
    (a lower bound for the operator norm) and the final ratio, which tends to
    the spectral radius.
    """
    g = dec.grid
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((g.K, g.P, g.d)) + 1j * rng.standard_normal((g.K, g.P, g.d))
    f = f / field_norm(g, f, norm_mode)
    best = rho = 0.0
    for _ in range(iterations):
        s = apply_SA(dec, E, f)
        ns = field_norm(g, s, norm_mode)
        if ns == 0:
            break
        rho = ns
        best = max(best, ns)
        f = s / ns
    if return_vector:
        return best, rho, f
    return best, rho


# --- traces ------------------------------------------------------------------------

@dataclass
class NeumannTrace:
    h_plus: np.ndarray = field(repr=False)
    h_minus: np.ndarray = field(repr=False)
    f0: np.ndarray = field(repr=False)
    plus_defect: float        # ||E0- h+|| / ||h+||
    trace_defect: float       # (1/t) int_t^{2t} ||f_s - f0||^2 ds / ||f0||^2 at the first node
    fixed_point_residual: float
    mode: str


def _fp_residual(dec, E, f, free=None):
    g = dec.grid
    S = apply_SA(dec, E, f)
    core = f - S
    if free is None:
        return core, 0.0
    nf = np.sqrt(np.sum(np.abs(f) ** 2, axis=(-3, -2, -1)))
    nr = np.sqrt(np.sum(np.abs(core - free) ** 2, axis=(-3, -2, -1)))
    return core, float(np.max(nr / np.where(nf > 0, nf, 1)))


def _plus_from_core(eng: _Engine, core, mode: str):
    """h+ from the free part core_t = e^{-t Lambda} h+ on the first t-slices."""
    t = eng.t
    y1 = eng.mul(eng.cp, eng.coords(core[..., 0, :, :]))
    if mode == "invert":
        if eng.diag:
            return y1 * np.exp(t[0] * eng.mu)
        return eng.mul(sla.expm(t[0] * eng.Lam), y1)
    if mode == "first":
        return y1
    if mode == "richardson":
        y2 = eng.mul(eng.cp, eng.coords(core[..., 1, :, :]))
        return y1 - t[0] * (y2 - y1) / (t[1] - t[0])
    raise ValueError(f"unknown extraction mode {mode!r}")


def trace_neumann_repr(f, dec: SpectralDecomp, E, free=None, mode: str = "invert",
                       max_residual: float = 1e-6) -> NeumannTrace:
    """h+, h- and f0 = h+ + h- from a fixed point f = e^{-t Lambda} h+ + S_A f.

    mode: 'invert' undoes e^{-t_1 Lambda} on the first slice (exact for the
    discrete model), 'richardson' extrapolates the first two slices to t = 0,
    'first' takes the first slice as is.
    """
    g = dec.grid
    f = _check_f(g, f)
    E = _as_disc(g, E)
    eng = engine(dec)
    core, res = _fp_residual(dec, E, f, free)
    if res > max_residual:
        raise TraceError(f"fixed-point residual {res:.3g} too large for trace extraction")
    yp = _plus_from_core(eng, core, mode)
    if E.is_zero:
        ym = np.zeros_like(yp)
    else:
        ym = eng.boundary_minus(eng.coords_hat(E.apply(f)))
    h_plus = eng.field(yp)
    h_minus = eng.field(ym)
    f0 = h_plus + h_minus
    nh = np.linalg.norm(h_plus)
    defect = float(np.linalg.norm(eng.field(eng.mul(eng.cm, eng.coords(h_plus)))) / nh) if nh else 0.0
    return NeumannTrace(h_plus, h_minus, f0, defect, trace_defect(g, f, f0), res, mode)


def trace_defect(grid, f, f0) -> float:
    """(1/t) int_t^{2t} ||f_s - f0||^2 ds relative to ||f0||^2, at t = t_1."""
    t = grid.t_nodes
    sel = t < 2 * t[0]
    if sel.sum() < 2:
        sel[:2] = True
    diff = np.sum(np.abs(f[..., sel, :, :] - f0[..., None, :, :]) ** 2, axis=(-1, -2)) * grid.cell
    val = np.sum(diff * grid.t_weights[sel], axis=-1) / (t[sel][-1] - t[0] + grid.t_weights[sel][0])
    n0 = np.sum(np.abs(f0) ** 2, axis=(-1, -2)) * grid.cell
    r = val / np.where(n0 > 0, n0, 1)
    return float(np.max(r))


@dataclass
class DirichletPotential:
    v: np.ndarray = field(repr=False)
    v0: np.ndarray = field(repr=False)
    h_tilde_minus: np.ndarray = field(repr=False)
    Dv_defect: float           # ||Dv - f|| / ||f||
    equation_defect: float     # weak residual of d_t v + B D v = -(I - P) E f between nodes
    start_defect: float        # ||v_{t_1} - v0|| / ||v0||
    end_norm: float            # ||v_{t_K}|| / sup_t ||v_t||


def dirichlet_free(dec: SpectralDecomp, y_plus) -> np.ndarray:
    """D e^{-t Lambda~} h~+ = e^{-t Lambda} Lambda h for h~+ = B0 h, h in E0+ H (eigen coords y)."""
    eng = engine(dec)
    return eng.field(eng.extend(_lam_mul(eng, y_plus)))


def _lam_mul(eng: _Engine, y):
    if eng.diag:
        return eng.mu * y
    return y @ eng.Lam.T


def dirichlet_potential(f, dec: SpectralDecomp, E, h_tilde_plus=None, y_plus=None,
                        max_residual: float = 1e-6) -> DirichletPotential:
    """v_t = e^{-t Lambda~} h~+ + S~_A f_t and h~- = -int e^{-s Lambda~} E~0- E f ds.

    h~+ is given physically (in B0 E0+ H) or by the eigen-coordinates y_plus
    of h = B0^{-1} h~+.
    """
    from .calculus import apply_D
    g = dec.grid
    f = _check_f(g, f)
    E = _as_disc(g, E)
    eng = engine(dec)
    if y_plus is None:
        if h_tilde_plus is None:
            raise ValueError("need h_tilde_plus or y_plus")
        y_plus = eng.mul(eng.cp, eng.coords_hat(np.asarray(h_tilde_plus, complex)))
    free = eng.field(eng.extend(_lam_mul(eng, y_plus)))
    _, res = _fp_residual(dec, E, f, free)
    if res > max_residual:
        raise TraceError(f"fixed-point residual {res:.3g} too large for potential extraction")
    B0 = dec.B0
    v = multiply(B0, eng.field(eng.extend(y_plus)))
    if E.is_zero:
        ht_minus = np.zeros_like(v[..., 0, :, :])
    else:
        v = v + apply_tilde_SA(dec, E, f)
        ym = eng.boundary_minus(eng.coords_hat(E.apply(f)))
        ht_minus = -multiply(B0, eng.field(eng.mul(eng.inv_mu, ym)))
    v0 = multiply(B0, eng.field(y_plus)) + ht_minus
    Dv = apply_D(g, v)
    nf = np.linalg.norm(f)
    dv_def = float(np.linalg.norm(Dv - f) / nf) if nf else float(np.linalg.norm(Dv))
    eq_def = _equation_defect(dec, E, v, f)
    sn = np.sqrt(np.sum(np.abs(v) ** 2, axis=(-1, -2)))
    n0 = np.linalg.norm(v0)
    start = float(np.linalg.norm(v[..., 0, :, :] - v0) / n0) if n0 else 0.0
    end = float(np.max(sn[..., -1] / np.where(sn.max(axis=-1) > 0, sn.max(axis=-1), 1)))
    return DirichletPotential(v, v0, ht_minus, dv_def, eq_def, start, end)


def _equation_defect(dec, E, v, f) -> float:
    """Trapezoid check of v_{k+1} - v_k = -int (B D v + (I - P_{B0 H}) E f) ds.

    Only a consistency report: the trapezoid rule on the geometric t-grid
    limits it to O(h^2) in log t.
    """
    from .calculus import apply_D
    g = dec.grid
    E = _as_disc(g, E)
    Ef = E.apply(f) if not E.is_zero else np.zeros_like(f)
    B = dec.B0[None] - E.entries
    Bdv = np.einsum("kpij,...kpj->...kpi", B, apply_D(g, v))
    # (I - P) E f: subtract the B0 H component, B0 hat(E0+ + E0-) E f
    eng = engine(dec)
    PEf = multiply(dec.B0, eng.field(eng.coords_hat(Ef))) if not E.is_zero else Ef
    rhs = -(Bdv + Ef - PEf)
    t = g.t_nodes
    dt = np.diff(t)[:, None, None]
    lhs = np.diff(v, axis=-3)
    approx = 0.5 * (rhs[..., 1:, :, :] + rhs[..., :-1, :, :]) * dt
    scale = np.linalg.norm(lhs) + np.linalg.norm(approx)
    return float(np.linalg.norm(lhs - approx) / scale) if scale else 0.0


@dataclass
class Adversarial:
    E: Discrepancy = field(repr=False)
    free: np.ndarray = field(repr=False)
    rho_unit: float          # spectral radius estimate of S_A at unit amplitude
    amplitude: float         # factor applied to the unit discrepancy
    target: float            # amplitude * rho_unit


def adversarial(dec: SpectralDecomp, E, target: float = 2.0, norm_mode: str = "X",
                iterations: int = 40, seed: int = 0) -> Adversarial:
    """Scale E so that S_A has spectral radius about `target`, with the free
    term along the top power-iteration vector.

    With target > 1 the Neumann series cannot converge; the same data at a
    tenth of the amplitude sits well inside the contraction regime.
    """
    E = _as_disc(dec.grid, E)
    _, rho, v = operator_norm_estimate(dec, E, norm_mode, iterations, seed, return_vector=True)
    if rho == 0:
        raise ValueError("S_A vanishes for this discrepancy")
    amp = target / rho
    return Adversarial(E.scaled(amp), v, rho, amp, target)
