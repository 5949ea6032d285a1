"""Dirac operator, the curl-free space and the calculus of DB0 and B0D.

Everything is done in an orthonormal Fourier basis Q of the closure of the
range of D (the curl-free fields with zero mean).  With D_q = Q* D Q and
B_q = Q* B0 Q the restriction of DB0 to that space is T = D_q B_q, an r x r
matrix with r = 2m(N^n - 1); its eigendecomposition gives every b(DB0).

Conventions: b(DB0) vanishes on N(DB0) = B0^{-1} N(D), b(B0D) vanishes on
N(D).  The B0D calculus is decomposed independently in an orthonormal basis
of B0 Q, so the intertwining identities are genuine cross-checks.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .grid import Grid, GridError

CACHE_VERSION = 1
EIG_COND_LIMIT = 1e10


class SpectrumError(RuntimeError):
    pass


def multiply(A_x: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Pointwise matrix multiply: A_x (P, d, d) times f (..., P, d)."""
    return np.einsum("pij,...pj->...pi", A_x, f)


# --- D and H --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiracOperator:
    grid: Grid

    def symbol(self, p: int) -> np.ndarray:
        """d x d symbol at flattened Fourier index p."""
        g = self.grid
        m, n = g.m, g.n
        S = np.zeros((g.d, g.d), dtype=complex)
        for i in range(n):
            for a in range(m):
                S[a, m + i * m + a] = 1j * g.xi[p, i]
                S[m + i * m + a, a] = -1j * g.xi[p, i]
        return S

    def __call__(self, f):
        return apply_D(self.grid, f)

    def matrix(self) -> np.ndarray:
        g = self.grid
        I = np.eye(g.P * g.d).reshape(g.P * g.d, g.P, g.d)
        return apply_D(g, I).reshape(g.P * g.d, -1).T


def assemble_D(grid: Grid) -> DiracOperator:
    return DiracOperator(grid)


def apply_D(grid: Grid, f: np.ndarray) -> np.ndarray:
    """D f = [div_x f_par, -grad_x f_perp] on (..., P, d) arrays."""
    m, n = grid.m, grid.n
    fh = grid.fft(np.asarray(f, dtype=complex))
    out = np.zeros_like(fh)
    xi = grid.xi
    perp = fh[..., :m]
    for i in range(n):
        tan_i = fh[..., m + i * m: m + (i + 1) * m]
        out[..., :m] += 1j * xi[:, i, None] * tan_i
        out[..., m + i * m: m + (i + 1) * m] = -1j * xi[:, i, None] * perp
    return grid.ifft(out)


def project_H(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto N(curl_x): tangential part onto span(xi)."""
    f = np.asarray(f, dtype=complex)
    if grid.n == 1:
        return f.copy()
    m, n = grid.m, grid.n
    fh = grid.fft(f)
    xi = grid.xi
    x2 = np.sum(xi ** 2, axis=1)
    nz = x2 > 0
    tan = fh[..., m:].reshape(fh.shape[:-1] + (n, m))
    dot = np.einsum("pi,...pia->...pa", xi, tan)
    proj = np.einsum("pi,...pa->...pia", xi, dot)
    proj[..., nz, :, :] /= x2[nz, None, None]
    proj[..., ~nz, :, :] = tan[..., ~nz, :, :]
    out = fh.copy()
    out[..., m:] = proj.reshape(fh.shape[:-1] + (n * m,))
    return grid.ifft(out)


def project_range(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the closure of R(D): P_H minus the zero mode."""
    g = project_H(grid, f)
    return g - np.mean(g, axis=-2, keepdims=True)


@lru_cache(maxsize=16)
def _range_basis(n, m, N, L) -> np.ndarray:
    from .grid import make_grid
    g = make_grid(n, m, N, L, 1.0, 2.0, 2)
    P, d = g.P, g.d
    modes = np.nonzero(g.xi_abs > 0)[0]
    E = np.exp(1j * g.coords @ g.xi[modes].T) / np.sqrt(P)      # (P, nmodes)
    xh = g.xi[modes] / g.xi_abs[modes, None]                     # (nmodes, n)
    Q = np.zeros((P, d, len(modes), 2, m), dtype=complex)
    for a in range(m):
        Q[:, a, :, 0, a] = E
        for i in range(n):
            Q[:, m + i * m + a, :, 1, a] = E * xh[None, :, i]
    Q = Q.reshape(P * d, -1)
    Q.setflags(write=False)
    return Q


def range_basis(grid: Grid) -> np.ndarray:
    """Orthonormal basis (columns) of the closure of R(D), shape (P*d, 2m(P-1))."""
    return _range_basis(grid.n, grid.m, grid.N, grid.L)


def curl_free_basis(grid: Grid) -> np.ndarray:
    """Orthonormal basis of the discrete H = N(curl_x): range plus constants."""
    Q = range_basis(grid)
    C = np.zeros((grid.P, grid.d, grid.d), dtype=complex)
    for c in range(grid.d):
        C[:, c, c] = 1 / np.sqrt(grid.P)
    return np.hstack([Q, C.reshape(grid.P * grid.d, grid.d)])


def _mult_columns(B0: np.ndarray, X: np.ndarray, grid: Grid) -> np.ndarray:
    """B0 applied to each column of X (P*d, k)."""
    k = X.shape[1]
    Y = multiply(B0, X.T.reshape(k, grid.P, grid.d))
    return Y.reshape(k, -1).T


def _D_columns(grid: Grid, X: np.ndarray) -> np.ndarray:
    k = X.shape[1]
    Y = apply_D(grid, X.T.reshape(k, grid.P, grid.d))
    return Y.reshape(k, -1).T


# --- symbols ----------------------------------------------------------------

def chi_plus(lam):
    return (np.real(lam) > 0).astype(float)


def chi_minus(lam):
    return (np.real(lam) < 0).astype(float)


def sym_abs(lam):
    """|lambda| in the bisectorial sense: lambda * sign(Re lambda)."""
    return lam * np.sign(np.real(lam))


def sym_exp(t):
    return lambda lam: np.exp(-t * sym_abs(lam))


def sym_resolvent(z):
    return lambda lam: 1.0 / (z - lam)


def sym_one(lam):
    return np.ones_like(lam)


# --- the decomposition ------------------------------------------------------

def _newton_sign(T: np.ndarray, tol=1e-13, maxit=100) -> np.ndarray:
    S = T.copy()
    I = np.eye(T.shape[0])
    for _ in range(maxit):
        Si = np.linalg.inv(S)
        # determinantal scaling speeds up the first steps
        c = np.exp(-np.linalg.slogdet(S)[1] / T.shape[0]) if _ < 5 else 1.0
        if not np.isfinite(c) or c == 0:
            c = 1.0
        Sn = 0.5 * (c * S + Si / c)
        if np.linalg.norm(Sn - S, 1) <= tol * np.linalg.norm(Sn, 1):
            S = Sn
            break
        S = Sn
    return 0.5 * (S + np.linalg.inv(S)) if np.linalg.norm(S @ S - I, 1) > 1e-8 else S


@dataclass(eq=False)
class SpectralDecomp:
    """Diagonalisation of DB0 on H (kind 'DB0') or B0D on B0 H (kind 'B0D').

    basis    orthonormal columns spanning the range space (Q, resp. orth(B0 Q))
    T        compressed operator in that basis
    lam      eigenvalues, V / Vinv eigenvectors in basis coordinates
    method   'eig' (diagonal calculus) or 'schur' (Newton sign + expm fallback)
    """
    kind: str
    grid: Grid
    B0: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    Vinv: np.ndarray = field(repr=False)
    method: str
    omega: float                 # measured spectral angle
    omega_B0: float              # accretivity angle of B0 on the range
    kappa_B0: float
    eig_cond: float
    _Cpre: np.ndarray = field(repr=False, default=None)   # maps physical u to T * coords
    _CD: np.ndarray = field(repr=False, default=None)     # Q* D (DB0 only)
    _sign: np.ndarray = field(repr=False, default=None)

    # --- basic maps ---------------------------------------------------
    @property
    def r(self) -> int:
        return self.T.shape[0]

    @property
    def mu(self) -> np.ndarray:
        return sym_abs(self.lam)

    @property
    def plus(self) -> np.ndarray:
        return np.real(self.lam) > 0

    def _flat(self, u):
        u = np.asarray(u, dtype=complex)
        return u.reshape(u.shape[:-2] + (self.grid.P * self.grid.d,)), u.shape

    def basis_coords(self, u) -> np.ndarray:
        """Coordinates c (in `basis`) of the range component of u, along the kernel."""
        x, _ = self._flat(u)
        pre = x @ self._Cpre.T                       # (..., r) = T c
        return np.linalg.solve(self.T, pre.T).T if self.method == "schur" else \
            ((self.Vinv @ pre.T) / self.lam[:, None]).T @ self.V.T

    def coords(self, u) -> np.ndarray:
        """Eigen-coordinates of the range component of u (eig method only)."""
        x, _ = self._flat(u)
        pre = x @ self._Cpre.T
        return (pre @ self.Vinv.T) / self.lam

    def from_coords(self, y) -> np.ndarray:
        """Physical field from eigen-coordinates: (..., r) -> (..., P, d)."""
        y = np.asarray(y)
        x = y @ (self.basis @ self.V).T
        return x.reshape(y.shape[:-1] + (self.grid.P, self.grid.d))

    def from_basis(self, c) -> np.ndarray:
        c = np.asarray(c)
        x = c @ self.basis.T
        return x.reshape(c.shape[:-1] + (self.grid.P, self.grid.d))

    # --- functional calculus -----------------------------------------
    def apply(self, b, u) -> np.ndarray:
        """b(operator) u, with b a scalar symbol acting on eigenvalues."""
        if self.method == "eig":
            return self.from_coords(b(self.lam) * self.coords(u))
        c = self.basis_coords(u)
        return self.from_basis(c @ self.function_matrix(b).T)

    def function_matrix(self, b) -> np.ndarray:
        """b(T) in basis coordinates."""
        if self.method == "eig":
            return (self.V * b(self.lam)) @ self.Vinv
        name = getattr(b, "__name__", "")
        S = self._sign
        I = np.eye(self.r)
        if b is chi_plus:
            return 0.5 * (I + S)
        if b is chi_minus:
            return 0.5 * (I - S)
        if b is sym_one:
            return I
        if b is sym_abs:
            return S @ self.T
        if getattr(b, "_expt", None) is not None:
            return sla.expm(-b._expt * (S @ self.T))
        if getattr(b, "_res", None) is not None:
            return np.linalg.inv(b._res * I - self.T)
        # generic symbols via Schur-Parlett; fine away from clustered spectra
        return sla.funm(self.T, lambda z: b(np.atleast_1d(z)))

    def matrix(self, b) -> np.ndarray:
        """Dense (P*d x P*d) matrix of b(operator) on the full space."""
        M = self.grid.P * self.grid.d
        I = np.eye(M).reshape(M, self.grid.P, self.grid.d)
        return self.apply(b, I).reshape(M, M).T

    def E_plus(self, u):
        return self.apply(chi_plus, u)

    def E_minus(self, u):
        return self.apply(chi_minus, u)

    def Lambda(self, u):
        return self.apply(sym_abs, u)

    def P_range(self, u):
        return self.apply(sym_one, u)

    def semigroup(self, t: float, u):
        if t < 0:
            raise ValueError("t must be >= 0 (upper half-space)")
        return self.apply(expsym(t), u)

    def semigroup_matrix(self, t: float) -> np.ndarray:
        return self.function_matrix(expsym(t))


def expsym(t: float):
    f = sym_exp(t)
    f._expt = float(t)
    return f


def ressym(z):
    f = sym_resolvent(z)
    f._res = complex(z)
    return f


def _range_angle(B0, Q, grid):
    """(kappa, omega) of B0 restricted to span(Q)."""
    C = Q.conj().T @ _mult_columns(B0, Q, grid)
    H = 0.5 * (C + C.conj().T)
    S = (C - C.conj().T) / 2j
    w, U = np.linalg.eigh(H)
    kappa = float(w[0])
    if kappa <= 0:
        raise SpectrumError(f"B0 not accretive on H (kappa={kappa:.3g})")
    Hm = (U / np.sqrt(w)) @ U.conj().T
    R = Hm @ S @ Hm
    mu = np.linalg.eigvalsh(0.5 * (R + R.conj().T))
    return kappa, float(np.arctan(np.max(np.abs(mu))))


def _cache_key(B0, grid, kind, method) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(B0, dtype=complex).tobytes())
    h.update(repr((grid.n, grid.m, grid.N, grid.L, kind, method, CACHE_VERSION)).encode())
    return h.hexdigest()[:24]


def _cache_dir(cache_dir):
    d = cache_dir or os.environ.get("HDBVP_CACHE_DIR")
    return Path(d) if d else None


def spectral_decompose(B0, grid: Grid, kind: str = "DB0", method: str = "auto",
                       cache_dir=None) -> SpectralDecomp:
    """Eigendecomposition of DB0 | H or B0D | B0 H.

    B0 is a t-independent CoefficientField or an array (P, d, d).
    method: 'auto' (eig, Schur fallback when eigenvectors are ill-conditioned),
    'eig' or 'schur'.
    """
    from .coefficients import CoefficientField
    if isinstance(B0, CoefficientField):
        if not B0.t_independent:
            raise ValueError("B0 must be t-independent")
        B0 = B0.slice0
    B0 = np.ascontiguousarray(B0, dtype=complex)
    if B0.shape != (grid.P, grid.d, grid.d):
        raise GridError("B0 does not match grid")
    if kind not in ("DB0", "B0D"):
        raise ValueError(f"unknown kind {kind!r}")

    Q = range_basis(grid)
    kappa, om_B = _range_angle(B0, Q, grid)
    Dq = Q.conj().T @ _D_columns(grid, Q)
    # Q* D = D_q Q* since D is self-adjoint and vanishes off the range
    QhD = Dq @ Q.conj().T
    if kind == "DB0":
        basis = Q
        Bq = Q.conj().T @ _mult_columns(B0, Q, grid)
        T = Dq @ Bq
        # pre(u) = Q* D B0 u  (= T c for the range component c)
        Cpre = _right_mult(QhD, B0, grid)
    else:
        basis, _ = np.linalg.qr(_mult_columns(B0, Q, grid))
        BD = _mult_columns(B0, _D_columns(grid, basis), grid)
        T = basis.conj().T @ BD
        # pre(u) = basis* B0 D u
        Cpre = _right_mult(basis.conj().T, B0, grid)
        Cpre = (_D_columns(grid, Cpre.conj().T)).conj().T  # (basis* B0) D, D self-adjoint

    cdir = _cache_dir(cache_dir)
    key = _cache_key(B0, grid, kind, method)
    lam = V = None
    if cdir is not None:
        fp = cdir / f"decomp_{key}.npz"
        if fp.exists():
            with np.load(fp) as z:
                if int(z["version"]) == CACHE_VERSION:
                    lam, V = z["lam"], z["V"]
    if lam is None:
        lam, V = sla.eig(T)
        if cdir is not None:
            cdir.mkdir(parents=True, exist_ok=True)
            np.savez(cdir / f"decomp_{key}.npz", version=CACHE_VERSION, lam=lam, V=V)

    if np.any(np.abs(lam.real) < 1e-10 * np.abs(lam)):
        raise SpectrumError("spectrum touches imaginary axis")
    V = V / np.linalg.norm(V, axis=0)
    cond = float(np.linalg.cond(V))
    use = method
    if method == "auto":
        use = "eig" if cond < EIG_COND_LIMIT else "schur"
    Vinv = np.linalg.inv(V)
    ang = np.abs(np.angle(lam * np.sign(lam.real)))
    if ang.max() > om_B + 1e-6:
        raise SpectrumError(f"spectral angle {ang.max():.6g} exceeds accretivity angle {om_B:.6g}")
    dec = SpectralDecomp(kind, grid, B0, basis, T, lam, V, Vinv, use,
                         float(ang.max()), om_B, kappa, cond, Cpre, QhD)
    if use == "schur":
        dec._sign = _newton_sign(T)
    return dec


def _right_mult(X: np.ndarray, B0: np.ndarray, grid: Grid) -> np.ndarray:
    """X @ blockdiag(B0) for X of shape (k, P*d)."""
    k = X.shape[0]
    Xr = X.reshape(k, grid.P, grid.d)
    return np.einsum("kpi,pij->kpj", Xr, B0).reshape(k, -1)


def sector_defect(dec: SpectralDecomp) -> float:
    """How far the spectrum pokes out of the accretivity sector (0 if inside)."""
    return max(0.0, dec.omega - dec.omega_B0)


# --- cross-operator maps ---------------------------------------------------------

def _same_B0(a: SpectralDecomp, b: SpectralDecomp):
    if a.B0 is not b.B0 and not np.array_equal(a.B0, b.B0):
        raise ValueError("decompositions built from different B0")


def hatE(dDB: SpectralDecomp, dBD: SpectralDecomp | None, sign: int, u) -> np.ndarray:
    """E0^{+-} B0^{-1} P_{B0 H} u.

    B0^{-1} P_{B0 H} u is the h in H with B0 h = P_{B0 H} u; D B0 h = D u gives
    T c = Q* D u, so no inversion of B0 on the full space is needed.
    """
    if dBD is not None:
        _same_B0(dDB, dBD)
    if dDB.kind != "DB0":
        raise ValueError("first argument must be the DB0 decomposition")
    b = chi_plus if sign > 0 else chi_minus
    x, _ = dDB._flat(u)
    pre = x @ dDB._CD.T
    if dDB.method == "eig":
        y = (pre @ dDB.Vinv.T) / dDB.lam
        return dDB.from_coords(b(dDB.lam) * y)
    c = np.linalg.solve(dDB.T, pre.T).T
    return dDB.from_basis(c @ dDB.function_matrix(b).T)


def hatE_coords(dDB: SpectralDecomp, u) -> np.ndarray:
    """Eigen-coordinates y with hatE(+-) u = from_coords(chi_+- * y)."""
    x, _ = dDB._flat(u)
    return (x @ dDB._CD.T @ dDB.Vinv.T) / dDB.lam


def intertwine_check(dDB: SpectralDecomp, dBD: SpectralDecomp, symbols=None,
                     n_fields: int = 4, seed: int = 0) -> float:
    """max ||B0 b(DB0) u - b(B0D) B0 u|| and ||b(DB0) D u - D b(B0D) u|| (relative)."""
    _same_B0(dDB, dBD)
    g = dDB.grid
    if symbols is None:
        symbols = [sym_one, ressym(1j), ressym(2.0 + 1j), expsym(0.5), chi_plus, chi_minus]
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n_fields, g.P, g.d)) + 1j * rng.standard_normal((n_fields, g.P, g.d))
    B0 = dDB.B0
    worst = 0.0
    for b in symbols:
        lhs = multiply(B0, dDB.apply(b, U))
        rhs = dBD.apply(b, multiply(B0, U))
        worst = max(worst, np.linalg.norm(lhs - rhs) / np.linalg.norm(U))
        lhs = dDB.apply(b, apply_D(g, U))
        rhs = apply_D(g, dBD.apply(b, U))
        worst = max(worst, np.linalg.norm(lhs - rhs) / np.linalg.norm(U))
    return float(worst)


# --- extensions, square functions, cross-check paths ----------------------------------

def cauchy_extend(dec: SpectralDecomp, h_plus, t=None):
    """f_t = e^{-t Lambda} E0+ h on the t-nodes; returns (f, projection_defect)."""
    g = dec.grid
    t = g.t_nodes if t is None else np.atleast_1d(np.asarray(t, float))
    if np.any(t < 0):
        raise ValueError("t must be >= 0 (upper half-space)")
    h = np.asarray(h_plus, dtype=complex)
    y = dec.coords(h)
    yp = y * chi_plus(dec.lam)
    hp = dec.from_coords(yp)
    nh = np.linalg.norm(h)
    defect = float(np.linalg.norm(hp - h) / nh) if nh > 0 else 0.0
    decay = np.exp(-np.outer(t, dec.mu))
    f = dec.from_coords(decay * yp[..., None, :])
    return f, defect


def random_plus(dec: SpectralDecomp, rng, band: int | None = None, count: int = 1):
    """Random elements of E0+ H, optionally band-limited to |k| <= band (lattice units)."""
    g = dec.grid
    u = rng.standard_normal((count, g.P, g.d)) + 1j * rng.standard_normal((count, g.P, g.d))
    if band is not None:
        k = g.xi * g.L / (2 * np.pi)
        keep = np.max(np.abs(k), axis=1) <= band
        uh = g.fft(u)
        uh[:, ~keep, :] = 0
        u = g.ifft(uh)
    return dec.E_plus(u)


def square_function_ratio(dec: SpectralDecomp, samples: int = 8, seed: int = 0,
                          band: int | None = None, return_all=False):
    """Min/max over random h in E0+ H of ||d/dt C0+ h||_Y / ||h||_2."""
    g = dec.grid
    rng = np.random.default_rng(seed)
    H = random_plus(dec, rng, band, samples)
    ratios = []
    tw = g.t_weights * g.t_nodes
    for h in H:
        nh = np.sqrt(np.sum(np.abs(h) ** 2) * g.cell)
        if nh == 0:
            continue
        y = dec.coords(h)
        dfs = dec.from_coords(-dec.mu * np.exp(-np.outer(g.t_nodes, dec.mu)) * y)
        ny = np.sqrt(np.sum(tw * np.sum(np.abs(dfs) ** 2, axis=(1, 2)) * g.cell))
        ratios.append(ny / nh)
    ratios = np.array(ratios)
    if return_all:
        return ratios
    return float(ratios.min()), float(ratios.max())


def dunford_quadrature(dec: SpectralDecomp, F, theta: float | None = None,
                       tol: float = 1e-11, s_range=(-40.0, 12.0), max_level: int = 12):
    """F(Lambda) on the range, in basis coordinates, by contour quadrature.

    Lambda is formed from a Newton sign iteration (independent of the
    eigenvectors), the contour is the boundary of the sector |arg z| < theta
    with lambda = e^{s +- i theta}, trapezoid rule in s refined until the
    update is below tol.
    """
    om = dec.omega
    if theta is None:
        nu = 0.5 * (om + np.pi / 2)
        theta = 0.5 * (om + nu)
    if not om < theta < np.pi / 2:
        raise ValueError(f"contour angle {theta:.4g} must lie in (omega={om:.4g}, pi/2)")
    S = dec._sign if dec._sign is not None else _newton_sign(dec.T)
    Lam = S @ dec.T
    r = dec.r
    I = np.eye(r)
    lo = np.log(np.min(np.abs(dec.mu))) + s_range[0] * 0.5
    hi = np.log(np.max(np.abs(dec.mu))) + s_range[1] * 0.5
    hi = max(hi, np.log(60.0))

    def integrand(s):
        out = np.zeros((r, r), dtype=complex)
        for sgn in (-1, 1):
            lam = np.exp(s + sgn * 1j * theta)
            Fv = F(np.array([lam]))[0]
            if Fv == 0:
                continue
            # counterclockwise: outward on the lower ray, inward on the upper
            out += (-sgn) * Fv * lam * np.linalg.solve(lam * I - Lam, I)
        return out / (2j * np.pi)

    h = (hi - lo) / 16
    nodes = np.arange(lo, hi + h / 2, h)
    acc = sum(integrand(s) for s in nodes) * h
    for _ in range(max_level):
        h /= 2
        mids = nodes[:-1] + h
        new = 0.5 * acc + h * sum(integrand(s) for s in mids)
        nodes = np.sort(np.concatenate([nodes, mids]))
        if np.linalg.norm(new - acc) <= tol * max(1.0, np.linalg.norm(new)):
            return new
        acc = new
    return acc


def resolvent_bound(dec: SpectralDecomp, n_angle: int = 6, n_rad: int = 7):
    """max ||(z - T)^{-1}|| dist(z, S_omega) over z outside the bisector."""
    om = dec.omega
    I = np.eye(dec.r)
    mus = np.abs(dec.mu)
    radii = np.geomspace(mus.min() / 4, mus.max() * 4, n_rad)
    worst = 0.0
    for phi in np.linspace(om + 0.05 * (np.pi / 2 - om), np.pi - om - 0.05 * (np.pi / 2 - om), n_angle):
        for rad in radii:
            for z in (rad * np.exp(1j * phi), rad * np.exp(-1j * phi)):
                nr = np.linalg.norm(np.linalg.inv(z * I - dec.T), 2)
                a = min(abs(np.angle(z)), abs(np.pi - abs(np.angle(z))))
                dist = abs(z) * np.sin(a - om) if a - om < np.pi / 2 else abs(z)
                worst = max(worst, nr * dist)
    return float(worst)
