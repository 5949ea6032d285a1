"""Coefficient fields A(t, x), the hat transform, pullbacks and discrepancies."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import warnings

import numpy as np

from .grid import Grid, GridError


class CoefficientError(ValueError):
    pass


class NotAccretiveError(CoefficientError):
    pass


COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Matrices A(t_k, x_p) of size d x d, d = (1+n)m, stored as (K, P, d, d)."""
    grid: Grid
    entries: np.ndarray = field(repr=False)
    t_independent: bool = False

    def __post_init__(self):
        g = self.grid
        e = np.asarray(self.entries)
        if e.shape == (g.P, g.d, g.d):
            e = np.broadcast_to(e, (g.K,) + e.shape)
            object.__setattr__(self, "t_independent", True)
        if e.shape != (g.K, g.P, g.d, g.d):
            raise GridError(f"coefficient shape {e.shape} does not match grid")
        if not np.all(np.isfinite(e)):
            raise CoefficientError("non-finite coefficients")
        object.__setattr__(self, "entries", e)

    @classmethod
    def constant_in_t(cls, grid: Grid, A_x) -> "CoefficientField":
        A_x = np.asarray(A_x, dtype=complex)
        if A_x.shape == (grid.d, grid.d):
            A_x = np.broadcast_to(A_x, (grid.P, grid.d, grid.d))
        return cls(grid, np.broadcast_to(A_x, (grid.K,) + A_x.shape), True)

    # blocks ---------------------------------------------------------
    @property
    def m(self):
        return self.grid.m

    @property
    def pp(self):
        return self.entries[..., :self.m, :self.m]

    @property
    def pt(self):
        return self.entries[..., :self.m, self.m:]

    @property
    def tp(self):
        return self.entries[..., self.m:, :self.m]

    @property
    def tt(self):
        return self.entries[..., self.m:, self.m:]

    @property
    def slice0(self) -> np.ndarray:
        """x-dependent matrices of the first slice, (P, d, d)."""
        return np.asarray(self.entries[0])

    @cached_property
    def sup_norm(self) -> float:
        if self.t_independent:
            return float(np.max(np.linalg.norm(self.slice0, ord=2, axis=(-2, -1))))
        return float(np.max(np.linalg.norm(self.entries, ord=2, axis=(-2, -1))))

    @cached_property
    def _accretivity(self):
        return accretivity(self)

    @property
    def kappa(self) -> float:
        return self._accretivity[0]

    @property
    def omega(self):
        return self._accretivity[1]

    def t_derivative(self) -> np.ndarray:
        """t * dA/dt by differences along the log grid, shape (K, P, d, d)."""
        if self.t_independent or self.grid.K < 2:
            return np.zeros(self.entries.shape, dtype=complex)
        u = np.log(self.grid.t_nodes)
        return np.gradient(np.asarray(self.entries), u, axis=0)


# --- generators -------------------------------------------------------

def identity(grid: Grid) -> CoefficientField:
    return CoefficientField.constant_in_t(grid, np.eye(grid.d, dtype=complex))


def constant(grid: Grid, matrix) -> CoefficientField:
    M = np.asarray(matrix, dtype=complex)
    if M.shape != (grid.d, grid.d):
        raise CoefficientError(f"matrix must be {grid.d}x{grid.d}")
    return CoefficientField.constant_in_t(grid, M)


def _smooth_matrix_field(grid: Grid, rng, kmax: int, hermitean: bool, dim: int | None = None):
    """Low-mode trigonometric matrix field G(x) with sup ||G(x)||_2 = 1."""
    d = grid.d if dim is None else dim
    x = grid.coords * (2 * np.pi / grid.L)
    G = np.zeros((grid.P, d, d), dtype=complex)
    for kvec in np.ndindex(*([2 * kmax + 1] * grid.n)):
        k = np.array(kvec) - kmax
        if np.abs(k).sum() > kmax:
            continue
        C = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        C /= (1.0 + np.abs(k).sum()) ** 2
        phase = np.exp(1j * (x @ k))[:, None, None]
        G += phase * C
    if hermitean:
        G = 0.5 * (G + np.conj(np.swapaxes(G, -1, -2)))
    s = np.max(np.linalg.norm(G, ord=2, axis=(-2, -1)))
    return G / s


def hermitean_random(grid: Grid, seed: int, amplitude: float = 0.5, kmax: int = 2,
                     real: bool = False) -> CoefficientField:
    """I + amplitude*G(x) with G smooth Hermitean, sup ||G|| = 1."""
    if not 0 <= amplitude < 1:
        raise CoefficientError("amplitude must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    G = _smooth_matrix_field(grid, rng, kmax, hermitean=True)
    if real:
        G = G.real
        G = G / np.max(np.linalg.norm(G, ord=2, axis=(-2, -1)))
    return CoefficientField.constant_in_t(grid, np.eye(grid.d) + amplitude * G)


def random_accretive(grid: Grid, seed: int, amplitude: float = 0.5, kmax: int = 2) -> CoefficientField:
    """I + amplitude*G(x) with G smooth, complex, non-Hermitean, sup ||G|| = 1."""
    if not 0 <= amplitude < 1:
        raise CoefficientError("amplitude must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    G = _smooth_matrix_field(grid, rng, kmax, hermitean=False)
    return CoefficientField.constant_in_t(grid, np.eye(grid.d) + amplitude * G)


def block(grid: Grid, seed: int, amplitude: float = 0.5, kmax: int = 2) -> CoefficientField:
    """Block form: zero normal/tangential coupling, complex accretive diagonal blocks."""
    rng = np.random.default_rng(seed)
    m = grid.m
    A = np.zeros((grid.P, grid.d, grid.d), dtype=complex)
    A[:, :m, :m] = np.eye(m) + amplitude * _smooth_matrix_field(grid, rng, kmax, False, m)
    A[:, m:, m:] = np.eye(grid.d - m) + amplitude * _smooth_matrix_field(grid, rng, kmax, False, grid.d - m)
    return CoefficientField.constant_in_t(grid, A)


def t_profile(name: str, t, t0: float = 1.0, t1: float = 2.0, **kw) -> np.ndarray:
    """Scalar t-profiles used for perturbations.

    slab   indicator of (t0, t1)
    bump   smooth log-symmetric bump (t/t0)/(1+(t/t0)^2), peak 1/2 at t0
    ramp   (t/t0)^2 / (1 + (t/t0)^2), vanishes at 0, tends to 1
    const  1 for all t
    logosc sin(ln(t/t0)), no limit as t -> 0
    """
    t = np.asarray(t, float)
    if name == "slab":
        return ((t > t0) & (t < t1)).astype(float)
    if name == "bump":
        s = t / t0
        return s / (1 + s * s)
    if name == "ramp":
        s = (t / t0) ** 2
        return s / (1 + s)
    if name == "const":
        return np.ones_like(t)
    if name == "logosc":
        return np.sin(np.log(t / t0))
    raise CoefficientError(f"unknown t-profile {name!r}")


def perturb(A0: CoefficientField, profile, M=None, eps: float = 1.0, seed: int | None = None,
            **profile_kw) -> CoefficientField:
    """A(t, x) = A0(x) + eps * profile(t) * M(x).

    M defaults to the identity; with a seed, to a smooth random complex field
    with sup norm one.  `profile` is a name for t_profile or a callable.
    """
    g = A0.grid
    if M is None:
        if seed is None:
            M = np.broadcast_to(np.eye(g.d, dtype=complex), (g.P, g.d, g.d))
        else:
            M = _smooth_matrix_field(g, np.random.default_rng(seed), 2, hermitean=False)
    M = np.asarray(M, dtype=complex)
    if M.shape == (g.d, g.d):
        M = np.broadcast_to(M, (g.P, g.d, g.d))
    prof = profile(g.t_nodes) if callable(profile) else t_profile(profile, g.t_nodes, **profile_kw)
    E = A0.slice0[None] + eps * prof[:, None, None, None] * M[None]
    if eps == 0 or not np.any(prof):
        return CoefficientField.constant_in_t(g, A0.slice0)
    return CoefficientField(g, E, False)


# --- the hat transform -------------------------------------------------

def hat_matrices(A: np.ndarray, m: int) -> np.ndarray:
    """Block formula on a stack of matrices (..., d, d)."""
    A = np.asarray(A, dtype=complex)
    App = A[..., :m, :m]
    Apt = A[..., :m, m:]
    Atp = A[..., m:, :m]
    Att = A[..., m:, m:]
    cond = np.linalg.cond(App)
    if np.any(~np.isfinite(cond)) or np.max(cond) > COND_LIMIT:
        raise CoefficientError(f"A_perp,perp near singular (cond {np.max(cond):.3g})")
    inv = np.linalg.inv(App)
    out = np.empty_like(A)
    out[..., :m, :m] = inv
    out[..., :m, m:] = -inv @ Apt
    out[..., m:, :m] = Atp @ inv
    out[..., m:, m:] = Att - Atp @ inv @ Apt
    return out


def hat_transform(A: CoefficientField) -> CoefficientField:
    g = A.grid
    if A.t_independent:
        return CoefficientField.constant_in_t(g, hat_matrices(A.slice0, g.m))
    return CoefficientField(g, hat_matrices(A.entries, g.m), False)


def hat_pair(A: np.ndarray, g: np.ndarray, m: int) -> np.ndarray:
    """f = [(A g)_perp, g_par] for pointwise matrices A (..., d, d) and g (..., d)."""
    f = np.array(g, dtype=complex, copy=True)
    f[..., :m] = np.einsum("...ij,...j->...i", A[..., :m, :], g)
    return f


def conormal_to_gradient(B: np.ndarray, f: np.ndarray, m: int) -> np.ndarray:
    """g = [(B f)_perp, f_par]; the inverse of hat_pair with B = A-hat."""
    return hat_pair(B, f, m)


# --- accretivity ---------------------------------------------------------

def _compressions(A_x: np.ndarray, grid: Grid):
    """Compression of a multiplication operator to the discrete curl-free space."""
    from .calculus import curl_free_basis, multiply
    Q = curl_free_basis(grid)
    AQ = multiply(A_x, Q.T.reshape(-1, grid.P, grid.d)).reshape(Q.shape[1], -1).T
    return Q.conj().T @ AQ


def _kappa_omega(C: np.ndarray, want_omega: bool):
    """C: (..., r, r) compressed operators. kappa = min eig of Re C."""
    H = 0.5 * (C + np.conj(np.swapaxes(C, -1, -2)))
    S = (C - np.conj(np.swapaxes(C, -1, -2))) / 2j
    ev = np.linalg.eigvalsh(H)
    kappa = float(np.min(ev))
    omega = None
    if want_omega and kappa > 0:
        w, V = np.linalg.eigh(H)
        Hm = V @ (np.swapaxes(V.conj(), -1, -2) / np.sqrt(w)[..., :, None])
        R = Hm @ S @ Hm
        mu = np.linalg.eigvalsh(0.5 * (R + np.conj(np.swapaxes(R, -1, -2))))
        omega = float(np.arctan(np.max(np.abs(mu))))
    return kappa, omega


def accretivity(A: CoefficientField, grid: Grid | None = None):
    """(kappa, omega) on the discrete curl-free space.

    kappa is the minimum over t-slices of the smallest eigenvalue of the
    compressed Hermitean part; omega = sup |arg (A f, f)| over that space is
    computed exactly from a generalised Hermitean eigenproblem (t-independent
    fields only, else None).
    """
    g = A.grid if grid is None else grid
    if not g.same_as(A.grid):
        raise GridError("grid mismatch")
    slices = [A.slice0] if A.t_independent else [np.asarray(A.entries[k]) for k in range(g.K)]
    kappas, omega = [], None
    for k, Ax in enumerate(slices):
        if g.n == 1:
            C = Ax                     # curl-free space is all of L2 when n = 1
        else:
            C = _compressions(Ax, g)
        kap, om = _kappa_omega(C, want_omega=A.t_independent)
        kappas.append(kap)
        omega = om
    kappa = float(min(kappas))
    return kappa, omega


def require_accretive(A: CoefficientField, what="A") -> float:
    kap = A.kappa
    if not kap > 0:
        raise NotAccretiveError(f"{what} not accretive on H (kappa={kap:.3g})")
    return kap


# --- Lipschitz pullback ----------------------------------------------------

def spectral_gradient(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Gradient of a scalar lattice function via the Fourier symbol: (P, n)."""
    phi = np.asarray(phi, dtype=complex).reshape(grid.P, 1)
    ph = grid.fft(phi)[:, 0]
    out = np.empty((grid.P, grid.n), dtype=complex)
    for i in range(grid.n):
        out[:, i] = grid.ifft((1j * grid.xi[:, i] * ph)[:, None])[:, 0]
    return out


def pullback_coefficients(A_tilde, phi, grid: Grid, grad_phi=None) -> CoefficientField:
    """Coefficients of the graph map rho(t, x) = (t + phi(x), x).

    A(t,x) = |J| Jrho^{-1} A_tilde(rho(t,x)) Jrho^{-T}, with |J| = 1.
    `A_tilde` is a callable (t, x) -> (..., d, d) evaluated on broadcast arrays
    t (K, P) and x (P, n), or a t-independent CoefficientField.
    """
    phi = np.asarray(phi, float).reshape(grid.P)
    if grad_phi is None:
        grad_phi = spectral_gradient(grid, phi).real
    grad_phi = np.asarray(grad_phi, float).reshape(grid.P, grid.n)
    n, m, d = grid.n, grid.m, grid.d
    J = np.broadcast_to(np.eye(1 + n), (grid.P, 1 + n, 1 + n)).copy()
    J[:, 0, 1:] = grad_phi
    Jinv = np.linalg.inv(J)
    Jinv = np.einsum("pab,ij->paibj", Jinv, np.eye(m)).reshape(grid.P, d, d)
    if isinstance(A_tilde, CoefficientField):
        if not A_tilde.t_independent:
            raise CoefficientError("pass a callable for t-dependent A_tilde")
        At = A_tilde.slice0
        A = Jinv @ At @ np.swapaxes(Jinv, -1, -2)
        out = CoefficientField.constant_in_t(grid, A)
    else:
        tt = grid.t_nodes[:, None] + phi[None, :]
        At = np.asarray(A_tilde(tt, grid.coords), dtype=complex)
        At = np.broadcast_to(At, (grid.K, grid.P, d, d))
        A = Jinv[None] @ At @ np.swapaxes(Jinv, -1, -2)[None]
        same = np.allclose(A, A[:1], rtol=0, atol=0)
        out = CoefficientField.constant_in_t(grid, A[0]) if same else CoefficientField(grid, A)
    kap = out.kappa
    if kap <= 0:
        warnings.warn(f"pullback lost accretivity on the grid: kappa={kap:.3g}")
    return out


# --- trace coefficients and discrepancies ------------------------------------

@dataclass
class TraceReport:
    A0: CoefficientField
    finite: bool
    carleson: float
    kappa: float
    kappa0: float
    sup: float
    sup0: float

    @property
    def ordering_ok(self) -> bool:
        tol = 1e-8 * max(1.0, self.sup)
        return self.kappa <= self.kappa0 + tol and self.sup0 <= self.sup + tol


def trace_coefficients(A: CoefficientField, grid: Grid | None = None, cap: float = 1e6,
                       decade: float = 10.0):
    """A0(x) = dt/t-average of A over the smallest t-decade; finite flag.

    Returns (A0, finite, report).
    """
    from .norms import carleson_norm
    g = A.grid if grid is None else grid
    if A.t_independent:
        rep = TraceReport(A, True, 0.0, A.kappa, A.kappa, A.sup_norm, A.sup_norm)
        return A, True, rep
    t = g.t_nodes
    sel = t <= decade * t[0]
    w = g.t_weights[sel] / t[sel]
    A0x = np.einsum("k,kpij->pij", w / w.sum(), np.asarray(A.entries)[sel])
    A0 = CoefficientField.constant_in_t(g, A0x)
    diff = np.asarray(A.entries) - A0x[None]
    # round-off left by the average is not a discrepancy
    diff[np.abs(diff) <= 1e-13 * max(1.0, A.sup_norm)] = 0.0
    cn = carleson_norm(g, diff, cap=cap * max(1.0, A.sup_norm))
    finite = not cn.divergent
    rep = TraceReport(A0, finite, cn.value, A.kappa, A0.kappa, A.sup_norm, A0.sup_norm)
    return A0, finite, rep


@dataclass(eq=False)
class Discrepancy:
    grid: Grid
    entries: np.ndarray = field(repr=False)          # (K, P, d, d), E = B0 - B

    @cached_property
    def is_zero(self) -> bool:
        return not np.any(self.entries)

    @cached_property
    def sup_norm(self) -> float:
        if self.is_zero:
            return 0.0
        return float(np.max(np.linalg.norm(self.entries, ord=2, axis=(-2, -1))))

    @cached_property
    def carleson(self):
        from .norms import carleson_norm
        return carleson_norm(self.grid, self.entries)

    @property
    def carleson_norm(self) -> float:
        return self.carleson.value

    def star_bounds(self, seed: int = 0, iterations: int = 20):
        from .norms import star_norm_bounds
        return star_norm_bounds(self.grid, self.entries, seed=seed, iterations=iterations)

    def scaled(self, s: float) -> "Discrepancy":
        return Discrepancy(self.grid, s * self.entries)

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Pointwise E_t(x) f_t(x) for f of shape (..., K, P, d)."""
        return np.einsum("kpij,...kpj->...kpi", self.entries, f)


def discrepancy(B: CoefficientField, B0: CoefficientField) -> Discrepancy:
    if not B.grid.same_as(B0.grid):
        raise GridError("grid mismatch")
    if not B0.t_independent:
        raise CoefficientError("B0 must be t-independent")
    E = B0.slice0[None] - np.asarray(B.entries)
    if not np.all(np.isfinite(E)):
        raise CoefficientError("non-finite discrepancy")
    return Discrepancy(B.grid, np.ascontiguousarray(E))
