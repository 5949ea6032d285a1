"""Non-tangential maximal function, the X / Y / Y* norms, Carleson and star norms.

Whitney averages are normalised by the discrete measure of the region, so
N*(const) = |const| exactly and the L^p variants are ordered in p.  This
differs from the t^{-(1+n)/2} normalisation by the fixed factor
(c0 - 1/c0) |B(0, c1)|.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from functools import lru_cache

import numpy as np

from .grid import Grid, GridError


@dataclass(frozen=True)
class _Plan:
    windows: tuple          # per centre k: array of t-indices
    wsum: np.ndarray        # per centre: sum of weights in window
    balls: tuple            # per centre: FFT of the ball mask or None (single point)
    counts: np.ndarray      # ball sizes
    offsets: tuple          # per centre: lattice offsets in the ball
    coarse: np.ndarray      # bool per centre: ball resolves no neighbour
    partial: np.ndarray     # bool per centre: window clipped by the range


_PLANS: dict = {}


def _plan(grid: Grid, c0=None, c1=None) -> _Plan:
    c0 = grid.c0 if c0 is None else c0
    c1 = grid.c1 if c1 is None else c1
    key = (grid.n, grid.N, grid.L, grid.K, float(grid.t_nodes[0]), float(grid.t_nodes[-1]), c0, c1)
    if key in _PLANS:
        return _PLANS[key]
    t = grid.t_nodes
    dist = grid.periodic_distance(np.zeros(grid.n))
    windows, wsum, balls, counts, offs, coarse, partial = [], [], [], [], [], [], []
    for tk in t:
        win = np.nonzero((t > tk / c0) & (t < c0 * tk))[0]
        windows.append(win)
        wsum.append(grid.t_weights[win].sum())
        mask = dist < c1 * tk
        mask[0] = True
        counts.append(int(mask.sum()))
        offs.append(np.nonzero(mask)[0])
        coarse.append(mask.sum() == 1)
        if mask.sum() == 1:
            balls.append(None)
        else:
            balls.append(np.fft.fftn(mask.reshape(grid.shape).astype(float)))
        partial.append(tk / c0 < t[0] or c0 * tk > t[-1])
    p = _Plan(tuple(windows), np.array(wsum), tuple(balls), np.array(counts), tuple(offs),
              np.array(coarse), np.array(partial))
    _PLANS[key] = p
    return p


def _ball_sum(grid: Grid, a: np.ndarray, ball_hat) -> np.ndarray:
    """Periodic sum of a (..., P) over the ball around every lattice point."""
    if ball_hat is None:
        return a
    lead = a.shape[:-1]
    A = a.reshape(lead + grid.shape)
    axes = tuple(range(len(lead), len(lead) + grid.n))
    # mask is symmetric, so correlation equals convolution
    s = np.fft.ifftn(np.fft.fftn(A, axes=axes) * ball_hat, axes=axes).real
    return s.reshape(lead + (grid.P,))


def _node_power(f: np.ndarray, p: float) -> np.ndarray:
    a2 = np.sum(np.abs(f) ** 2, axis=-1)
    return a2 if p == 2 else a2 ** (p / 2)


def nontangential_max(grid: Grid, f, p: float = 2.0, c0=None, c1=None, return_flags=False):
    """N*f(x) = max over t-nodes of the L^p average of |f| over W(t, x).

    f has shape (..., K, P, d); returns (..., P).
    """
    f = grid.check_bulk(f)
    plan = _plan(grid, c0, c1)
    a = _node_power(f, p)                       # (..., K, P)
    aw = a * grid.t_weights[:, None]
    out = np.zeros(a.shape[:-2] + (grid.P,))
    csum = np.cumsum(aw, axis=-2)
    zero = np.zeros_like(csum[..., :1, :])
    csum = np.concatenate([zero, csum], axis=-2)
    for k, win in enumerate(plan.windows):
        s = csum[..., win[-1] + 1, :] - csum[..., win[0], :]
        s = _ball_sum(grid, s, plan.balls[k]) / (plan.counts[k] * plan.wsum[k])
        np.maximum(out, s, out=out)
    out = np.maximum(out, 0.0) ** (1.0 / p)
    if return_flags:
        return out, dict(coarse=int(plan.coarse.sum()), partial=int(plan.partial.sum()))
    return out


def x_norm(grid: Grid, f, p: float = 2.0) -> np.ndarray | float:
    nt = nontangential_max(grid, f, p)
    v = np.sqrt(np.sum(nt ** 2, axis=-1) * grid.cell)
    return float(v) if np.ndim(v) == 0 else v


def _slice_sq(grid, f):
    return np.sum(np.abs(f) ** 2, axis=(-1, -2)) * grid.cell


def y_norm(grid: Grid, f):
    f = grid.check_bulk(f)
    v = np.sqrt(np.sum(_slice_sq(grid, f) * grid.t_weights * grid.t_nodes, axis=-1))
    return float(v) if np.ndim(v) == 0 else v


def ystar_norm(grid: Grid, f):
    f = grid.check_bulk(f)
    v = np.sqrt(np.sum(_slice_sq(grid, f) * grid.t_weights / grid.t_nodes, axis=-1))
    return float(v) if np.ndim(v) == 0 else v


def sup_l2(grid: Grid, f):
    f = grid.check_bulk(f)
    v = np.sqrt(np.max(_slice_sq(grid, f), axis=-1))
    return float(v) if np.ndim(v) == 0 else v


def dyadic_band_average(grid: Grid, f, c: float = 2.0) -> float:
    """sup_t (1/t) int_t^{ct} ||f_s||^2 ds over node-anchored bands (lower side)."""
    f = grid.check_bulk(f)
    sq = _slice_sq(grid, f)
    t = grid.t_nodes
    best = 0.0
    for k, tk in enumerate(t):
        sel = (t >= tk) & (t < c * tk)
        if t[-1] < c * tk * 0.999:
            break
        best = max(best, float(np.sum(sq[..., sel] * grid.t_weights[sel]) / tk))
    return best


@dataclass
class NormReport:
    x_norm: float
    y_norm: float
    ystar_norm: float
    sup_l2: float
    sq_fn: float | None = None
    whitney: tuple = (2.0, 1.0)
    coarse_centres: int = 0

    def as_dict(self):
        return asdict(self)


def norm_report(grid: Grid, f, sq_fn=None) -> NormReport:
    nt, flags = nontangential_max(grid, f, return_flags=True)
    xn = float(np.sqrt(np.sum(nt ** 2) * grid.cell))
    return NormReport(xn, y_norm(grid, f), ystar_norm(grid, f), sup_l2(grid, f), sq_fn,
                      (grid.c0, grid.c1), flags["coarse"])


# --- Carleson norm -------------------------------------------------------------

@dataclass
class CarlesonResult:
    value: float            # sqrt of the sup over dyadic boxes on the truncated grid
    divergent: bool
    decay_exponent: float   # fitted power of t of the Whitney sup near t_min
    box: tuple = ()

    def __float__(self):
        return float("inf") if self.divergent else self.value


def _pointwise_sq(E) -> np.ndarray:
    E = np.asarray(E)
    if E.ndim == 4:
        return np.linalg.norm(E, ord=2, axis=(-2, -1)) ** 2
    if E.ndim == 3:
        return np.sum(np.abs(E) ** 2, axis=-1)
    return np.abs(E) ** 2


def whitney_sup(grid: Grid, s: np.ndarray) -> np.ndarray:
    """sup over W(t_k, x) of a nonnegative (K, P) array."""
    plan = _plan(grid)
    out = np.empty_like(s)
    for k, win in enumerate(plan.windows):
        tm = s[win].max(axis=0)
        offs = plan.offsets[k]
        if offs.size == 1:
            out[k] = tm
            continue
        T = tm.reshape(grid.shape)
        acc = np.zeros_like(T)
        idx = np.array(np.unravel_index(offs, grid.shape)).T
        for o in idx:
            np.maximum(acc, np.roll(T, shift=tuple(-o), axis=tuple(range(grid.n))), out=acc)
        out[k] = acc.ravel()
    return out


def carleson_norm(grid: Grid, E, cap: float = 1e6, min_exponent: float = 0.2) -> CarlesonResult:
    """Modified Carleson norm over the lattice-aligned dyadic boxes.

    Divergence is declared when the truncated sum exceeds `cap` or when the
    Whitney sup fails to decay at t -> 0: its mean over the first two
    t-bands near t_min behaves like t^a with a < min_exponent, so the
    dt/t integral to 0 is (at best) logarithmically divergent.
    """
    s = _pointwise_sq(E)
    if s.shape != (grid.K, grid.P):
        raise GridError("Carleson input does not match grid")
    if not np.any(s):
        return CarlesonResult(0.0, False, np.inf)
    sw = whitney_sup(grid, s)
    t = grid.t_nodes
    dens = sw * (grid.t_weights / t)[:, None]
    best, box = 0.0, ()
    top = int(np.log2(grid.N))
    for lev in range(top + 1):
        ell = grid.L / 2 ** lev
        F = dens[t < ell].sum(axis=0)
        k = 2 ** lev
        w = grid.N // k
        G = F.reshape(sum(((k, w),) * grid.n, ()))
        means = G.mean(axis=tuple(range(1, 2 * grid.n, 2)))
        i = np.unravel_index(np.argmax(means), means.shape)
        if means[i] > best:
            best, box = float(means[i]), (lev, tuple(int(v) for v in i))
    value = float(np.sqrt(best))
    # decay of the Whitney sup near t_min
    q = min(10.0, np.sqrt(t[-1] / t[0]))
    b1 = (t < t[0] * q)
    b2 = (t >= t[0] * q) & (t < t[0] * q * q)
    m1 = float(np.mean(sw[b1].max(axis=1))) if b1.any() else 0.0
    m2 = float(np.mean(sw[b2].max(axis=1))) if b2.any() else 0.0
    scale = float(sw.max())
    if m1 <= 1e-14 * scale:
        a = np.inf
    elif m2 <= 0:
        a = -np.inf
    else:
        a = float(np.log(m2 / m1) / np.log(q)) / 2.0   # exponent of |E|, not |E|^2
    divergent = value > cap or a < min_exponent
    return CarlesonResult(value, bool(divergent), a, box)


# --- star norm -------------------------------------------------------------------

def _node_probe_constants(grid: Grid) -> np.ndarray:
    """c(k) = ||f||_{Y*} / ||f||_X for f supported on one node (k, x)."""
    out = np.empty(grid.K)
    for k in range(grid.K):
        f = np.zeros((grid.K, grid.P, 1))
        f[k, 0, 0] = 1.0
        num = np.sqrt(grid.t_weights[k] / grid.t_nodes[k] * grid.cell)
        out[k] = num / x_norm(grid, f)
    return out


_NODE_CONST: dict = {}


def node_probe_constants(grid: Grid) -> np.ndarray:
    key = tuple(grid.params().items())
    if key not in _NODE_CONST:
        _NODE_CONST[key] = _node_probe_constants(grid)
    return _NODE_CONST[key]


def _mult(E, f):
    E = np.asarray(E)
    if E.ndim == 4:
        return np.einsum("kpij,...kpj->...kpi", E, f)
    return E[..., None] * f


def _mult_adj(E, f):
    E = np.asarray(E)
    if E.ndim == 4:
        return np.einsum("kpji,...kpj->...kpi", E.conj(), f)
    return np.conj(E)[..., None] * f


def star_estimate(grid: Grid, E, seed: int = 0, iterations: int = 20, width: int | None = None):
    """Seeded search for sup ||E f||_{Y*} / ||f||_X.

    Seeds: the best single-node probe, the slab probe around it and a few
    random fields; each is pushed through `iterations` steps of
    f <- E* W E f (W = dt/t weights) normalised in X.  Returns the best ratio.
    """
    E = np.asarray(E)
    d_in = E.shape[-1] if E.ndim == 4 else 1
    s = _pointwise_sq(E)
    if not np.any(s):
        return 0.0
    c = node_probe_constants(grid)
    score = np.sqrt(s) * c[:, None]
    k0, p0 = np.unravel_index(np.argmax(score), score.shape)
    if E.ndim == 4:
        _, _, Vh = np.linalg.svd(E[k0, p0])
        v = Vh[0].conj()
    else:
        v = np.ones(1)
    rng = np.random.default_rng(seed)
    seeds = []
    f = np.zeros((grid.K, grid.P, d_in), dtype=complex)
    f[k0, p0] = v
    seeds.append(f)
    win = _plan(grid).windows[k0]
    f = np.zeros_like(f)
    f[win[0]:win[-1] + 1, :, :] = v
    seeds.append(f * (s[..., None] > 0))
    f = np.zeros_like(f)
    f[win[0]:win[-1] + 1, p0, :] = v
    seeds.append(f)
    for _ in range(3 if width is None else width):
        seeds.append(rng.standard_normal((grid.K, grid.P, d_in))
                     + 1j * rng.standard_normal((grid.K, grid.P, d_in)))
    W = (grid.t_weights / grid.t_nodes)[:, None, None]
    best = 0.0
    for f in seeds:
        for it in range(iterations + 1):
            xn = x_norm(grid, f)
            if xn == 0:
                break
            f = f / xn
            Ef = _mult(E, f)
            best = max(best, ystar_norm(grid, Ef))
            f = _mult_adj(E, W * Ef)
    return float(best)


_CGRID: dict = {}
CGRID_SAFETY = 2.0


def carleson_embedding_constant(grid: Grid) -> float:
    """Grid constant C with ||E||_* <= C ||E||_C, calibrated on box indicators.

    Test fields are E = 1 on Carleson boxes (0, l(Q)) x Q for a few dyadic
    cubes Q plus t-slabs; the largest observed ratio times a safety factor.
    """
    key = tuple(grid.params().items())
    if key in _CGRID:
        return _CGRID[key]
    t = grid.t_nodes
    ratios = []
    for lev in range(0, min(3, int(np.log2(grid.N))) + 1):
        E = np.zeros((grid.K, grid.P))
        ell = grid.L / 2 ** lev
        from .grid import DyadicCube
        idx = DyadicCube(lev, (0,) * grid.n, ell).indices(grid)
        E[np.ix_(t < ell, idx)] = 1.0
        ratios.append(star_estimate(grid, E, iterations=8, width=1) / carleson_norm(grid, E, cap=np.inf,
                                                                                   min_exponent=-np.inf).value)
    for a in np.geomspace(t[0] * 4, min(t[-1], grid.L) / 4, 4):
        E = np.zeros((grid.K, grid.P))
        E[(t > a) & (t < 2 * a)] = 1.0
        cn = carleson_norm(grid, E, cap=np.inf).value
        if cn > 0:
            ratios.append(star_estimate(grid, E, iterations=8, width=1) / cn)
    C = CGRID_SAFETY * max(ratios)
    _CGRID[key] = C
    return C


@dataclass
class StarBounds:
    lower: float             # best single-node probe: <= estimate by construction
    upper: float             # C_grid * ||E||_C (inf if divergent)
    estimate: float
    sup_norm: float          # raw ||E||_inf
    carleson: float
    c_grid: float

    def __iter__(self):
        return iter((self.lower, self.upper, self.estimate))


def star_norm_bounds(grid: Grid, E, seed: int = 0, iterations: int = 20) -> StarBounds:
    s = _pointwise_sq(E)
    if not np.any(s):
        return StarBounds(0.0, 0.0, 0.0, 0.0, 0.0, carleson_embedding_constant(grid))
    c = node_probe_constants(grid)
    lower = float(np.max(np.sqrt(s) * c[:, None]))
    est = star_estimate(grid, E, seed=seed, iterations=iterations)
    cn = carleson_norm(grid, E)
    Cg = carleson_embedding_constant(grid)
    upper = np.inf if cn.divergent else Cg * cn.value
    return StarBounds(lower, float(upper), max(est, lower), float(np.sqrt(s.max())), cn.value, Cg)
