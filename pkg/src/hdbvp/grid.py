"""Periodic spatial lattice times a logarithmic t-grid.

The boundary R^n is replaced by the torus [0, L)^n sampled at N points per
axis, the half line by geometric nodes t_1 < ... < t_K.  Fields carry
d = (1+n)m components per node, laid out as

    [normal block (m), tangential block (n*m)]

with tangential component (i, alpha) stored at index m + i*m + alpha.

Boundary fields are arrays of shape (P, d) with P = N**n (C-order flattening
of the spatial lattice); bulk fields are arrays of shape (K, P, d).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np


class GridError(ValueError):
    pass


class CoarseWhitneyError(GridError):
    """Whitney ball smaller than one lattice spacing."""


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    m: int
    N: int
    L: float
    t_nodes: np.ndarray
    t_weights: np.ndarray
    c0: float = 2.0
    c1: float = 1.0

    # --- sizes -------------------------------------------------------
    @property
    def d(self) -> int:
        return (1 + self.n) * self.m

    @property
    def P(self) -> int:
        return self.N ** self.n

    @property
    def K(self) -> int:
        return len(self.t_nodes)

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def cell(self) -> float:
        """Spatial cell measure h^n."""
        return self.h ** self.n

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def t_min(self) -> float:
        return float(self.t_edges[0])

    @property
    def t_max(self) -> float:
        return float(self.t_edges[-1])

    # --- geometry ----------------------------------------------------
    @cached_property
    def t_edges(self) -> np.ndarray:
        """Cell edges for piecewise-constant-in-t integration (K+1 values).

        Interior edges are geometric midpoints, the outer edges are the
        ends of the truncated range.
        """
        t = self.t_nodes
        if self.K == 1:
            w = float(self.t_weights[0])
            # single node at the geometric centre of [a, b] with weight t ln(b/a)
            r = np.exp(w / t[0])
            return np.array([t[0] / np.sqrt(r), t[0] * np.sqrt(r)])
        mid = np.sqrt(t[1:] * t[:-1])
        return np.concatenate([[t[0]], mid, [t[-1]]])

    @cached_property
    def coords(self) -> np.ndarray:
        """Lattice coordinates, shape (P, n)."""
        ax = np.arange(self.N) * self.h
        mesh = np.meshgrid(*([ax] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @cached_property
    def lattice_index(self) -> np.ndarray:
        """Integer lattice indices, shape (P, n)."""
        ax = np.arange(self.N)
        mesh = np.meshgrid(*([ax] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @cached_property
    def xi(self) -> np.ndarray:
        """Wave vectors in FFT order, flattened like the lattice: (P, n)."""
        k = 2 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        mesh = np.meshgrid(*([k] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.linalg.norm(self.xi, axis=-1)

    def periodic_distance(self, x0) -> np.ndarray:
        """Distance on the torus from point x0 to every lattice point."""
        diff = np.abs(self.coords - np.asarray(x0, float).reshape(1, -1))
        diff = np.minimum(diff, self.L - diff)
        return np.linalg.norm(diff, axis=-1)

    # --- field helpers ----------------------------------------------
    def zeros_boundary(self, dtype=complex) -> np.ndarray:
        return np.zeros((self.P, self.d), dtype=dtype)

    def zeros_bulk(self, dtype=complex) -> np.ndarray:
        return np.zeros((self.K, self.P, self.d), dtype=dtype)

    def check_boundary(self, f) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-2:] != (self.P, self.d):
            raise GridError(f"field shape {f.shape} does not match grid (P={self.P}, d={self.d})")
        return f

    def check_bulk(self, f, components: int | None = None) -> np.ndarray:
        """Check (..., K, P, c); c must equal `components` when given."""
        f = np.asarray(f)
        if f.ndim < 3 or f.shape[-3:-1] != (self.K, self.P) or (
                components is not None and f.shape[-1] != components):
            raise GridError(
                f"bulk shape {f.shape} does not match grid (K={self.K}, P={self.P}, d={self.d})")
        return f

    def fft(self, f: np.ndarray) -> np.ndarray:
        """Unitary DFT over the spatial axis (axis -2) of (..., P, c) arrays."""
        lead = f.shape[:-2]
        g = f.reshape(lead + self.shape + f.shape[-1:])
        axes = tuple(range(len(lead), len(lead) + self.n))
        return np.fft.fftn(g, axes=axes, norm="ortho").reshape(f.shape)

    def ifft(self, f: np.ndarray) -> np.ndarray:
        lead = f.shape[:-2]
        g = f.reshape(lead + self.shape + f.shape[-1:])
        axes = tuple(range(len(lead), len(lead) + self.n))
        return np.fft.ifftn(g, axes=axes, norm="ortho").reshape(f.shape)

    def refine(self, factor: int = 2, t_factor: int | None = None) -> "Grid":
        """Same domain with N*factor points and t-density scaled by t_factor."""
        tf = factor if t_factor is None else t_factor
        K = (self.K - 1) * tf + 1
        return make_grid(self.n, self.m, self.N * factor, self.L,
                         float(self.t_nodes[0]), float(self.t_nodes[-1]), K, self.c0, self.c1)

    def params(self) -> dict:
        return dict(n=self.n, m=self.m, N=self.N, L=self.L,
                    t_min=float(self.t_nodes[0]), t_max=float(self.t_nodes[-1]),
                    K=self.K, c0=self.c0, c1=self.c1)

    def same_as(self, other: "Grid") -> bool:
        return (self is other) or (self.params() == other.params())


def make_grid(n, m, N, L, t_min, t_max, K, c0=2.0, c1=1.0) -> Grid:
    """Build a grid with geometric t-nodes and trapezoid-in-log weights."""
    n, m, N, K = int(n), int(m), int(N), int(K)
    if min(n, m, N, K) < 1:
        raise GridError("n, m, N, K must be >= 1")
    if N & (N - 1):
        raise GridError(f"N={N} is not a power of two")
    if not t_min > 0:
        raise GridError("t_min must be positive")
    if not t_max > t_min:
        raise GridError("need t_min < t_max")
    if not (c0 > 1 and c1 > 0):
        raise GridError("Whitney constants need c0 > 1, c1 > 0")
    if K == 1:
        t = np.array([np.sqrt(t_min * t_max)])
        w = t * np.log(t_max / t_min)
    else:
        u = np.linspace(np.log(t_min), np.log(t_max), K)
        t = np.exp(u)
        du = u[1] - u[0]
        w = du * t
        w[0] *= 0.5
        w[-1] *= 0.5
    t.setflags(write=False)
    w.setflags(write=False)
    return Grid(n, m, N, float(L), t, w, float(c0), float(c1))


def nodes_for(t_min: float, t_max: float, per_decade: int) -> int:
    """Number of geometric nodes giving at least `per_decade` nodes per decade."""
    dec = np.log10(t_max / t_min)
    return int(np.ceil(dec * per_decade)) + 1


# --- Whitney regions -------------------------------------------------

class WhitneyRegion(NamedTuple):
    t_index: np.ndarray
    x_index: np.ndarray
    volume: float          # discrete measure sum(w_t) * #ball * h^n
    scale: float           # t^(1+n), the continuum normaliser
    partial: bool          # t-window clipped by the truncated range


def whitney_t_window(grid: Grid, t: float) -> np.ndarray:
    tn = grid.t_nodes
    return np.nonzero((tn > t / grid.c0) & (tn < grid.c0 * t))[0]


def whitney_ball(grid: Grid, t: float, x=None) -> np.ndarray:
    """Lattice indices within periodic distance < c1 t of x (centre always kept)."""
    if x is None:
        x = np.zeros(grid.n)
    dist = grid.periodic_distance(x)
    r = grid.c1 * t
    idx = np.nonzero(dist < r)[0]
    if idx.size == 0:
        idx = np.array([int(np.argmin(dist))])
    return idx


def whitney_region(grid: Grid, t: float, x=None, strict: bool = True) -> WhitneyRegion:
    """Index set of nodes in (t/c0, c0 t) x B(x, c1 t).

    With strict=True a ball that resolves no neighbour of the centre raises
    CoarseWhitneyError; with strict=False it degenerates to the centre column.
    """
    if x is None:
        x = np.zeros(grid.n)
    if strict and grid.c1 * t <= grid.h:
        raise CoarseWhitneyError(f"coarse Whitney region: c1*t={grid.c1 * t:.3g} <= h={grid.h:.3g}")
    ti = whitney_t_window(grid, t)
    if ti.size == 0:
        raise CoarseWhitneyError(f"no t-nodes in ({t / grid.c0:.3g}, {grid.c0 * t:.3g})")
    xi = whitney_ball(grid, t, x)
    vol = float(grid.t_weights[ti].sum()) * xi.size * grid.cell
    partial = bool(t / grid.c0 < grid.t_nodes[0] or grid.c0 * t > grid.t_nodes[-1])
    return WhitneyRegion(ti, xi, vol, t ** (1 + grid.n), partial)


# --- dyadic cubes ----------------------------------------------------

@dataclass(frozen=True)
class DyadicCube:
    level: int
    corner: tuple
    side: float

    def indices(self, grid: Grid) -> np.ndarray:
        """Flattened lattice indices covered by the cube."""
        w = grid.N >> self.level
        axes = [np.arange(c * w, (c + 1) * w) for c in self.corner]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.ravel_multi_index(tuple(g.ravel() for g in mesh), grid.shape)


def dyadic_cubes(grid: Grid, max_level: int | None = None) -> list[DyadicCube]:
    top = int(np.log2(grid.N))
    if max_level is None:
        max_level = top
    if max_level > top:
        raise GridError(f"max_level {max_level} exceeds log2(N)={top}")
    out = []
    for lev in range(max_level + 1):
        k = 2 ** lev
        for corner in np.ndindex(*([k] * grid.n)):
            out.append(DyadicCube(lev, tuple(int(c) for c in corner), grid.L / k))
    return out


# --- inner products ---------------------------------------------------

def inner(grid: Grid, f, g) -> complex:
    """Discrete L2 inner product, conjugate-linear in the second slot."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise GridError(f"shape mismatch {f.shape} vs {g.shape}")
    return complex(np.vdot(g, f) * grid.cell)


def l2_norm(grid: Grid, f) -> float:
    f = np.asarray(f)
    return float(np.sqrt(np.sum(np.abs(f) ** 2) * grid.cell))


def slice_norms(grid: Grid, f) -> np.ndarray:
    """Per-slice L2 norms of a bulk (..., K, P, d) field."""
    f = np.asarray(f)
    return np.sqrt(np.sum(np.abs(f) ** 2, axis=(-1, -2)) * grid.cell)


# --- field containers -------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.grid.check_boundary(self.values)
        if not np.all(np.isfinite(self.values)):
            raise GridError("non-finite boundary field")

    @property
    def normal(self):
        return self.values[:, :self.grid.m]

    @property
    def tangential(self):
        return self.values[:, self.grid.m:]


@dataclass(frozen=True, eq=False)
class BulkField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.grid.check_bulk(self.values)

    def slice(self, k: int) -> BoundaryField:
        return BoundaryField(self.grid, self.values[k])

    @property
    def normal(self):
        return self.values[..., :self.grid.m]

    @property
    def tangential(self):
        return self.values[..., self.grid.m:]
