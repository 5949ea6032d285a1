import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdbvp.grid import (BulkField, CoarseWhitneyError, GridError, dyadic_cubes, inner, l2_norm,
                        make_grid, nodes_for, slice_norms, whitney_region)


def test_geometric_nodes():
    g = make_grid(1, 1, 8, 2 * np.pi, 2.0 ** -4, 2.0 ** 4, 9)
    assert np.allclose(g.t_nodes, 2.0 ** np.arange(-4, 5), rtol=1e-14)
    assert g.P == 8 and g.d == 2 and g.K == 9


def test_single_slice():
    g = make_grid(1, 1, 8, 1.0, 0.5, 2.0, 1)
    assert g.K == 1
    assert g.t_nodes[0] == pytest.approx(1.0)
    assert g.t_weights[0] == pytest.approx(np.log(4.0))


@pytest.mark.parametrize("kw", [dict(N=12), dict(t_min=0.0), dict(t_min=-1.0), dict(c0=1.0), dict(c1=0.0),
                                dict(t_max=0.01)])
def test_rejects_bad_parameters(kw):
    args = dict(n=1, m=1, N=8, L=1.0, t_min=0.1, t_max=10.0, K=5)
    args.update(kw)
    with pytest.raises(GridError):
        make_grid(**args)


def test_log_weights_exact():
    g = make_grid(1, 1, 8, 1.0, 1e-3, 1e3, 37)
    assert np.sum(g.t_weights / g.t_nodes) == pytest.approx(np.log(1e6), rel=1e-13)


@pytest.mark.parametrize("p", [-1, 0, 1])
def test_power_quadrature(p):
    t0, t1 = 2.0 ** -6, 2.0 ** 6
    g = make_grid(1, 1, 8, 1.0, t0, t1, nodes_for(t0, t1, 33))
    exact = np.log(t1 / t0) if p == -1 else (t1 ** (p + 1) - t0 ** (p + 1)) / (p + 1)
    assert np.sum(g.t_weights * g.t_nodes ** p) == pytest.approx(exact, rel=0.01)


def test_whitney_window():
    g = make_grid(1, 1, 64, 2 * np.pi, 2.0 ** -6, 2.0 ** 6, 49)
    t = g.t_nodes[24]
    reg = whitney_region(g, t)
    tw = g.t_nodes[reg.t_index]
    assert np.all((tw > t / 2) & (tw < 2 * t))
    assert reg.scale == pytest.approx(t ** 2)
    with pytest.raises(CoarseWhitneyError, match="coarse Whitney region"):
        whitney_region(g, g.h / 2)


def test_whitney_ball_grows_like_t():
    g = make_grid(1, 1, 256, 2 * np.pi, 2.0 ** -6, 2.0 ** 2, 33)
    counts = [whitney_region(g, t).x_index.size for t in (0.2, 0.4, 0.8)]
    # 2 c1 t / h lattice points, up to one point of rounding
    for t, c in zip((0.2, 0.4, 0.8), counts):
        assert abs(c - 2 * t / g.h) <= 1.5


@pytest.mark.parametrize("n", [1, 2])
def test_dyadic_cubes(n):
    g = make_grid(n, 1, 8, 3.0, 0.1, 10.0, 5)
    cubes = dyadic_cubes(g, 3)
    assert len(cubes) == sum((2 ** j) ** n for j in range(4))
    assert cubes[0].side == 3.0
    for lev in range(4):
        idx = np.concatenate([c.indices(g) for c in cubes if c.level == lev])
        assert np.array_equal(np.sort(idx), np.arange(g.P))
    with pytest.raises(GridError):
        dyadic_cubes(g, 4)


def test_norms_and_parseval():
    g = make_grid(1, 1, 16, 3.0, 0.1, 10.0, 5)
    c = 2.0 - 1.0j
    f = np.zeros((g.P, g.d), complex)
    f[:, 0] = c
    # |c| * sqrt(L) per component: the discrete sum is exact
    assert l2_norm(g, f) == pytest.approx(abs(c) * np.sqrt(3.0), rel=1e-14)
    assert l2_norm(g, np.zeros_like(f)) == 0.0
    rng = np.random.default_rng(0)
    u = rng.standard_normal((g.P, g.d)) + 1j * rng.standard_normal((g.P, g.d))
    assert np.linalg.norm(g.fft(u)) == pytest.approx(np.linalg.norm(u), rel=1e-12)
    assert np.allclose(g.ifft(g.fft(u)), u, atol=1e-13)
    v = rng.standard_normal((g.P, g.d)) + 0j
    assert inner(g, 1j * u, v) == pytest.approx(1j * inner(g, u, v))
    assert inner(g, u, 1j * v) == pytest.approx(-1j * inner(g, u, v))
    with pytest.raises(GridError):
        inner(g, u, v[:3])


def test_field_wrappers():
    g = make_grid(2, 2, 4, 1.0, 0.1, 10.0, 3)
    f = np.arange(g.K * g.P * g.d, dtype=complex).reshape(g.K, g.P, g.d)
    F = BulkField(g, f)
    assert F.slice(1).normal.shape == (g.P, 2)
    assert F.tangential.shape == (g.K, g.P, 4)
    assert slice_norms(g, f).shape == (g.K,)


@settings(max_examples=25, deadline=None)
@given(k=st.integers(2, 40), lo=st.floats(1e-4, 1.0), span=st.floats(1.5, 1e4))
def test_weights_positive_and_nodes_increasing(k, lo, span):
    g = make_grid(1, 1, 4, 1.0, lo, lo * span, k)
    assert np.all(np.diff(g.t_nodes) > 0) and np.all(g.t_weights > 0)
    assert g.t_nodes[0] == pytest.approx(lo) and g.t_nodes[-1] == pytest.approx(lo * span)
