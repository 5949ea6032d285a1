import numpy as np
import pytest

from hdbvp import calculus as ca
from hdbvp import coefficients as co


def _B0(A):
    return co.hat_transform(A).slice0


def test_symbol_eigenvalues(g1):
    D = ca.assemble_D(g1)
    for p in (1, 3, g1.P - 2):
        ev = np.sort(np.linalg.eigvalsh(D.symbol(p)))
        assert np.allclose(ev, [-abs(g1.xi[p, 0]), abs(g1.xi[p, 0])])


def test_D_basic(g2, rng):
    f = np.ones((g2.P, g2.d), complex)
    assert np.allclose(ca.apply_D(g2, f), 0)
    u = rng.standard_normal((g2.P, g2.d)) + 1j * rng.standard_normal((g2.P, g2.d))
    v = rng.standard_normal((g2.P, g2.d)) + 1j * rng.standard_normal((g2.P, g2.d))
    assert np.vdot(v, ca.apply_D(g2, u)) == pytest.approx(np.vdot(ca.apply_D(g2, v), u), abs=1e-12)
    M = ca.assemble_D(g2).matrix()
    assert np.allclose(M, M.conj().T, atol=1e-12)


def test_project_H(g1, g2, rng):
    u = rng.standard_normal((g1.P, g1.d)) + 0j
    assert np.array_equal(ca.project_H(g1, u), u)
    # divergence-free tangential mode (-xi2, xi1) e^{i xi.x}
    p = 5
    xi = g2.xi[p]
    f = np.zeros((g2.P, g2.d), complex)
    e = np.exp(1j * g2.coords @ xi)
    f[:, 1], f[:, 2] = -xi[1] * e, xi[0] * e
    assert np.linalg.norm(ca.project_H(g2, f)) < 1e-12
    w = rng.standard_normal((g2.P, g2.d)) + 1j * rng.standard_normal((g2.P, g2.d))
    Pw = ca.project_H(g2, w)
    assert np.allclose(ca.project_H(g2, Pw), Pw, atol=1e-13)


def test_identity_spectrum(g1, rng):
    dec = ca.spectral_decompose(np.broadcast_to(np.eye(2), (g1.P, 2, 2)), g1)
    nz = g1.xi_abs[g1.xi_abs > 0]
    assert np.allclose(np.sort(np.abs(dec.lam)), np.sort(np.concatenate([nz, nz])))
    u = rng.standard_normal((g1.P, 2)) + 1j * rng.standard_normal((g1.P, 2))
    # E+- = (P_range +- D/|D|)/2 mode by mode
    Du = ca.apply_D(g1, u)
    uh = g1.fft(Du)
    xa = np.where(g1.xi_abs > 0, g1.xi_abs, 1.0)
    sgnD = g1.ifft(uh / xa[:, None])
    Pu = ca.project_range(g1, u)
    assert np.allclose(dec.E_plus(u), 0.5 * (Pu + sgnD), atol=1e-12)
    assert np.allclose(dec.E_minus(u), 0.5 * (Pu - sgnD), atol=1e-12)


def test_hermitean_real_spectrum(g12):
    # B0 itself Hermitean (the hat of a Hermitean A need not be)
    dec = ca.spectral_decompose(co.hermitean_random(g12, 4).slice0, g12)
    assert dec.omega <= 1e-8


@pytest.mark.parametrize("method", ["eig", "schur"])
def test_splitting(g12, rng, method):
    dec = ca.spectral_decompose(_B0(co.random_accretive(g12, 6, 0.4)), g12, method=method)
    u = rng.standard_normal((2, g12.P, g12.d)) + 1j * rng.standard_normal((2, g12.P, g12.d))
    assert np.allclose(dec.E_plus(u) + dec.E_minus(u), dec.P_range(u), atol=1e-10)
    assert np.linalg.norm(dec.E_plus(dec.E_minus(u))) < 1e-10
    assert ca.sector_defect(dec) <= 1e-8
    mu = np.abs(dec.mu)
    assert mu.min() >= 0.5 * g12.xi_abs[g12.xi_abs > 0].min() * 0.1


def test_eig_and_schur_agree(g12, rng):
    B0 = _B0(co.random_accretive(g12, 6, 0.4))
    de = ca.spectral_decompose(B0, g12, method="eig")
    ds = ca.spectral_decompose(B0, g12, method="schur")
    u = rng.standard_normal((g12.P, g12.d)) + 1j * rng.standard_normal((g12.P, g12.d))
    for b in (ca.chi_plus, ca.sym_abs, ca.expsym(0.3), ca.ressym(1j)):
        assert np.allclose(de.apply(b, u), ds.apply(b, u), atol=1e-10)


def test_cauchy_extension(g1):
    dec = ca.spectral_decompose(np.broadcast_to(np.eye(2), (g1.P, 2, 2)), g1)
    p = 3
    xi = g1.xi[p, 0]
    e = np.exp(1j * xi * g1.coords[:, 0])
    h = np.stack([e, np.sign(xi) * e * -1j * 1j], axis=1)
    h = dec.E_plus(h)
    f, defect = ca.cauchy_extend(dec, h, t=[0.0, 0.5, 1.0])
    assert defect < 1e-12
    assert np.allclose(f[0], h, atol=1e-12)
    ratio = np.linalg.norm(f[2]) / np.linalg.norm(f[1])
    assert ratio == pytest.approx(np.exp(-0.5 * abs(xi)), rel=1e-12)


def test_square_function(g1):
    dec = ca.spectral_decompose(np.broadcast_to(np.eye(2), (g1.P, 2, 2)), g1)
    lo, hi = ca.square_function_ratio(dec, band=2)
    assert 0.49 < lo <= hi < 0.51


def test_square_function_hermitean(g1):
    dec = ca.spectral_decompose(_B0(co.hermitean_random(g1, 2)), g1)
    lo, hi = ca.square_function_ratio(dec, band=2)
    assert 0.2 <= lo <= hi <= 0.8


def test_hatE(g2, rng):
    I = np.broadcast_to(np.eye(g2.d), (g2.P, g2.d, g2.d))
    dec = ca.spectral_decompose(I, g2)
    u = rng.standard_normal((g2.P, g2.d)) + 1j * rng.standard_normal((g2.P, g2.d))
    assert np.allclose(ca.hatE(dec, None, 1, u), dec.E_plus(ca.project_H(g2, u)), atol=1e-12)
    curl = u - ca.project_H(g2, u)
    assert np.linalg.norm(ca.hatE(dec, None, 1, curl)) < 1e-12
    B0 = _B0(co.random_accretive(g2, 3, 0.4))
    ddb = ca.spectral_decompose(B0, g2, "DB0")
    dbd = ca.spectral_decompose(B0, g2, "B0D")
    for s, b in ((1, ca.chi_plus), (-1, ca.chi_minus)):
        lhs = ca.multiply(B0, ca.hatE(ddb, dbd, s, u))
        assert np.allclose(lhs, dbd.apply(b, u), atol=1e-10)


def test_intertwining(g12):
    B0 = _B0(co.block(g12, 2, 0.4))
    ddb = ca.spectral_decompose(B0, g12, "DB0")
    dbd = ca.spectral_decompose(B0, g12, "B0D")
    assert ca.intertwine_check(ddb, dbd, [ca.sym_one]) < 1e-12
    assert ca.intertwine_check(ddb, dbd, [ca.ressym(1j)]) < 1e-9
    assert ca.intertwine_check(ddb, dbd, [ca.chi_plus]) < 1e-8


def test_dunford_cross_check(g1):
    dec = ca.spectral_decompose(_B0(co.random_accretive(g1, 8, 0.4)), g1)
    F = lambda z: z * np.exp(-z)
    G = lambda z: z / (1.0 + z) ** 2
    direct = dec.function_matrix(lambda lam: F(ca.sym_abs(lam)))
    quad = ca.dunford_quadrature(dec, F)
    assert np.linalg.norm(quad - direct) / np.linalg.norm(direct) < 1e-8
    # G decays like 1/z: the contour has to reach much further out
    wide = (-40.0, 40.0)
    prod = ca.dunford_quadrature(dec, F, s_range=wide) @ ca.dunford_quadrature(dec, G, s_range=wide)
    both = ca.dunford_quadrature(dec, lambda z: F(z) * G(z), s_range=wide)
    assert np.linalg.norm(prod - both) / np.linalg.norm(both) < 1e-8
    assert np.linalg.norm(ca.dunford_quadrature(dec, lambda z: 0 * z)) == 0


def test_resolvent_bound_finite(g1):
    dec = ca.spectral_decompose(_B0(co.hermitean_random(g1, 1)), g1)
    assert np.isfinite(ca.resolvent_bound(dec))


def test_cache(tmp_path, g1, monkeypatch):
    B0 = _B0(co.hermitean_random(g1, 1))
    monkeypatch.setenv("HDBVP_CACHE_DIR", str(tmp_path))
    a = ca.spectral_decompose(B0, g1)
    assert len(list(tmp_path.glob("decomp_*.npz"))) == 1
    b = ca.spectral_decompose(B0, g1)
    assert np.array_equal(a.lam, b.lam)


def test_rejects_bad_input(g1):
    with pytest.raises(Exception):
        ca.spectral_decompose(np.zeros((3, 2, 2)), g1)
    with pytest.raises(ValueError):
        ca.spectral_decompose(np.broadcast_to(np.eye(2), (g1.P, 2, 2)), g1, kind="nope")
    dec = ca.spectral_decompose(np.broadcast_to(np.eye(2), (g1.P, 2, 2)), g1)
    with pytest.raises(ValueError):
        dec.semigroup(-1.0, np.zeros((g1.P, 2)))
