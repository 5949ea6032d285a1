import numpy as np
import pytest

from hdbvp import coefficients as co
from hdbvp.grid import GridError


def test_hat_identity(g12):
    A = co.identity(g12)
    assert np.allclose(co.hat_transform(A).slice0, np.eye(g12.d))


def test_hat_worked_example():
    A = np.array([[2.0, 1.0], [0.0, 1.0]])
    assert np.allclose(co.hat_matrices(A, 1), [[0.5, -0.5], [0.0, 1.0]], atol=1e-15)


@pytest.mark.parametrize("gen", ["hermitean", "accretive", "block"])
def test_hat_involution(g2, gen):
    A = {"hermitean": co.hermitean_random, "accretive": co.random_accretive, "block": co.block}[gen](g2, 5)
    back = co.hat_transform(co.hat_transform(A))
    assert np.max(np.abs(back.slice0 - A.slice0)) <= 1e-12


def test_hat_pair_inverse(g12, rng):
    A = co.random_accretive(g12, 2).slice0
    g = rng.standard_normal((g12.P, g12.d)) + 1j * rng.standard_normal((g12.P, g12.d))
    f = co.hat_pair(A, g, g12.m)
    assert np.allclose(co.conormal_to_gradient(co.hat_matrices(A, g12.m), f, g12.m), g)


def test_singular_perp_block(g1):
    A = np.zeros((g1.P, 2, 2))
    A[:, 1, 1] = 1.0
    with pytest.raises(co.CoefficientError, match="singular"):
        co.hat_matrices(A, 1)


def test_accretivity_examples(g1, g2):
    assert co.identity(g2).kappa == pytest.approx(1.0)
    assert co.identity(g2).omega == pytest.approx(0.0, abs=1e-12)
    A = co.constant(g1, np.diag([2.0, 0.5]))
    assert A.kappa == pytest.approx(0.5)
    th = 0.7
    B = co.constant(g1, np.exp(1j * th) * np.eye(2))
    assert B.omega == pytest.approx(th, abs=1e-12)
    with pytest.raises(co.NotAccretiveError):
        co.require_accretive(co.constant(g1, -np.eye(2)))


def test_curl_free_compression_n2(g2):
    # a field that is large only on curl parts keeps kappa from the curl-free space
    A = co.random_accretive(g2, 3, 0.3)
    assert A.kappa > 0
    assert co.hermitean_random(g2, 3).omega == pytest.approx(0.0, abs=1e-10)


def test_generators(g12):
    H = co.hermitean_random(g12, 1).slice0
    assert np.allclose(H, np.conj(np.swapaxes(H, -1, -2)))
    Bk = co.block(g12, 1).slice0
    assert not np.any(Bk[:, :2, 2:]) and not np.any(Bk[:, 2:, :2])
    assert np.array_equal(co.hermitean_random(g12, 7).slice0, co.hermitean_random(g12, 7).slice0)


def test_pullback_flat(g1):
    A = co.hermitean_random(g1, 1)
    P = co.pullback_coefficients(A, np.zeros(g1.P), g1)
    assert np.allclose(P.slice0, A.slice0)


def test_pullback_linear_graph(g1):
    lam = 0.4
    P = co.pullback_coefficients(co.identity(g1), np.zeros(g1.P), g1, grad_phi=np.full((g1.P, 1), lam))
    assert np.allclose(P.slice0, [[1 + lam ** 2, -lam], [-lam, 1.0]])


def test_pullback_keeps_accretivity(g1):
    x = g1.coords[:, 0]
    P = co.pullback_coefficients(co.hermitean_random(g1, 2, 0.3), 0.2 * np.sin(x), g1)
    assert P.kappa > 0


def test_pullback_t_dependent(g1):
    x = g1.coords[:, 0]
    P = co.pullback_coefficients(lambda t, x: (1 + 0.1 * np.exp(-t))[..., None, None] * np.eye(2),
                                 0.2 * np.sin(x), g1)
    assert not P.t_independent


def test_trace_coefficients(g1):
    A0 = co.hermitean_random(g1, 1)
    same, fin, _ = co.trace_coefficients(A0)
    assert same is A0 and fin
    slab = co.perturb(A0, "slab", eps=0.3, t0=1.0, t1=2.0)
    got, fin, rep = co.trace_coefficients(slab)
    assert fin and np.allclose(got.slice0, A0.slice0)
    assert rep.ordering_ok
    # a constant shift is absorbed by the average
    got, fin, rep = co.trace_coefficients(co.perturb(A0, "const", eps=0.3))
    assert fin and rep.carleson == 0.0 and np.allclose(got.slice0, A0.slice0 + 0.3 * np.eye(2))
    # no limit as t -> 0: the discrepancy has a divergent Carleson norm
    osc = co.perturb(A0, "logosc", eps=0.3, t0=1.0)
    _, fin, _ = co.trace_coefficients(osc)
    assert not fin


def test_discrepancy(g1):
    A = co.hermitean_random(g1, 1)
    B = co.hat_transform(A)
    E = co.discrepancy(B, B)
    assert E.is_zero and E.sup_norm == 0.0 and E.carleson_norm == 0.0
    with pytest.raises(co.CoefficientError):
        co.discrepancy(B, co.hat_transform(co.perturb(A, "slab", eps=0.1)))


def test_profiles(g1):
    t = g1.t_nodes
    assert np.all(co.t_profile("ramp", t, 1.0) < 1) and co.t_profile("bump", 1.0, 1.0) == 0.5
    with pytest.raises(co.CoefficientError):
        co.t_profile("nope", t)
    with pytest.raises(GridError):
        co.CoefficientField(g1, np.zeros((3, 2, 2)))
    with pytest.raises(co.CoefficientError):
        co.CoefficientField(g1, np.full((g1.P, 2, 2), np.nan))


def test_t_derivative(g1):
    A = co.perturb(co.identity(g1), "ramp", eps=0.5, t0=1.0)
    dA = A.t_derivative()
    assert dA.shape == A.entries.shape and np.max(np.abs(dA)) > 0
    assert not np.any(co.identity(g1).t_derivative())
