import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from archcma.numerics import (
    NumericalError,
    is_symmetric,
    jacobi_eig,
    mahalanobis_sq,
    normal_order_statistic_mean,
    solve_spd,
    sym_eig,
    sym_sqrt,
)


def random_spd(rng, n, log_cond=4.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = 10.0 ** rng.uniform(0, log_cond, n)
    M = (Q * w) @ Q.T
    return 0.5 * (M + M.T)


@pytest.mark.parametrize("eig", [sym_eig, jacobi_eig])
def test_eig_examples(eig):
    w, V = eig(np.eye(3))
    np.testing.assert_allclose(w, [1, 1, 1])
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)

    w, V = eig(np.diag([4.0, 9.0]))
    np.testing.assert_allclose(w, [4, 9])
    np.testing.assert_allclose(np.abs(V), np.eye(2), atol=1e-12)

    w, _ = eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(w, [1, 3], atol=1e-14)


def test_sym_eig_matches_jacobi_reference():
    rng = np.random.default_rng(0)
    for n in (2, 5, 12, 30):
        M = random_spd(rng, n) - 50.0 * np.eye(n)  # indefinite is fine for eig
        w, V = sym_eig(M)
        wj, Vj = jacobi_eig(M)
        np.testing.assert_allclose(w, wj, rtol=1e-10, atol=1e-10 * np.abs(w).max())
        np.testing.assert_allclose(M @ V, V * w, atol=1e-9 * np.abs(w).max())
        np.testing.assert_allclose(M @ Vj, Vj * wj, atol=1e-9 * np.abs(w).max())
        np.testing.assert_allclose(Vj.T @ Vj, np.eye(n), atol=1e-10)
        assert np.all(np.diff(w) >= 0)


def test_jacobi_sweep_cap():
    M = np.array([[1.0, 2.0, 3.0], [2.0, 5.0, 4.0], [3.0, 4.0, 9.0]])
    with pytest.raises(NumericalError, match="off-diagonal norm"):
        jacobi_eig(M, max_sweeps=1)


def test_sym_sqrt_examples():
    np.testing.assert_allclose(sym_sqrt(np.eye(4)), np.eye(4))
    np.testing.assert_allclose(sym_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    r3 = math.sqrt(3)
    expected = np.array([[r3 + 1, r3 - 1], [r3 - 1, r3 + 1]]) / 2
    np.testing.assert_allclose(sym_sqrt(np.array([[2.0, 1.0], [1.0, 2.0]])), expected, atol=1e-14)


def test_sym_sqrt_rejects_indefinite():
    with pytest.raises(NumericalError, match=r"smallest eigenvalue -1"):
        sym_sqrt(np.diag([1.0, -1.0]))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 20), log_cond=st.floats(0, 8))
def test_sym_sqrt_reconstructs(seed, n, log_cond):
    M = random_spd(np.random.default_rng(seed), n, log_cond)
    R = sym_sqrt(M)
    assert is_symmetric(R)
    assert np.linalg.norm(R @ R - M) <= 1e-9 * np.linalg.norm(M)


def test_solve_spd_examples():
    np.testing.assert_allclose(solve_spd(np.eye(2), [3.0, 4.0]), [3, 4])
    np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), [2.0, 4.0]), [1, 1])
    np.testing.assert_allclose(solve_spd([[2.0, 1.0], [1.0, 2.0]], [3.0, 3.0]), [1, 1])
    with pytest.raises(NumericalError):
        solve_spd(np.diag([1.0, 0.0]), [1.0, 1.0])


def test_solve_spd_residual():
    rng = np.random.default_rng(1)
    M = random_spd(rng, 10, 6)
    v = rng.standard_normal(10)
    x = solve_spd(M, v)
    assert np.linalg.norm(M @ x - v) <= 1e-9 * np.linalg.norm(v) * np.linalg.cond(M) ** 0.5


def test_mahalanobis_examples():
    assert mahalanobis_sq([1.0, 2.0], [1.0, 2.0], np.eye(2)) == 0.0
    assert mahalanobis_sq([1.0, 0.0], [0.0, 0.0], np.eye(2)) == 1.0
    assert mahalanobis_sq([2.0, 1.0], [0.0, 0.0], np.diag([4.0, 1.0])) == pytest.approx(2.0)
    assert mahalanobis_sq([2.0, 1.0], [0.0, 0.0], lambda d: d / np.array([4.0, 1.0])) == pytest.approx(2.0)
    with pytest.raises(ValueError, match="dimension"):
        mahalanobis_sq([1.0], [1.0, 2.0], np.eye(2))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
def test_mahalanobis_affine_invariance(seed, n):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, n, 3)
    T = rng.standard_normal((n, n)) + 3 * np.eye(n)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    d = mahalanobis_sq(x, y, S)
    dT = mahalanobis_sq(T @ x, T @ y, T @ S @ T.T)
    assert dT == pytest.approx(d, rel=1e-8)


def _order_stat_oracle(i, lam):
    # E[X_(i)] = int x f_(i)(x) dx with the density written through the normal CDF
    mpmath.mp.dps = 30
    coef = mpmath.factorial(lam) / (mpmath.factorial(i - 1) * mpmath.factorial(lam - i))
    Phi = lambda x: mpmath.ncdf(x)
    phi = lambda x: mpmath.npdf(x)
    integrand = lambda x: x * coef * Phi(x) ** (i - 1) * (1 - Phi(x)) ** (lam - i) * phi(x)
    return float(mpmath.quad(integrand, [-mpmath.inf, 0, mpmath.inf]))


def test_order_statistic_examples():
    assert normal_order_statistic_mean(1, 1) == pytest.approx(0.0, abs=1e-12)
    assert normal_order_statistic_mean(1, 2) == pytest.approx(-1 / math.sqrt(math.pi), abs=1e-9)
    assert normal_order_statistic_mean(1, 3) == pytest.approx(-3 / (2 * math.sqrt(math.pi)), abs=1e-9)
    with pytest.raises(ValueError):
        normal_order_statistic_mean(0, 3)
    with pytest.raises(ValueError):
        normal_order_statistic_mean(4, 3)


@pytest.mark.parametrize("i,lam", [(1, 12), (3, 12), (6, 12), (1, 15), (7, 15), (1, 64), (20, 64)])
def test_order_statistic_against_mpmath(i, lam):
    assert normal_order_statistic_mean(i, lam) == pytest.approx(_order_stat_oracle(i, lam), abs=1e-6)


@pytest.mark.parametrize("lam", [2, 5, 12, 33, 64])
def test_order_statistics_sum_to_zero(lam):
    values = [normal_order_statistic_mean(i, lam) for i in range(1, lam + 1)]
    assert abs(sum(values)) <= 1e-5
    assert values == sorted(values)
    # symmetry of the normal distribution
    np.testing.assert_allclose(values, [-v for v in reversed(values)], atol=1e-8)
