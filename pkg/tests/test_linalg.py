import numpy as np
import pytest

from eigengp.linalg import (
    FactorizationFailed,
    LowRankGaussian,
    chol_psd,
    default_jitter,
    lowrank_stats,
    solve_psd,
    sym_eig_desc,
)


def random_psd(n, seed, rank=None):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, rank or n))
    return A @ A.T


def test_chol_psd_reconstructs():
    A = random_psd(8, 0)
    F = chol_psd(A, default_jitter(A))
    assert np.allclose(F.lower @ F.lower.T, A, atol=1e-8)


def test_chol_psd_jitter_ladder_handles_singular():
    A = random_psd(10, 1, rank=3)   # rank deficient
    F = chol_psd(A, default_jitter(A))
    assert F.jitter_used >= 0
    err = np.max(np.abs(F.lower @ F.lower.T - A))
    assert err <= 1e-6 * max(np.max(np.abs(A)), 1.0)


def test_chol_psd_rejects_indefinite():
    A = np.diag([1.0, -5.0])
    with pytest.raises(FactorizationFailed):
        chol_psd(A, 1e-12)


def test_solve_psd_matches_dense_solve():
    A = random_psd(7, 2) + np.eye(7)
    b = np.random.default_rng(3).standard_normal((7, 2))
    F = chol_psd(A, 0.0)
    assert np.allclose(solve_psd(F, b), np.linalg.solve(A, b), atol=1e-10)


def test_sym_eig_desc_descending_and_reconstructs():
    A = random_psd(6, 4)
    pair = sym_eig_desc(A, 6)
    lam, V = pair.values, pair.vectors
    assert np.all(np.diff(lam) <= 1e-12)
    assert np.allclose(V @ np.diag(lam) @ V.T, A, atol=1e-9)


def test_sym_eig_desc_truncates_to_m():
    A = random_psd(8, 3)
    pair = sym_eig_desc(A, 4)
    assert pair.values.shape == (4,)
    assert pair.vectors.shape == (8, 4)
    full = sym_eig_desc(A, 8)
    assert np.allclose(pair.values, full.values[:4])


def test_sym_eig_desc_repeatable():
    A = random_psd(6, 5)
    p1 = sym_eig_desc(A, 6)
    p2 = sym_eig_desc(A.copy(), 6)
    assert np.array_equal(p1.values, p2.values)
    assert np.array_equal(p1.vectors, p2.vectors)


def test_sym_eig_desc_sign_convention():
    A = random_psd(5, 6)
    V = sym_eig_desc(A, 5).vectors
    for j in range(V.shape[1]):
        k = np.argmax(np.abs(V[:, j]))
        assert V[k, j] > 0


def dense_cov(Phi, w, s):
    return Phi @ np.diag(w) @ Phi.T + np.diag(s)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_lowrank_gaussian_matches_dense(seed):
    rng = np.random.default_rng(seed)
    n, m = 30, 5
    Phi = rng.standard_normal((n, m))
    w = rng.uniform(0.1, 2.0, m)
    s = rng.uniform(0.05, 0.5, n)
    C = dense_cov(Phi, w, s)
    y = rng.standard_normal(n)
    lr = LowRankGaussian(Phi, w, s, y)
    assert np.isclose(lr.logdet, np.linalg.slogdet(C)[1], atol=1e-9)
    assert np.allclose(lr.alpha, np.linalg.solve(C, y), atol=1e-9)
    b = rng.standard_normal(n)
    assert np.allclose(lr.solve(b), np.linalg.solve(C, b), atol=1e-9)
    assert np.allclose(lr.diag_cinv(), np.diag(np.linalg.inv(C)), atol=1e-9)


def test_lowrank_gaussian_zero_weights_dropped():
    rng = np.random.default_rng(7)
    n, m = 20, 4
    Phi = rng.standard_normal((n, m))
    w = np.array([0.5, 0.0, 1.2, 0.0])
    s = np.full(n, 0.3)
    C = dense_cov(Phi, w, s)
    b = rng.standard_normal(n)
    lr = LowRankGaussian(Phi, w, s, b)
    assert np.isclose(lr.logdet, np.linalg.slogdet(C)[1], atol=1e-9)
    assert np.allclose(lr.solve(b), np.linalg.solve(C, b), atol=1e-9)


def test_lowrank_gaussian_all_zero_w_is_diagonal():
    rng = np.random.default_rng(8)
    n = 12
    Phi = rng.standard_normal((n, 3))
    s = rng.uniform(0.2, 0.8, n)
    b = rng.standard_normal(n)
    lr = LowRankGaussian(Phi, np.zeros(3), s, b)
    assert np.isclose(lr.logdet, np.sum(np.log(s)))
    assert np.allclose(lr.solve(b), b / s)


def test_lowrank_stats_contract():
    rng = np.random.default_rng(9)
    n, m = 25, 4
    Phi = rng.standard_normal((n, m))
    w = rng.uniform(0.2, 1.5, m)
    sigma2 = 0.3
    y = rng.standard_normal(n)
    logdet, alpha, inner = lowrank_stats(Phi, w, sigma2, y)
    C = dense_cov(Phi, w, np.full(n, sigma2))
    assert np.isclose(logdet, np.linalg.slogdet(C)[1], atol=1e-9)
    assert np.allclose(alpha, np.linalg.solve(C, y), atol=1e-9)
    A = sigma2 * np.diag(1.0 / w) + Phi.T @ Phi
    assert np.allclose(inner.lower @ inner.lower.T, A, atol=1e-7)
