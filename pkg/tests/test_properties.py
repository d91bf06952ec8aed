"""Property-based checks of the library's structural invariants."""

import numpy as np
from hypothesis import given, settings, strategies as st

from eigengp.eigenbasis import build_basis, default_weights, eval_phi
from eigengp.evidence import log_evidence
from eigengp.kernel import KernelParams, kernel_matrix
from eigengp.metrics import mnlp, nmse
from eigengp.model import HyperParams, ModelVariant, fit, noise_diagonal, predict

settings.register_profile("ci", max_examples=25, deadline=None)
settings.load_profile("ci")


def _instance(seed, n=20, m=4, d=2):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.5, 1.5, size=(n, d))
    B = X[rng.choice(n, m, replace=False)] + 1e-3 * rng.standard_normal((m, d))
    p = KernelParams(a0=float(rng.uniform(0.5, 2.0)),
                     eta=rng.uniform(0.3, 1.5, d))
    basis = build_basis(B, p)
    w = default_weights(basis) * rng.uniform(0.3, 1.2, basis.m_basis)
    theta = HyperParams(kernel=p, B=B, w=w, sigma2=float(rng.uniform(0.05, 0.4)))
    y = np.sin(X[:, 0]) + 0.2 * rng.standard_normal(n)
    return X, y, theta


@given(st.integers(0, 10_000), st.floats(-3, 3))
def test_kernel_stationarity(seed, shift):
    rng = np.random.default_rng(seed)
    X1 = rng.standard_normal((6, 2))
    X2 = rng.standard_normal((4, 2))
    p = KernelParams(a0=1.2, eta=np.array([0.8, 1.4]))
    K = kernel_matrix(X1, X2, p)
    K_shift = kernel_matrix(X1 + shift, X2 + shift, p)
    assert np.allclose(K, K_shift, atol=1e-10)


@given(st.integers(0, 10_000))
def test_kernel_bounded_by_a0(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((8, 3))
    p = KernelParams(a0=float(rng.uniform(0.1, 5.0)),
                     eta=rng.uniform(0.1, 2.0, 3))
    K = kernel_matrix(X, X, p)
    assert np.all(K > 0)
    assert np.all(K <= p.a0 + 1e-12)


@given(st.integers(0, 10_000))
def test_evidence_invariant_under_inducing_permutation(seed):
    X, y, theta = _instance(seed)
    rng = np.random.default_rng(seed + 1)
    perm = rng.permutation(theta.m_ind)
    # eigenvalues of K_BB do not depend on row order, so tied weights carry
    # over unchanged; permuting B must leave the evidence unchanged
    tied = HyperParams(theta.kernel, theta.B, default_weights(
        build_basis(theta.B, theta.kernel)), theta.sigma2)
    permuted = HyperParams(theta.kernel, theta.B[perm], tied.w, theta.sigma2)
    assert np.isclose(log_evidence(tied, X, y), log_evidence(permuted, X, y),
                      atol=1e-8)


@given(st.integers(0, 10_000))
def test_lowrank_prior_is_psd(seed):
    X, y, theta = _instance(seed)
    basis = build_basis(theta.B, theta.kernel)
    Phi = eval_phi(basis, X)
    Kt = (Phi * theta.w) @ Phi.T
    assert np.allclose(Kt, Kt.T, atol=1e-10)
    assert np.min(np.linalg.eigvalsh(Kt)) > -1e-8


@given(st.integers(0, 10_000))
def test_predictive_variance_bounds(seed):
    X, y, theta = _instance(seed)
    for variant in (ModelVariant.FINITE, ModelVariant.PLUS):
        m = fit(X, y, theta, variant=variant)
        rng = np.random.default_rng(seed + 2)
        Xs = rng.uniform(-3, 3, size=(10, 2))
        pred = predict(m, Xs)
        assert np.all(pred.variance >= theta.sigma2 - 1e-9)
        if variant is ModelVariant.PLUS:
            assert np.all(pred.variance <=
                          theta.kernel.a0 + theta.sigma2 + 1e-8)


@given(st.integers(0, 10_000))
def test_plus_noise_never_below_finite(seed):
    X, y, theta = _instance(seed)
    basis = build_basis(theta.B, theta.kernel)
    Phi = eval_phi(basis, X)
    s_finite = noise_diagonal(Phi, theta, ModelVariant.FINITE)
    s_plus = noise_diagonal(Phi, theta, ModelVariant.PLUS)
    assert np.all(s_plus >= s_finite - 1e-12)


@given(st.integers(0, 10_000))
def test_nmse_zero_iff_perfect_and_mnlp_shift_invariance(seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(15)
    mu = y + rng.standard_normal(15)
    var = rng.uniform(0.1, 2.0, 15)
    assert nmse(y, y, float(y.mean()) + 1.0) == 0.0
    c = float(rng.uniform(-5, 5))
    assert np.isclose(mnlp(y, mu, var), mnlp(y + c, mu + c, var), atol=1e-12)
