import numpy as np
import pytest

from eigengp.eigenbasis import build_basis, default_weights, eval_phi
from eigengp.kernel import KernelParams, kernel_matrix
from eigengp.model import (
    HyperParams,
    ModelVariant,
    fit,
    ktilde,
    load_model,
    model_from_dict,
    model_to_dict,
    noise_diagonal,
    posterior_alpha,
    predict,
    save_model,
)


def make_instance(seed=0, n=30, m=5, d=2):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, d))
    B = X[rng.choice(n, m, replace=False)]
    p = KernelParams(a0=1.2, eta=np.full(d, 0.9))
    basis = build_basis(B, p)
    w = 0.7 * default_weights(basis)
    theta = HyperParams(kernel=p, B=B, w=w, sigma2=0.1)
    y = np.sin(X[:, 0]) + 0.1 * rng.standard_normal(n)
    return X, y, theta, basis


def dense_cov(X, theta, basis, variant):
    Phi = eval_phi(basis, X)
    s = noise_diagonal(Phi, theta, variant)
    return (Phi * theta.w) @ Phi.T + np.diag(s), Phi, s


@pytest.mark.parametrize("variant", [ModelVariant.FINITE, ModelVariant.PLUS])
def test_predict_matches_dense_oracle(variant):
    X, y, theta, basis = make_instance()
    C, Phi, s = dense_cov(X, theta, basis, variant)
    rng = np.random.default_rng(1)
    Xs = rng.uniform(-2, 2, size=(12, 2))

    m = fit(X, y, theta, variant=variant)
    pred = predict(m, Xs)

    Kts = ktilde(Xs, X, basis, theta.w)
    mean_oracle = Kts @ np.linalg.solve(C, y)
    if variant is ModelVariant.FINITE:
        prior = np.diag(ktilde(Xs, Xs, basis, theta.w))
    else:
        prior = np.full(12, theta.kernel.a0)
    var_oracle = prior - np.einsum(
        "ij,ij->i", Kts, np.linalg.solve(C, Kts.T).T) + theta.sigma2

    assert np.allclose(pred.mean, mean_oracle, atol=1e-9)
    assert np.allclose(pred.variance, var_oracle, atol=1e-9)


def test_log_evidence_matches_dense():
    X, y, theta, basis = make_instance(seed=2)
    C, _, _ = dense_cov(X, theta, basis, ModelVariant.FINITE)
    m = fit(X, y, theta)
    n = len(y)
    oracle = -0.5 * (np.linalg.slogdet(C)[1]
                     + y @ np.linalg.solve(C, y)
                     + n * np.log(2 * np.pi))
    assert np.isclose(m.log_evidence, oracle, atol=1e-9)


def test_plus_noise_diagonal_nonnegative_correction():
    X, y, theta, basis = make_instance(seed=3)
    Phi = eval_phi(basis, X)
    s = noise_diagonal(Phi, theta, ModelVariant.PLUS)
    assert np.all(s >= theta.sigma2)
    kt = np.einsum("ij,j,ij->i", Phi, theta.w, Phi)
    assert np.allclose(s, theta.sigma2 + np.maximum(theta.kernel.a0 - kt, 0.0))


def test_plus_variance_tends_to_prior_far_away():
    X, y, theta, _ = make_instance(seed=4)
    m = fit(X, y, theta, variant=ModelVariant.PLUS)
    far = np.full((3, 2), 50.0)
    pred = predict(m, far)
    assert np.allclose(pred.variance, theta.kernel.a0 + theta.sigma2, atol=1e-8)


def test_posterior_alpha_reconstructs_mean():
    X, y, theta, basis = make_instance(seed=5)
    m = fit(X, y, theta)
    post = posterior_alpha(m)
    Xs = np.random.default_rng(6).uniform(-2, 2, size=(8, 2))
    pred = predict(m, Xs)
    assert np.allclose(eval_phi(basis, Xs) @ post.mean, pred.mean, atol=1e-9)
    # covariance is symmetric PSD
    assert np.allclose(post.covariance, post.covariance.T)
    assert np.min(np.linalg.eigvalsh(post.covariance)) > -1e-10


def test_serialization_roundtrip(tmp_path):
    X, y, theta, _ = make_instance(seed=7)
    m = fit(X, y, theta, variant=ModelVariant.PLUS)
    doc = model_to_dict(m)
    m2 = model_from_dict(doc, X, y)
    Xs = np.random.default_rng(8).uniform(-2, 2, size=(10, 2))
    p1, p2 = predict(m, Xs), predict(m2, Xs)
    assert np.array_equal(p1.mean, p2.mean)
    assert np.array_equal(p1.variance, p2.variance)

    path = tmp_path / "model.json"
    save_model(m, path)
    m3 = load_model(path, X, y)
    p3 = predict(m3, Xs)
    assert np.array_equal(p1.mean, p3.mean)


def test_load_with_changed_data_warns_and_refits():
    X, y, theta, _ = make_instance(seed=9)
    m = fit(X, y, theta)
    doc = model_to_dict(m)
    with pytest.warns(UserWarning, match="digest mismatch"):
        m2 = model_from_dict(doc, X, y + 1.0)
    # the rebuilt cache reflects the new targets, not the serialized ones
    oracle = fit(X, y + 1.0, m.theta, variant=m.variant)
    Xs = np.random.default_rng(10).uniform(-2, 2, size=(6, 2))
    assert np.allclose(predict(m2, Xs).mean, predict(oracle, Xs).mean,
                       atol=1e-10)


def test_hyperparams_validation():
    p = KernelParams(a0=1.0, eta=np.array([1.0]))
    B = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        HyperParams(kernel=p, B=B, w=np.array([-0.1, 0.2]), sigma2=0.1)
    with pytest.raises(ValueError):
        HyperParams(kernel=p, B=B, w=np.array([0.1, 0.2]), sigma2=0.0)
    with pytest.raises(ValueError):
        HyperParams(kernel=p, B=B, w=np.array([0.1, 0.2, 0.3]), sigma2=0.1)
