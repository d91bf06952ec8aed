"""Reference methods: exact full GP (dense, small N), the plain Nystrom
low-rank GP predictor, k-means basis initialization, and the subset-GP
initialization of kernel hyperparameters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .eigenbasis import AllEigenvaluesDegenerate, build_basis, default_weights
from .kernel import KernelParams, _as_2d, kernel_matrix
from .linalg import chol_psd, default_jitter
from .model import HyperParams, PredictiveDistribution
from .optimizer import OptOptions, minimize_cg


class SizeGuardExceeded(Exception):
    pass


class SubsetTooSmall(Exception):
    pass


@dataclass(frozen=True)
class FullGpModel:
    kernel: KernelParams
    sigma2: float
    X: np.ndarray
    chol_lower: np.ndarray   # factor of K_XX + sigma2 I
    alpha: np.ndarray
    log_evidence: float


def full_gp_evidence_and_grad(kernel: KernelParams, sigma2: float, X, y):
    """Exact GP log evidence and gradients w.r.t. (a0, eta, sigma2).

    Dense O(N^3); intended for small N (initialization and baselines).
    """
    X = _as_2d(X, kernel.dim, "X")
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    K = kernel_matrix(X, X, kernel)
    C = K + sigma2 * np.eye(n)
    L = chol_psd(C, default_jitter(C)).lower
    alpha = solve_triangular(L.T, solve_triangular(L, y, lower=True), lower=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    value = -0.5 * (logdet + float(y @ alpha) + n * math.log(2.0 * math.pi))

    Linv = solve_triangular(L, np.eye(n), lower=True)
    Cinv = Linv.T @ Linv
    T = Cinv - np.outer(alpha, alpha)
    d_a0 = -0.5 * float(np.sum(T * K)) / kernel.a0
    d_eta = np.zeros(kernel.dim)
    for d in range(kernel.dim):
        diff2 = (X[:, d][:, None] - X[:, d][None, :]) ** 2
        d_eta[d] = 0.5 * float(np.sum(T * K * diff2))
    d_sigma2 = -0.5 * float(np.trace(T))
    return value, {"a0": d_a0, "eta": d_eta, "sigma2": d_sigma2}, (L, alpha)


def full_gp_train(X, y, init: KernelParams, sigma2_init: float,
                  opts: OptOptions = OptOptions(), max_n: int = 5000) -> FullGpModel:
    """Optimize exact-GP hyperparameters by CG on the log evidence."""
    X = _as_2d(X, init.dim, "X")
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if n > max_n:
        raise SizeGuardExceeded(f"N={n} exceeds the dense-GP guard {max_n}")

    eta_active = np.flatnonzero(init.eta > 0)
    floor = 1e-8 * max(float(np.var(y)), 1e-12)

    def unpack(x):
        a0 = math.exp(x[0])
        eta = init.eta.copy()
        eta[eta_active] = np.exp(x[1:1 + eta_active.size])
        sigma2 = max(math.exp(x[-1]), floor)
        return KernelParams(a0=a0, eta=eta), sigma2

    def objective(x):
        p, s2 = unpack(x)
        value, grads, _ = full_gp_evidence_and_grad(p, s2, X, y)
        g = np.concatenate((
            [p.a0 * grads["a0"]],
            p.eta[eta_active] * grads["eta"][eta_active],
            [s2 * grads["sigma2"]],
        ))
        return -value, -g

    x0 = np.concatenate((
        [math.log(init.a0)],
        np.log(init.eta[eta_active]),
        [math.log(max(sigma2_init, floor))],
    ))
    x_final, _ = minimize_cg(objective, x0, opts)
    p, s2 = unpack(x_final)
    value, _, (L, alpha) = full_gp_evidence_and_grad(p, s2, X, y)
    return FullGpModel(kernel=p, sigma2=s2, X=X, chol_lower=L, alpha=alpha,
                       log_evidence=value)


def full_gp_fit(X, y, kernel: KernelParams, sigma2: float,
                max_n: int = 5000) -> FullGpModel:
    """Build the dense-GP predictor at fixed hyperparameters."""
    X = _as_2d(X, kernel.dim, "X")
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] > max_n:
        raise SizeGuardExceeded(f"N={X.shape[0]} exceeds the dense-GP guard {max_n}")
    value, _, (L, alpha) = full_gp_evidence_and_grad(kernel, sigma2, X, y)
    return FullGpModel(kernel=kernel, sigma2=sigma2, X=X, chol_lower=L,
                       alpha=alpha, log_evidence=value)


def full_gp_predict(m: FullGpModel, Xstar) -> PredictiveDistribution:
    Kstar = kernel_matrix(_as_2d(Xstar, m.kernel.dim, "Xstar"), m.X, m.kernel)
    mean = Kstar @ m.alpha
    V = solve_triangular(m.chol_lower, Kstar.T, lower=True)
    var = m.kernel.a0 - np.einsum("ij,ij->j", V, V) + m.sigma2
    return PredictiveDistribution(mean=mean, variance=var)


def nystrom_gp_predict(X, y, B, p: KernelParams, sigma2: float, Xstar):
    """GP prediction with every kernel block replaced by its Nystrom
    approximation through B.

    Returns (PredictiveDistribution with clamped variance, raw_variance,
    negative_flags). The raw latent variance can dip negative when K_BB is
    ill-conditioned; it is clamped at 1e-12 (plus noise) and flagged.
    """
    X = _as_2d(X, p.dim, "X")
    Xstar = _as_2d(Xstar, p.dim, "Xstar")
    y = np.asarray(y, dtype=float).ravel()
    K_XB = kernel_matrix(X, B, p)
    K_sB = kernel_matrix(Xstar, B, p)
    K_BB = kernel_matrix(B, B, p)
    L = chol_psd(K_BB, default_jitter(K_BB)).lower
    Phi = solve_triangular(L, K_XB.T, lower=True).T     # K_XB L^{-T}
    Phi_s = solve_triangular(L, K_sB.T, lower=True).T

    # (Phi Phi^T + sigma2 I)^{-1} through the m x m core
    m = Phi.shape[1]
    core = sigma2 * np.eye(m) + Phi.T @ Phi
    Lc = chol_psd(core, default_jitter(core)).lower

    def solve_c(Bmat):
        inner = solve_triangular(
            Lc.T, solve_triangular(Lc, Phi.T @ Bmat, lower=True), lower=False
        )
        return (Bmat - Phi @ inner) / sigma2

    alpha = solve_c(y)
    mean = Phi_s @ (Phi.T @ alpha)
    G = Phi.T @ solve_c(Phi)                            # m x m
    q_star = np.einsum("ij,ij->i", Phi_s, Phi_s)
    quad = np.einsum("ij,jk,ik->i", Phi_s, G, Phi_s)
    raw_latent = q_star - quad
    negative = raw_latent < 0
    raw_variance = raw_latent + sigma2
    clamped = np.maximum(raw_latent, 1e-12) + sigma2
    return (
        PredictiveDistribution(mean=mean, variance=clamped),
        raw_variance,
        negative,
    )


def kmeans(X, M: int, seed: int = 0, max_iters: int = 100) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; deterministic per seed.

    Empty clusters are re-seeded from the points farthest from their
    assigned centers.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if M > n:
        raise ValueError(f"M={M} exceeds the number of points {n}")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((M, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, M):
        total = d2.sum()
        if total <= 0:
            centers[k] = X[rng.integers(n)]
        else:
            centers[k] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - centers[k]) ** 2, axis=1))

    for _ in range(max_iters):
        dist = (
            np.sum(X * X, axis=1)[:, None]
            - 2.0 * X @ centers.T
            + np.sum(centers * centers, axis=1)[None, :]
        )
        labels = np.argmin(dist, axis=1)
        new_centers = centers.copy()
        for k in range(M):
            mask = labels == k
            if np.any(mask):
                new_centers[k] = X[mask].mean(axis=0)
        # re-seed empty clusters from the farthest points
        empty = [k for k in range(M) if not np.any(labels == k)]
        if empty:
            far = np.argsort(dist[np.arange(n), labels])[::-1]
            for j, k in enumerate(empty):
                new_centers[k] = X[far[j % n]]
        if np.array_equal(new_centers, centers):
            break
        centers = new_centers
    return centers


def roughness_weighted_centers(X, y, M: int, seed: int = 0,
                               neighbors: int = 5,
                               max_points: int = 2000) -> np.ndarray:
    """Sample M inducing points weighted by the local variation of y.

    Each training input gets a score equal to the mean |dy|/|dx| over its
    nearest neighbors, and M inputs are drawn without replacement with
    probability proportional to that score.  This concentrates basis points
    where the target changes fastest, which is where a small eigenfunction
    basis needs resolution.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if M > n:
        raise ValueError(f"M={M} exceeds the number of points {n}")
    rng = np.random.default_rng(seed)
    if n > max_points:
        pool = rng.choice(n, size=max_points, replace=False)
    else:
        pool = np.arange(n)
    Xp, yp = X[pool], y[pool]
    m = len(pool)
    k = min(neighbors, m - 1)
    d2 = (
        np.sum(Xp * Xp, axis=1)[:, None]
        - 2.0 * Xp @ Xp.T
        + np.sum(Xp * Xp, axis=1)[None, :]
    )
    np.fill_diagonal(d2, np.inf)
    idx = np.argpartition(d2, k - 1, axis=1)[:, :k]
    rows = np.arange(m)[:, None]
    dy = np.abs(yp[idx] - yp[:, None])
    dx = np.sqrt(np.maximum(d2[rows, idx], 0.0)) + 1e-12
    scores = (dy / dx).mean(axis=1)
    total = scores.sum()
    if not np.isfinite(total) or total <= 0:
        chosen = rng.choice(m, size=M, replace=False)
    else:
        chosen = rng.choice(m, size=M, replace=False, p=scores / total)
    return Xp[chosen].copy()


def init_pool(X, y, M: int, seed: int = 0,
              eta_scalings=(1.0, 10.0, 100.0),
              include_subset_gp: bool = True,
              opts: OptOptions = OptOptions()):
    """Starting points for multi-start evidence maximization.

    Combines k-means and roughness-weighted inducing-point layouts with a
    few lengthscale-precision scalings around the 1/(2 std^2) heuristic,
    plus (optionally) the subset-GP initialization.  Returns a list of
    HyperParams; callers pick the best final evidence (train_restarts).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    vy = max(float(np.var(y)), 1e-12)
    std = np.std(X, axis=0)
    std[std == 0] = 1.0
    eta_base = 1.0 / (2.0 * std**2)

    layouts = [
        kmeans(X, M, seed),
        kmeans(X, M, seed + 101),
        roughness_weighted_centers(X, y, M, seed),
        roughness_weighted_centers(X, y, M, seed + 101),
    ]
    pool = []
    for B in layouts:
        for s in eta_scalings:
            p = KernelParams(a0=vy, eta=s * eta_base)
            try:
                basis = build_basis(B, p)
            except AllEigenvaluesDegenerate:
                continue
            pool.append(HyperParams(kernel=p, B=B,
                                    w=default_weights(basis),
                                    sigma2=0.5 * vy))
    if include_subset_gp:
        try:
            kern, sigma2 = subset_gp_init(X, y, seed=seed, opts=opts)
            basis = build_basis(layouts[0], kern)
            pool.append(HyperParams(kernel=kern, B=layouts[0],
                                    w=default_weights(basis), sigma2=sigma2))
        except (SubsetTooSmall, AllEigenvaluesDegenerate):
            pass
    return pool


def subset_gp_init(X, y, fraction: float = 0.1, seed: int = 0,
                   opts: OptOptions = OptOptions()):
    """Learn (kernel, sigma2) from a full GP on a random data subset."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    size = int(round(fraction * n))
    if size < 10:
        raise SubsetTooSmall(
            f"subset of {size} points is too small (need at least 10)"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=size, replace=False)
    Xs, ys = X[idx], y[idx]

    std = np.std(Xs, axis=0)
    std[std == 0] = 1.0
    init = KernelParams(
        a0=max(float(np.var(ys)), 1e-6),
        eta=1.0 / (2.0 * std**2),
    )
    sigma2_init = max(0.1 * float(np.var(ys)), 1e-6)
    m = full_gp_train(Xs, ys, init, sigma2_init, opts)
    return m.kernel, m.sigma2
