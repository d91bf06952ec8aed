"""The sparse eigenfunction GP model: prior covariance, fitting cache,
predictive distribution, and weight-space posterior.

Two variants are supported. "finite" is the plain finite linear model with
covariance ktilde(x, x') = sum_j w_j phi_j(x) phi_j(x'). "plus" adds the
diagonal correction delta(x - x') * (k(x, x) - ktilde(x, x)) so that the
prior variance at any single point is restored to a0, which keeps the
predictive variance honest far away from the data.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .eigenbasis import EigenBasis, build_basis, eval_phi
from .kernel import KernelParams, _as_2d, kernel_matrix
from .linalg import DimensionMismatch, LowRankGaussian, PsdFactor, solve_psd

MODEL_SCHEMA_VERSION = 1


class ModelVariant(Enum):
    FINITE = "finite"
    PLUS = "plus"


class VarianceClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class HyperParams:
    """Full parameter bundle: kernel, inducing points, prior variances, noise."""

    kernel: KernelParams
    B: np.ndarray
    w: np.ndarray
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "B", _as_2d(self.B, self.kernel.dim, "B"))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).ravel())
        if np.any(self.w < 0):
            raise ValueError("w entries must be nonnegative")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.w.shape[0] > self.B.shape[0]:
            raise ValueError("cannot have more basis weights than inducing points")

    @property
    def m_ind(self) -> int:
        return self.B.shape[0]

    @property
    def m_basis(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class PosteriorAlpha:
    mean: np.ndarray
    covariance: np.ndarray


def ktilde(X1, X2, basis: EigenBasis, w) -> np.ndarray:
    """Low-rank prior covariance Phi(X1) diag(w) Phi(X2)^T."""
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != basis.m_basis:
        raise DimensionMismatch("len(w) does not match basis size")
    return (eval_phi(basis, X1) * w[None, :]) @ eval_phi(basis, X2).T


def noise_diagonal(Phi: np.ndarray, theta: HyperParams, variant: ModelVariant):
    """Per-point diagonal of C_N minus the low-rank part.

    finite: sigma2 everywhere. plus: sigma2 + (a0 - ktilde(x_i, x_i)); the
    correction is clamped at zero with a warning if it goes negative
    numerically (it must be >= 0 since ktilde(x,x) <= k(x,x)).
    """
    n = Phi.shape[0]
    if variant is ModelVariant.FINITE:
        return np.full(n, theta.sigma2)
    kt_diag = np.einsum("ij,j,ij->i", Phi, theta.w, Phi)
    corr = theta.kernel.a0 - kt_diag
    if np.any(corr < -1e-8 * theta.kernel.a0):
        warnings.warn(
            "ktilde(x,x) exceeded k(x,x); clamping diagonal correction at 0",
            VarianceClampWarning,
            stacklevel=2,
        )
    return theta.sigma2 + np.maximum(corr, 0.0)


@dataclass(frozen=True)
class TrainedModel:
    theta: HyperParams
    basis: EigenBasis
    variant: ModelVariant
    alpha: np.ndarray            # C_N^{-1} y
    mean_coef: np.ndarray        # diag(w) Phi^T alpha, (m_basis,)
    cov_core: np.ndarray         # diag(w) Phi^T C_N^{-1} Phi diag(w), (m, m)
    core_factor: PsdFactor       # factor of diag(1/w) + Phi^T D^{-1} Phi
    proj_y: np.ndarray           # Phi^T D^{-1} y (active columns)
    active: np.ndarray           # indices of w > 0 columns
    phi_col_norms: np.ndarray    # training Phi column norms
    data_digest: str
    log_evidence: float


def data_digest(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=float).tobytes())
    h.update(np.ascontiguousarray(y, dtype=float).tobytes())
    return h.hexdigest()


def _align_w(theta: HyperParams, basis: EigenBasis) -> np.ndarray:
    if basis.m_basis == theta.m_basis:
        return theta.w
    if basis.m_basis < theta.m_basis:
        warnings.warn(
            "basis dropped eigenpairs; truncating w to match",
            UserWarning,
            stacklevel=3,
        )
        return theta.w[: basis.m_basis]
    raise DimensionMismatch("basis larger than w; inconsistent theta")


def fit(X, y, theta: HyperParams, variant: ModelVariant = ModelVariant.FINITE) -> TrainedModel:
    """Build the basis and low-rank cache for prediction.

    O(N M^2) time and O(N M) memory beyond the inputs; no N x N matrix.
    """
    X = _as_2d(X, theta.kernel.dim, "X")
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise DimensionMismatch("X and y must have the same nonzero row count")

    basis = build_basis(theta.B, theta.kernel, theta.m_basis)
    w = _align_w(theta, basis)
    Phi = eval_phi(basis, X)
    theta_eff = HyperParams(kernel=theta.kernel, B=theta.B, w=w, sigma2=theta.sigma2)
    s = noise_diagonal(Phi, theta_eff, variant)
    cache = LowRankGaussian(Phi, w, s, y)

    n = X.shape[0]
    value = -0.5 * (cache.logdet + float(y @ cache.alpha) + n * np.log(2.0 * np.pi))

    cinv_phi = cache.solve(Phi)
    mean_coef = w * (Phi.T @ cache.alpha)
    cov_core = (w[:, None] * (Phi.T @ cinv_phi)) * w[None, :]

    active = np.flatnonzero(w > 0)
    proj_y = Phi[:, active].T @ (y / s)
    return TrainedModel(
        theta=theta_eff,
        basis=basis,
        variant=variant,
        alpha=cache.alpha,
        mean_coef=mean_coef,
        cov_core=cov_core,
        core_factor=cache.core_factor,
        proj_y=proj_y,
        active=active,
        phi_col_norms=np.linalg.norm(Phi, axis=0),
        data_digest=data_digest(X, y),
        log_evidence=value,
    )


def predict(m: TrainedModel, Xstar) -> PredictiveDistribution:
    """Predictive mean and variance (noise included) at the rows of Xstar."""
    Phi_star = eval_phi(m.basis, Xstar)
    mean = Phi_star @ m.mean_coef
    q = np.einsum("ij,jk,ik->i", Phi_star, m.cov_core, Phi_star)
    if m.variant is ModelVariant.FINITE:
        prior = np.einsum("ij,j,ij->i", Phi_star, m.theta.w, Phi_star)
    else:
        prior = np.full(Phi_star.shape[0], m.theta.kernel.a0)
    var = prior - q + m.theta.sigma2
    floor = m.theta.sigma2 - 1e-10
    if np.any(var < floor):
        warnings.warn(
            "predictive variance fell below the noise floor; clamping",
            VarianceClampWarning,
            stacklevel=2,
        )
        var = np.maximum(var, floor)
    return PredictiveDistribution(mean=mean, variance=var)


def posterior_alpha(m: TrainedModel) -> PosteriorAlpha:
    """Weight-space posterior over the basis coefficients.

    Zero-w columns keep their (degenerate) prior: mean 0, variance 0.
    """
    mb = m.theta.m_basis
    mean = np.zeros(mb)
    cov = np.zeros((mb, mb))
    if m.active.size:
        cov_active = solve_psd(m.core_factor, np.eye(m.active.size))
        cov_active = 0.5 * (cov_active + cov_active.T)
        mean_active = cov_active @ m.proj_y
        mean[m.active] = mean_active
        cov[np.ix_(m.active, m.active)] = cov_active
    return PosteriorAlpha(mean=mean, covariance=cov)


# ---------------------------------------------------------------------------
# serialization

def _arr(a):
    return np.asarray(a).tolist()


def model_to_dict(m: TrainedModel) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "variant": m.variant.value,
        "theta": {
            "a0": m.theta.kernel.a0,
            "eta": _arr(m.theta.kernel.eta),
            "B": _arr(m.theta.B),
            "w": _arr(m.theta.w),
            "sigma2": m.theta.sigma2,
        },
        "basis": {
            "lam": _arr(m.basis.lam),
            "U": _arr(m.basis.U),
            "lam_full": _arr(m.basis.lam_full),
            "vecs_full": _arr(m.basis.vecs_full),
            "n_dropped": m.basis.n_dropped,
        },
        "cache": {
            "alpha": _arr(m.alpha),
            "mean_coef": _arr(m.mean_coef),
            "cov_core": _arr(m.cov_core),
            "core_lower": _arr(m.core_factor.lower) if m.core_factor else [],
            "core_jitter": m.core_factor.jitter_used if m.core_factor else 0.0,
            "proj_y": _arr(m.proj_y),
            "active": _arr(m.active),
            "phi_col_norms": _arr(m.phi_col_norms),
        },
        "data_digest": m.data_digest,
        "log_evidence": m.log_evidence,
    }


def model_from_dict(doc: dict, X=None, y=None) -> TrainedModel:
    """Rebuild a model from its JSON document.

    If training data is supplied and its digest does not match, the cache is
    rebuilt by refitting (with a warning); otherwise the stored cache is
    trusted.
    """
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported model schema version {doc.get('schema_version')!r}"
        )
    t = doc["theta"]
    theta = HyperParams(
        kernel=KernelParams(a0=t["a0"], eta=np.array(t["eta"])),
        B=np.array(t["B"]),
        w=np.array(t["w"]),
        sigma2=t["sigma2"],
    )
    variant = ModelVariant(doc["variant"])
    if X is not None and y is not None:
        if data_digest(np.atleast_2d(X), y) != doc["data_digest"]:
            warnings.warn("data digest mismatch; rebuilding cache", UserWarning)
        return fit(X, y, theta, variant)
    b = doc["basis"]
    basis = EigenBasis(
        B=theta.B,
        kernel=theta.kernel,
        lam=np.array(b["lam"]),
        U=np.array(b["U"]),
        lam_full=np.array(b["lam_full"]),
        vecs_full=np.array(b["vecs_full"]),
        n_dropped=b["n_dropped"],
    )
    c = doc["cache"]
    core_lower = np.array(c["core_lower"])
    factor = PsdFactor(lower=core_lower, jitter_used=c["core_jitter"])
    return TrainedModel(
        theta=theta,
        basis=basis,
        variant=variant,
        alpha=np.array(c["alpha"]),
        mean_coef=np.array(c["mean_coef"]),
        cov_core=np.array(c["cov_core"]),
        core_factor=factor,
        proj_y=np.array(c["proj_y"]),
        active=np.array(c["active"], dtype=int),
        phi_col_norms=np.array(c["phi_col_norms"]),
        data_digest=doc["data_digest"],
        log_evidence=doc["log_evidence"],
    )


def save_model(m: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(m), fh)


def load_model(path, X=None, y=None) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh), X=X, y=y)
