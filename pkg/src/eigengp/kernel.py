"""ARD squared-exponential covariance and its partial derivatives.

k(x, x') = a0 * exp(-sum_d eta_d * (x_d - x'_d)^2)

eta_d are the per-dimension coefficients exactly as they appear in the
exponent; eta_d = 0 prunes dimension d and is legal input. Positivity of
a0/eta during optimization is the optimizer's job (log transform), not
enforced here beyond basic validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import DimensionMismatch


@dataclass(frozen=True)
class KernelParams:
    a0: float
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float).ravel())
        if self.a0 <= 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if np.any(self.eta < 0):
            raise ValueError("eta entries must be nonnegative")

    @property
    def dim(self) -> int:
        return self.eta.shape[0]


def _as_2d(X, d, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != d:
        raise DimensionMismatch(f"{name} must have {d} columns, got shape {X.shape}")
    return X


def kernel_matrix(X1, X2, p: KernelParams) -> np.ndarray:
    """Cross-covariance matrix, entry (i, j) = k(X1[i], X2[j])."""
    X1 = _as_2d(X1, p.dim, "X1")
    X2 = _as_2d(X2, p.dim, "X2")
    r = np.sqrt(p.eta)
    A = X1 * r
    B = X2 * r
    d2 = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return p.a0 * np.exp(-d2)


@dataclass
class KernelGradBundle:
    """Kernel matrix K = k(X, B) together with its analytic partials.

    d_a0          = K / a0
    d_eta(d)      = -K * (X_d - B_d)^2
    d_B(d)[i, j]  = dK[i, j] / dB[j, d] = 2 eta_d (X[i,d] - B[j,d]) K[i, j]
    """

    X: np.ndarray
    B: np.ndarray
    params: KernelParams
    K: np.ndarray = field(init=False)

    def __post_init__(self):
        self.X = _as_2d(self.X, self.params.dim, "X")
        self.B = _as_2d(self.B, self.params.dim, "B")
        self.K = kernel_matrix(self.X, self.B, self.params)

    def diff(self, d: int) -> np.ndarray:
        return self.X[:, d][:, None] - self.B[:, d][None, :]

    def d_a0(self) -> np.ndarray:
        return self.K / self.params.a0

    def d_eta(self, d: int) -> np.ndarray:
        return -self.K * self.diff(d) ** 2

    def d_B(self, d: int) -> np.ndarray:
        return 2.0 * self.params.eta[d] * self.diff(d) * self.K


def kernel_grads(X, B, p: KernelParams) -> KernelGradBundle:
    return KernelGradBundle(X=X, B=B, params=p)
