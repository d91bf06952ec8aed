"""Dense linear-algebra primitives: jittered Cholesky, symmetric
eigendecomposition with a deterministic sign convention, and low-rank
determinant/inverse identities for matrices of the form
Phi diag(w) Phi^T + diag(s)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular


class FactorizationFailed(Exception):
    """Raised when no jitter level makes the matrix factorizable."""


class DimensionMismatch(Exception):
    pass


class ConvergenceFailure(Exception):
    pass


class NonPositiveNoise(Exception):
    pass


@dataclass(frozen=True)
class PsdFactor:
    """Lower-triangular Cholesky factor of A + jitter_used * I."""

    lower: np.ndarray
    jitter_used: float


@dataclass(frozen=True)
class EigPair:
    """Top-m eigenpairs, eigenvalues descending, orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray


def default_jitter(A: np.ndarray) -> float:
    n = A.shape[0]
    return 1e-10 * float(np.trace(A)) / max(n, 1)


def chol_psd(A: np.ndarray, base_jitter: float = 0.0) -> PsdFactor:
    """Cholesky-factor a (nearly) PSD matrix, escalating jitter on failure.

    Tries jitter 0 first, then base_jitter * 4**k for k = 0..6. The jitter
    actually used is recorded on the returned factor.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got shape {A.shape}")
    if base_jitter < 0:
        raise ValueError("base_jitter must be >= 0")
    n = A.shape[0]
    ladder = [0.0]
    if base_jitter > 0:
        ladder.extend(base_jitter * 4.0**k for k in range(7))
    eye = np.eye(n)
    for jitter in ladder:
        try:
            L = np.linalg.cholesky(A + jitter * eye if jitter else A)
        except np.linalg.LinAlgError:
            continue
        return PsdFactor(lower=L, jitter_used=jitter)
    raise FactorizationFailed(
        f"matrix not factorizable up to jitter {ladder[-1]:.3e}"
    )


def solve_psd(F: PsdFactor, Bmat: np.ndarray) -> np.ndarray:
    """Solve (A + jitter*I) X = Bmat given the Cholesky factor of A."""
    Bmat = np.asarray(Bmat, dtype=float)
    L = F.lower
    if Bmat.shape[0] != L.shape[0]:
        raise DimensionMismatch(
            f"factor is {L.shape[0]}x{L.shape[0]}, rhs has {Bmat.shape[0]} rows"
        )
    Z = solve_triangular(L, Bmat, lower=True)
    return solve_triangular(L.T, Z, lower=False)


def sym_eig_desc(A: np.ndarray, m: int) -> EigPair:
    """Top-m eigenpairs of a symmetric matrix, descending.

    Sign convention: in each eigenvector the entry of largest absolute value
    is made positive (ties resolved at the lowest index by argmax), so the
    result is a pure function of A and m.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got shape {A.shape}")
    n = A.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    try:
        vals, vecs = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    vals = vals[::-1][:m].copy()
    vecs = vecs[:, ::-1][:, :m].copy()
    for j in range(m):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return EigPair(values=vals, vectors=vecs)


class LowRankGaussian:
    """Factored view of C = Phi diag(w) Phi^T + diag(s).

    Columns of Phi whose prior variance w_j is exactly zero are dropped
    before the M x M core is formed, so w may contain pruned entries.
    All solves against C cost O(N M^2); no N x N matrix is ever built.
    """

    def __init__(self, Phi: np.ndarray, w: np.ndarray, s: np.ndarray, y: np.ndarray):
        Phi = np.asarray(Phi, dtype=float)
        w = np.asarray(w, dtype=float).ravel()
        s = np.asarray(s, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if Phi.shape[0] != y.shape[0] or Phi.shape[0] != s.shape[0]:
            raise DimensionMismatch("Phi, s, y row counts disagree")
        if Phi.shape[1] != w.shape[0]:
            raise DimensionMismatch("Phi column count does not match len(w)")
        if np.any(w < 0):
            raise ValueError("w must be nonnegative")
        if np.any(s <= 0):
            raise NonPositiveNoise("noise diagonal must be positive")

        keep = w > 0
        self.n = Phi.shape[0]
        self.s = s
        self._phi = Phi[:, keep]
        self._w = w[keep]
        self._dinv_phi = self._phi / s[:, None]
        m = self._phi.shape[1]
        if m:
            core = np.diag(1.0 / self._w) + self._phi.T @ self._dinv_phi
            self.core_factor = chol_psd(core, default_jitter(core))
            ld_core = 2.0 * float(np.sum(np.log(np.diag(self.core_factor.lower))))
            self.logdet = ld_core + float(np.sum(np.log(self._w))) + float(
                np.sum(np.log(s))
            )
        else:
            self.core_factor = None
            self.logdet = float(np.sum(np.log(s)))
        self.alpha = self.solve(y)

    def solve(self, Bmat: np.ndarray) -> np.ndarray:
        """Apply C^{-1} to a vector or N x k matrix via the Woodbury identity."""
        Bmat = np.asarray(Bmat, dtype=float)
        vec = Bmat.ndim == 1
        B2 = Bmat[:, None] if vec else Bmat
        if B2.shape[0] != self.n:
            raise DimensionMismatch("rhs row count does not match N")
        s_col = self.s[:, None]
        out = B2 / s_col
        if self.core_factor is not None:
            out = out - self._dinv_phi @ solve_psd(
                self.core_factor, self._phi.T @ (B2 / s_col)
            )
        return out[:, 0] if vec else out

    def diag_cinv(self) -> np.ndarray:
        """Diagonal of C^{-1}."""
        d = 1.0 / self.s
        if self.core_factor is not None:
            G = solve_triangular(
                self.core_factor.lower, self._dinv_phi.T, lower=True
            ).T
            d = d - np.einsum("ij,ij->i", G, G)
        return d


def lowrank_stats(Phi, w, sigma2, y):
    """log det, C^{-1} y, and the factored M x M core for
    C = Phi diag(w) Phi^T + sigma2 * I.

    Returns (logdet, alpha, inner_factor) where inner_factor is the Cholesky
    factor of sigma2 * diag(w)^{-1} + Phi^T Phi over the active (w > 0)
    columns.
    """
    if sigma2 <= 0:
        raise NonPositiveNoise(f"sigma2 must be positive, got {sigma2}")
    Phi = np.asarray(Phi, dtype=float)
    w = np.asarray(w, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = Phi.shape[0]
    lr = LowRankGaussian(Phi, w, np.full(n, float(sigma2)), y)
    keep = w > 0
    m_active = int(np.count_nonzero(keep))
    if m_active:
        inner = sigma2 * np.diag(1.0 / w[keep]) + Phi[:, keep].T @ Phi[:, keep]
        inner_factor = chol_psd(inner, default_jitter(inner))
        logdet = (
            2.0 * float(np.sum(np.log(np.diag(inner_factor.lower))))
            + float(np.sum(np.log(w[keep])))
            + (n - m_active) * math.log(sigma2)
        )
    else:
        inner_factor = PsdFactor(lower=np.zeros((0, 0)), jitter_used=0.0)
        logdet = n * math.log(sigma2)
    return logdet, lr.alpha, inner_factor
