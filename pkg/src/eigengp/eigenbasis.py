"""Nystrom eigenfunction basis built from inducing points.

Given inducing points B and kernel parameters, the basis functions are
phi_j(x) = k(x, B) u_j with u_j = sqrt(M) * v_j / lam_j, where (lam_j, v_j)
are the top eigenpairs of K_BB. Evaluated at B, the scaled columns are
orthogonal with squared norm M.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .kernel import KernelParams, kernel_matrix, _as_2d
from .linalg import default_jitter, sym_eig_desc

# Eigenpairs below this fraction of the leading eigenvalue are dropped:
# the scaling divides by lam_j, so near-null pairs would blow up U.
DROP_THRESHOLD = 1e-12


class AllEigenvaluesDegenerate(Exception):
    pass


class DegenerateBasisWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EigenBasis:
    """Immutable snapshot of the basis: inducing set, kernel, eigensystem."""

    B: np.ndarray
    kernel: KernelParams
    lam: np.ndarray        # kept eigenvalues of K_BB, descending
    U: np.ndarray          # (m_ind, m_basis) scaled eigenvector weights
    lam_full: np.ndarray   # all eigenvalues of K_BB (for perturbation grads)
    vecs_full: np.ndarray  # all eigenvectors, sign-fixed
    n_dropped: int

    @property
    def m_ind(self) -> int:
        return self.B.shape[0]

    @property
    def m_basis(self) -> int:
        return self.lam.shape[0]


def build_basis(B, p: KernelParams, m_basis: int | None = None) -> EigenBasis:
    """Eigendecompose K_BB and form the scaled weight matrix U.

    m_basis defaults to the number of inducing points. Pairs with
    lam_j < 1e-12 * lam_1 (or lam_j <= 0) are dropped with a warning.
    """
    B = _as_2d(B, p.dim, "B")
    m_ind = B.shape[0]
    if m_ind < 1:
        raise ValueError("need at least one inducing point")
    if m_basis is None:
        m_basis = m_ind
    if not 1 <= m_basis <= m_ind:
        raise ValueError(f"m_basis must be in [1, {m_ind}], got {m_basis}")

    K = kernel_matrix(B, B, p)
    try:
        pair = sym_eig_desc(K, m_ind)
    except Exception:
        # eigh is extremely robust; jitter only if it actually degenerates
        pair = sym_eig_desc(K + default_jitter(K) * np.eye(m_ind), m_ind)

    lam_full, vecs_full = pair.values, pair.vectors
    cutoff = DROP_THRESHOLD * max(lam_full[0], 0.0)
    keep = np.flatnonzero(lam_full[:m_basis] > cutoff)
    if keep.size == 0:
        raise AllEigenvaluesDegenerate(
            "every eigenvalue of K_BB fell below the drop threshold"
        )
    n_dropped = m_basis - keep.size
    if n_dropped:
        warnings.warn(
            f"dropped {n_dropped} near-null eigenpair(s) of K_BB",
            DegenerateBasisWarning,
            stacklevel=2,
        )
    lam = lam_full[keep]
    U = np.sqrt(m_ind) * vecs_full[:, keep] / lam[None, :]
    return EigenBasis(
        B=B,
        kernel=p,
        lam=lam,
        U=U,
        lam_full=lam_full,
        vecs_full=vecs_full,
        n_dropped=n_dropped,
    )


def eval_phi(basis: EigenBasis, X) -> np.ndarray:
    """Evaluate all basis functions at the rows of X: k(X, B) @ U."""
    return kernel_matrix(X, basis.B, basis.kernel) @ basis.U


def default_weights(basis: EigenBasis) -> np.ndarray:
    """Prior variances w_j = lam_j / M that tie the low-rank covariance to
    the plain Nystrom approximation K_XB K_BB^{-1} K_BX (full basis)."""
    return basis.lam / basis.m_ind
