"""Log marginal likelihood and its analytic gradients.

The trainable covariance is C_N = Phi diag(w) Phi^T + diag(s) with
Phi = K_XB U built from the eigenfunction basis. The log evidence is

    ln p(y) = -1/2 [ ln det C_N + y^T C_N^{-1} y + N ln 2 pi ]

and every gradient block reduces to traces of the form tr(T dC_N) with
T = C_N^{-1} - alpha alpha^T, alpha = C_N^{-1} y. All traces are evaluated
through N x M intermediates and Hadamard-product identities; no N x N
matrix is ever formed, so an evaluation costs O(max(M^2, D) N).

Gradient modes mirror the two training strategies:

  PHASE1  w is tied to the basis eigenvalues, making the low-rank part the
          plain Nystrom matrix K_XB K_BB^{-1} K_BX; gradients flow to B,
          eta, a0, sigma2 through that closed form.
  PHASE2  basis fixed; gradients for w and sigma2 only.
  JOINT   all blocks at once; gradients through the eigendecomposition use
          first-order perturbation of (lam_j, u_j), guarded by a minimum
          eigengap check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from .eigenbasis import build_basis, eval_phi
from .kernel import _as_2d, kernel_matrix
from .linalg import DimensionMismatch, LowRankGaussian, chol_psd, default_jitter
from .model import HyperParams, ModelVariant, VarianceClampWarning

EIGENGAP_TOL = 1e-8


class GradMode(Enum):
    PHASE1 = "phase1"
    PHASE2 = "phase2"
    JOINT = "joint"


class EigengapTooSmall(Exception):
    """Eigenvector derivatives are unreliable: K_BB has a near-degenerate
    eigengap (or dropped eigenpairs mid-optimization)."""


@dataclass(frozen=True)
class EvidenceResult:
    value: float
    grads: dict


@dataclass
class _State:
    X: np.ndarray
    y: np.ndarray
    theta: HyperParams
    variant: ModelVariant
    basis: object
    K_XB: np.ndarray
    Phi: np.ndarray
    s: np.ndarray
    cache: LowRankGaussian
    value: float
    # plus variant: points where the diagonal correction a0 - ktilde(x,x)
    # is active (not clamped at zero); the clamp kills those derivatives
    corr_active: np.ndarray
    # combined T = C^{-1} - alpha alpha^T applied pieces
    alpha: np.ndarray = None
    t_phi: np.ndarray = None
    t_diag: np.ndarray = None


def _build_state(theta: HyperParams, X, y, variant: ModelVariant) -> _State:
    X = _as_2d(X, theta.kernel.dim, "X")
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch("X and y row counts disagree")
    basis = build_basis(theta.B, theta.kernel, theta.m_basis)
    if basis.m_basis != theta.m_basis:
        raise EigengapTooSmall(
            "basis dropped eigenpairs; w no longer matches the basis"
        )
    K_XB = kernel_matrix(X, theta.B, theta.kernel)
    Phi = K_XB @ basis.U
    n = X.shape[0]
    if variant is ModelVariant.FINITE:
        s = np.full(n, theta.sigma2)
        corr_active = np.zeros(n, dtype=bool)
    else:
        kt_diag = np.einsum("ij,j,ij->i", Phi, theta.w, Phi)
        corr = theta.kernel.a0 - kt_diag
        corr_active = corr > 0
        if np.any(corr < -1e-8 * theta.kernel.a0):
            warnings.warn(
                "ktilde(x,x) exceeded k(x,x); clamping diagonal correction at 0",
                VarianceClampWarning,
                stacklevel=3,
            )
        s = theta.sigma2 + np.maximum(corr, 0.0)
    cache = LowRankGaussian(Phi, theta.w, s, y)
    value = -0.5 * (
        cache.logdet + float(y @ cache.alpha) + n * math.log(2.0 * math.pi)
    )
    st = _State(
        X=X, y=y, theta=theta, variant=variant, basis=basis,
        K_XB=K_XB, Phi=Phi, s=s, cache=cache, value=value,
        corr_active=corr_active,
    )
    st.alpha = cache.alpha
    return st


def _combined_t(st: _State) -> None:
    """Populate T Phi and diag(T) for T = C^{-1} - alpha alpha^T."""
    a = st.alpha
    st.t_phi = st.cache.solve(st.Phi) - np.outer(a, a @ st.Phi)
    st.t_diag = st.cache.diag_cinv() - a * a


def log_evidence(theta: HyperParams, X, y,
                 variant: ModelVariant = ModelVariant.FINITE) -> float:
    return _build_state(theta, X, y, variant).value


def tied_weights_theta(kernel, B, sigma2) -> HyperParams:
    """Theta with w tied to the basis eigenvalues (the PHASE1 objective)."""
    basis = build_basis(B, kernel)
    return HyperParams(kernel=kernel, B=B, w=basis.lam / basis.m_ind,
                       sigma2=sigma2)


# ---------------------------------------------------------------------------
# shared gradient plumbing

def _kernel_chain(E_XB, E_BB, st: _State):
    """Convert trace coefficients on dK_XB / dK_BB into derivatives of the
    trace with respect to B, eta, and a0.

    E_XB is N x M with tr-part = sum(E_XB * dK_XB); E_BB is M x M symmetric
    with tr-part = sum(E_BB * dK_BB).
    """
    X, B = st.X, st.theta.B
    eta, a0 = st.theta.kernel.eta, st.theta.kernel.a0
    K_XB = st.K_XB
    K_BB = kernel_matrix(B, B, st.theta.kernel)
    W1 = E_XB * K_XB
    W2 = E_BB * K_BB
    m, d = B.shape
    gB = np.zeros((m, d))
    geta = np.zeros(d)
    w1_colsum = W1.sum(axis=0)
    w2_rowsum = W2.sum(axis=1)
    for k in range(d):
        xk, bk = X[:, k], B[:, k]
        gB[:, k] = 2.0 * eta[k] * (W1.T @ xk - w1_colsum * bk) \
            - 4.0 * eta[k] * (w2_rowsum * bk - W2 @ bk)
        dxb = xk[:, None] - bk[None, :]
        dbb = bk[:, None] - bk[None, :]
        geta[k] = -float(np.sum(W1 * dxb**2)) - float(np.sum(W2 * dbb**2))
    ga0 = (float(W1.sum()) + float(W2.sum())) / a0
    return gB, geta, ga0


def _plus_w_extra(st: _State):
    """dC/dw_j gains -diag(phi_j^2) in the plus variant (where unclamped)."""
    t = st.t_diag * st.corr_active
    return np.einsum("i,ij,ij->j", t, st.Phi, st.Phi)


def _grad_w_block(st: _State) -> np.ndarray:
    tr = np.einsum("ij,ij->j", st.Phi, st.t_phi)
    if st.variant is ModelVariant.PLUS:
        tr = tr - _plus_w_extra(st)
    return -0.5 * tr


def _grad_sigma2_block(st: _State) -> float:
    return -0.5 * float(np.sum(st.t_diag))


def _phase1_coeffs(st: _State):
    """Trace coefficients for the Nystrom-form covariance
    C = K_XB K_BB^{-1} K_BX (+ diagonal) as a function of B, eta, a0."""
    B = st.theta.B
    K_BB = kernel_matrix(B, B, st.theta.kernel)
    L = chol_psd(K_BB, default_jitter(K_BB)).lower
    G = st.K_XB
    # Phi_eff = G L^{-T}: C's low-rank part equals Phi_eff Phi_eff^T
    Phi_eff = solve_triangular(L, G.T, lower=True).T
    t_phi_eff = st.cache.solve(Phi_eff) - np.outer(st.alpha, st.alpha @ Phi_eff)

    # tr(T dC) = 2 sum(P2 * dG) - sum(Q2 * dK_BB)  [+ diag terms, plus variant]
    P2 = solve_triangular(L.T, t_phi_eff.T, lower=False).T     # T G K_BB^{-1}
    inner = Phi_eff.T @ t_phi_eff
    inner = 0.5 * (inner + inner.T)
    t1 = solve_triangular(L.T, inner, lower=False)
    Q2 = solve_triangular(L.T, t1.T, lower=False).T            # L^{-T} inner L^{-1}
    E_XB = 2.0 * P2
    E_BB = -0.5 * (Q2 + Q2.T)
    a0_direct = 0.0
    if st.variant is ModelVariant.PLUS:
        # s_i = sigma2 + a0 - q_ii with q = diag(G K_BB^{-1} G^T)
        t = st.t_diag * st.corr_active
        GKinv = solve_triangular(L.T, Phi_eff.T, lower=False).T  # G K_BB^{-1}
        E_XB = E_XB - 2.0 * t[:, None] * GKinv
        V = Phi_eff.T @ (t[:, None] * Phi_eff)
        t2 = solve_triangular(L.T, V, lower=False)
        Vq = solve_triangular(L.T, t2.T, lower=False).T
        E_BB = E_BB + 0.5 * (Vq + Vq.T)
        a0_direct = float(np.sum(t))
    return E_XB, E_BB, a0_direct


def _joint_coeffs(st: _State):
    """Trace coefficients for the eigenbasis covariance in joint mode,
    with eigenvalue/eigenvector perturbation through K_BB."""
    basis = st.basis
    lam_full = basis.lam_full
    vecs_full = basis.vecs_full
    m_ind, m_basis = basis.m_ind, basis.m_basis
    lam1 = max(lam_full[0], 0.0)

    # eigengap guard over kept eigenvalues vs. all others
    for j in range(m_basis):
        gaps = np.abs(lam_full - lam_full[j])
        gaps[j] = np.inf
        if gaps.min() < EIGENGAP_TOL * lam1:
            raise EigengapTooSmall(
                f"eigengap at kept eigenvalue {j} below {EIGENGAP_TOL:g} * lam_1"
            )

    w = st.theta.w
    Z0 = st.t_phi * w[None, :]
    if st.variant is ModelVariant.PLUS:
        t = st.t_diag * st.corr_active
        Z0 = (st.t_phi - t[:, None] * st.Phi) * w[None, :]

    E_XB = 2.0 * Z0 @ basis.U.T

    omega = st.K_XB.T @ Z0                     # m_ind x m_basis
    c = vecs_full.T @ omega                    # m_ind x m_basis
    lam_kept = basis.lam
    F = np.zeros((m_ind, m_basis))
    for j in range(m_basis):
        denom = lam_kept[j] * (lam_kept[j] - lam_full)
        denom[j] = 1.0  # placeholder, overwritten below
        F[:, j] = c[:, j] / denom
        F[j, j] = -c[j, j] / lam_kept[j] ** 2
    gamma = 2.0 * math.sqrt(m_ind) * vecs_full @ F @ vecs_full[:, :m_basis].T
    E_BB = 0.5 * (gamma + gamma.T)
    a0_direct = (
        float(np.sum(st.t_diag * st.corr_active))
        if st.variant is ModelVariant.PLUS
        else 0.0
    )
    return E_XB, E_BB, a0_direct


# ---------------------------------------------------------------------------
# public gradient operations

def evidence_and_grad(theta: HyperParams, X, y,
                      variant: ModelVariant = ModelVariant.FINITE,
                      mode: GradMode = GradMode.JOINT) -> EvidenceResult:
    """Evidence value plus exactly the gradient blocks active in `mode`.

    PHASE1 assumes theta.w is tied to the basis eigenvalues (see
    tied_weights_theta); the returned value is always the evidence at theta
    as given.
    """
    st = _build_state(theta, X, y, variant)
    _combined_t(st)
    grads: dict = {}
    if mode is GradMode.PHASE2:
        grads["w"] = _grad_w_block(st)
        grads["sigma2"] = _grad_sigma2_block(st)
        return EvidenceResult(value=st.value, grads=grads)

    if mode is GradMode.PHASE1:
        E_XB, E_BB, a0_direct = _phase1_coeffs(st)
    else:
        E_XB, E_BB, a0_direct = _joint_coeffs(st)
        grads["w"] = _grad_w_block(st)
    gB, geta, ga0 = _kernel_chain(E_XB, E_BB, st)
    grads["B"] = -0.5 * gB
    grads["eta"] = -0.5 * geta
    grads["a0"] = -0.5 * (ga0 + a0_direct)
    grads["sigma2"] = _grad_sigma2_block(st)
    return EvidenceResult(value=st.value, grads=grads)


def grad_w(theta: HyperParams, X, y,
           variant: ModelVariant = ModelVariant.FINITE) -> np.ndarray:
    return evidence_and_grad(theta, X, y, variant, GradMode.PHASE2).grads["w"]


def grad_B(theta: HyperParams, X, y, mode: GradMode = GradMode.PHASE1,
           variant: ModelVariant = ModelVariant.FINITE) -> np.ndarray:
    if mode is GradMode.PHASE2:
        raise ValueError("B is not an active block in PHASE2")
    return evidence_and_grad(theta, X, y, variant, mode).grads["B"]


def grad_kernel_noise(theta: HyperParams, X, y,
                      mode: GradMode = GradMode.PHASE1,
                      variant: ModelVariant = ModelVariant.FINITE):
    res = evidence_and_grad(theta, X, y, variant, mode)
    if mode is GradMode.PHASE2:
        return None, None, res.grads["sigma2"]
    return res.grads["a0"], res.grads["eta"], res.grads["sigma2"]
