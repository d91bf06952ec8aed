"""Evidence maximization: nonlinear conjugate gradients with a strong-Wolfe
line search, log-space positivity transforms, sequential / joint training
drivers, and a finite-difference gradient self-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .eigenbasis import AllEigenvaluesDegenerate, build_basis, default_weights
from .evidence import (
    EigengapTooSmall,
    GradMode,
    evidence_and_grad,
    log_evidence,
    tied_weights_theta,
)
from .kernel import KernelParams
from .linalg import FactorizationFailed
from .model import HyperParams, ModelVariant, TrainedModel, fit

GRAD_TOL = 1e-8


class NonFiniteObjective(Exception):
    pass


@dataclass(frozen=True)
class OptOptions:
    max_evals: int = 100
    cg_restart: int = 0          # 0 = restart every len(x) iterations
    sufficient_decrease: float = 1e-4
    curvature: float = 0.9
    max_ls_trials: int = 20
    seed: int = 0
    sigma2_floor_frac: float = 1e-8   # floor = frac * var(y)

    def __post_init__(self):
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")
        if not 0 < self.sufficient_decrease < self.curvature < 1:
            raise ValueError("need 0 < sufficient_decrease < curvature < 1")


@dataclass
class TraceEntry:
    eval_index: int
    objective: float
    gradient_norm: float
    step_accepted: bool


@dataclass
class OptTrace:
    entries: list = field(default_factory=list)

    def record(self, eval_index, objective, gradient_norm, accepted):
        self.entries.append(
            TraceEntry(eval_index, float(objective), float(gradient_norm), accepted)
        )

    def accepted_objectives(self):
        return [e.objective for e in self.entries if e.step_accepted]

    def extend(self, other: "OptTrace"):
        offset = self.entries[-1].eval_index if self.entries else 0
        for e in other.entries:
            self.entries.append(
                TraceEntry(e.eval_index + offset, e.objective,
                           e.gradient_norm, e.step_accepted)
            )


def _cubic_min(a, fa, dfa, b, fb):
    """Minimizer of the cubic through (a, fa, dfa) and (b, fb) clipped into
    the middle 60% of [a, b]; falls back to bisection."""
    lo, hi = (a, b) if a < b else (b, a)
    span = hi - lo
    with np.errstate(all="ignore"):
        denom = fb - fa - dfa * (b - a)
        if denom != 0 and np.isfinite(denom):
            t = -dfa * (b - a) ** 2 / (2.0 * denom)
            cand = a + t
            if np.isfinite(cand) and lo + 0.2 * span < cand < hi - 0.2 * span:
                return cand
    return 0.5 * (lo + hi)


class _Budget:
    def __init__(self, limit):
        self.limit = limit
        self.used = 0

    def spent(self):
        return self.used >= self.limit


def minimize_cg(objective_with_grad, x0, opts: OptOptions = OptOptions()):
    """Polak-Ribiere nonlinear CG with a strong-Wolfe line search.

    objective_with_grad(x) -> (f, g). Minimizes f; returns the best point
    seen and the evaluation trace. Terminates on the evaluation budget, a
    relative gradient-norm test, or line-search failure after a steepest-
    descent restart.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    budget = _Budget(opts.max_evals)
    trace = OptTrace()

    def ev(xp):
        budget.used += 1
        f, g = objective_with_grad(xp)
        return float(f), np.asarray(g, dtype=float)

    f, g = ev(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteObjective("objective not finite at the initial point")
    trace.record(budget.used, f, np.linalg.norm(g), True)
    best_f, best_x = f, x.copy()

    c1, c2 = opts.sufficient_decrease, opts.curvature
    restart_every = opts.cg_restart if opts.cg_restart > 0 else max(n, 1)
    d = -g
    iters_since_restart = 0
    f_prev_step = None

    def wolfe(x, f0, g0, d):
        """Strong-Wolfe search along d. Returns (x1, f1, g1) or None."""
        dphi0 = float(g0 @ d)
        if dphi0 >= 0:
            return None
        if f_prev_step is not None and f_prev_step > f0:
            a = min(1.0, 2.02 * (f_prev_step - f0) / (-dphi0))
        else:
            a = min(1.0, 1.0 / (1.0 + np.linalg.norm(g0)))
        a = max(a, 1e-12)
        a_prev, f_prevv, dphi_prev = 0.0, f0, dphi0
        bracket = None
        for trial in range(opts.max_ls_trials):
            if budget.spent():
                return None
            xt = x + a * d
            ft, gt = ev(xt)
            trace.record(budget.used, ft, np.linalg.norm(gt), False)
            dphit = float(gt @ d) if np.all(np.isfinite(gt)) else np.nan
            if not np.isfinite(ft) or not np.isfinite(dphit):
                bracket = (a_prev, f_prevv, dphi_prev, a, np.inf)
                break
            if ft > f0 + c1 * a * dphi0 or (trial > 0 and ft >= f_prevv):
                bracket = (a_prev, f_prevv, dphi_prev, a, ft)
                break
            if abs(dphit) <= -c2 * dphi0:
                return xt, ft, gt
            if dphit >= 0:
                bracket = (a, ft, dphit, a_prev, f_prevv)
                break
            a_prev, f_prevv, dphi_prev = a, ft, dphit
            a = 2.0 * a
        if bracket is None:
            return None
        lo, flo, dflo, hi, fhi = bracket
        # zoom: shrink [lo, hi] keeping lo the best endpoint
        for _ in range(opts.max_ls_trials):
            if budget.spent():
                return None
            a = _cubic_min(lo, flo, dflo, hi, fhi)
            xt = x + a * d
            ft, gt = ev(xt)
            trace.record(budget.used, ft, np.linalg.norm(gt), False)
            dphit = float(gt @ d) if np.all(np.isfinite(gt)) else np.nan
            if not np.isfinite(ft) or ft > f0 + c1 * a * dphi0 or ft >= flo:
                hi, fhi = a, ft
                continue
            if abs(dphit) <= -c2 * dphi0:
                return xt, ft, gt
            if dphit * (hi - lo) >= 0:
                hi, fhi = lo, flo
            lo, flo, dflo = a, ft, dphit
            if abs(hi - lo) < 1e-14 * max(1.0, abs(lo)):
                break
        return None

    while not budget.spent():
        if np.linalg.norm(g) <= GRAD_TOL * max(1.0, abs(f)):
            break
        result = wolfe(x, f, g, d)
        if result is None:
            if np.allclose(d, -g):
                break
            d = -g
            iters_since_restart = 0
            result = wolfe(x, f, g, d)
            if result is None:
                break
        x_new, f_new, g_new = result
        f_prev_step = f
        beta = 0.0
        iters_since_restart += 1
        if iters_since_restart < restart_every:
            gg = float(g @ g)
            if gg > 0:
                beta = max(0.0, float(g_new @ (g_new - g)) / gg)
        else:
            iters_since_restart = 0
        x, f, g = x_new, f_new, g_new
        d = -g + beta * d
        trace.record(budget.used, f, np.linalg.norm(g), True)
        if f < best_f:
            best_f, best_x = f, x.copy()

    return best_x, trace


# ---------------------------------------------------------------------------
# packing: flatten the active blocks of theta into an optimization vector

_MODE_BLOCKS = {
    GradMode.PHASE1: ("a0", "eta", "B", "sigma2"),
    GradMode.PHASE2: ("w", "sigma2"),
    GradMode.JOINT: ("a0", "eta", "B", "w", "sigma2"),
}


class ParamPacker:
    """Bijective flattening of a mode's active hyperparameter blocks.

    a0, eta, w, sigma2 travel through natural log (entries pinned at zero
    are excluded and stay zero); B entries are identity-mapped. Gradients
    are chain-ruled accordingly (d/d log s = s * d/ds).
    """

    def __init__(self, template: HyperParams, mode: GradMode):
        self.mode = mode
        self.blocks = _MODE_BLOCKS[mode]
        self.template = template
        self.eta_active = np.flatnonzero(template.kernel.eta > 0)
        self.w_active = np.flatnonzero(template.w > 0)
        self.b_shape = template.B.shape

    def pack(self, theta: HyperParams) -> np.ndarray:
        parts = []
        for block in self.blocks:
            if block == "a0":
                parts.append([math.log(theta.kernel.a0)])
            elif block == "eta":
                parts.append(np.log(theta.kernel.eta[self.eta_active]))
            elif block == "B":
                parts.append(theta.B.ravel())
            elif block == "w":
                parts.append(np.log(theta.w[self.w_active]))
            elif block == "sigma2":
                parts.append([math.log(theta.sigma2)])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    # log-space bound keeping exp() finite; the objective is effectively
    # +inf long before a parameter reaches e^±200
    LOG_BOUND = 200.0

    def _exp(self, v):
        return np.exp(np.clip(v, -self.LOG_BOUND, self.LOG_BOUND))

    def unpack(self, x: np.ndarray) -> HyperParams:
        x = np.asarray(x, dtype=float)
        t = self.template
        a0, eta, B, w, sigma2 = (
            t.kernel.a0, t.kernel.eta.copy(), t.B, t.w.copy(), t.sigma2,
        )
        i = 0
        for block in self.blocks:
            if block == "a0":
                a0 = float(self._exp(x[i])); i += 1
            elif block == "eta":
                k = self.eta_active.size
                eta[self.eta_active] = self._exp(x[i:i + k]); i += k
            elif block == "B":
                k = t.B.size
                B = x[i:i + k].reshape(self.b_shape); i += k
            elif block == "w":
                k = self.w_active.size
                w[self.w_active] = self._exp(x[i:i + k]); i += k
            elif block == "sigma2":
                sigma2 = float(self._exp(x[i])); i += 1
        return HyperParams(kernel=KernelParams(a0=a0, eta=eta), B=B, w=w,
                           sigma2=sigma2)

    def pack_grad(self, theta: HyperParams, grads: dict) -> np.ndarray:
        parts = []
        for block in self.blocks:
            if block == "a0":
                parts.append([theta.kernel.a0 * grads["a0"]])
            elif block == "eta":
                parts.append(
                    theta.kernel.eta[self.eta_active]
                    * grads["eta"][self.eta_active]
                )
            elif block == "B":
                parts.append(np.asarray(grads["B"]).ravel())
            elif block == "w":
                parts.append(theta.w[self.w_active] * grads["w"][self.w_active])
            elif block == "sigma2":
                parts.append([theta.sigma2 * grads["sigma2"]])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


# ---------------------------------------------------------------------------
# training drivers

def _sigma2_floor(y, opts):
    v = float(np.var(y))
    return opts.sigma2_floor_frac * v if v > 0 else opts.sigma2_floor_frac


def _apply_floor(theta: HyperParams, floor: float) -> HyperParams:
    if theta.sigma2 >= floor:
        return theta
    return replace(theta, sigma2=floor)


def _make_objective(X, y, variant, mode, packer, floor, tie_w=False):
    """Negative-evidence objective over the packed vector.

    In PHASE1 the prior variances are re-tied to the basis eigenvalues at
    every evaluation. Eigengap failures in joint mode surface as +inf so the
    line search rejects the step.
    """
    def objective(x):
        theta = _apply_floor(packer.unpack(x), floor)
        if tie_w:
            # near-null eigenpairs may be dropped while the kernel is very
            # smooth; w simply ties to whatever survives
            try:
                basis = build_basis(theta.B, theta.kernel)
            except AllEigenvaluesDegenerate:
                return np.inf, np.zeros_like(x)
            theta = replace(theta, w=default_weights(basis))
        try:
            res = evidence_and_grad(theta, X, y, variant, mode)
        except (EigengapTooSmall, FactorizationFailed):
            return np.inf, np.zeros_like(x)
        if not np.isfinite(res.value):
            return np.inf, np.zeros_like(x)
        return -res.value, -packer.pack_grad(theta, res.grads)

    return objective


def train_sequential(X, y, init: HyperParams,
                     variant: ModelVariant = ModelVariant.FINITE,
                     opts: OptOptions = OptOptions(),
                     cycles: int = 1):
    """Two-phase evidence maximization.

    Phase 1 updates B, eta, a0, sigma2 with w tied to the basis eigenvalues;
    phase 2 freezes the basis, seeds w from the eigenvalue weights, and
    optimizes w and sigma2. `cycles` > 1 alternates the two phases.
    """
    y = np.asarray(y, dtype=float).ravel()
    floor = _sigma2_floor(y, opts)
    theta = _apply_floor(init, floor)
    trace = OptTrace()

    for _ in range(max(cycles, 1)):
        basis = build_basis(theta.B, theta.kernel)
        theta = replace(theta, w=default_weights(basis))
        packer1 = ParamPacker(theta, GradMode.PHASE1)
        obj1 = _make_objective(X, y, variant, GradMode.PHASE1, packer1, floor,
                               tie_w=True)
        try:
            x1, tr1 = minimize_cg(obj1, packer1.pack(theta), opts)
        except NonFiniteObjective:
            raise
        trace.extend(tr1)
        theta = _apply_floor(packer1.unpack(x1), floor)

        basis = build_basis(theta.B, theta.kernel)
        theta = replace(theta, w=default_weights(basis))
        packer2 = ParamPacker(theta, GradMode.PHASE2)
        obj2 = _make_objective(X, y, variant, GradMode.PHASE2, packer2, floor)
        x2, tr2 = minimize_cg(obj2, packer2.pack(theta), opts)
        trace.extend(tr2)
        theta = _apply_floor(packer2.unpack(x2), floor)

    return fit(X, y, theta, variant), trace


def train_phase1(X, y, init: HyperParams,
                 variant: ModelVariant = ModelVariant.FINITE,
                 opts: OptOptions = OptOptions()):
    """Phase-1-only evidence maximization (w stays tied to the eigenvalues).

    With the prior variances tied, the model covariance reduces to the
    Nystrom form K_XB K_BB^-1 K_BX + diag(s), so this is exactly the
    marginal-likelihood-optimized Nystrom method.
    """
    y = np.asarray(y, dtype=float).ravel()
    floor = _sigma2_floor(y, opts)
    theta = _apply_floor(init, floor)
    basis = build_basis(theta.B, theta.kernel)
    theta = replace(theta, w=default_weights(basis))
    packer = ParamPacker(theta, GradMode.PHASE1)
    obj = _make_objective(X, y, variant, GradMode.PHASE1, packer, floor,
                          tie_w=True)
    x1, trace = minimize_cg(obj, packer.pack(theta), opts)
    theta = _apply_floor(packer.unpack(x1), floor)
    basis = build_basis(theta.B, theta.kernel)
    theta = replace(theta, w=default_weights(basis))
    return fit(X, y, theta, variant), trace


def train_joint(X, y, init: HyperParams,
                variant: ModelVariant = ModelVariant.FINITE,
                opts: OptOptions = OptOptions()):
    """Single CG run over all hyperparameter blocks at once.

    The eigengap guard can fire at the starting point for two reasons: a
    kernel so smooth that K_BB is numerically rank deficient, or one so
    sharp that isolated inducing points produce (near-)repeated
    eigenvalues.  The retry ladder therefore probes lengthscale-precision
    rescalings in both directions, jittering the inducing points each time.
    """
    y = np.asarray(y, dtype=float).ravel()
    floor = _sigma2_floor(y, opts)
    theta0 = _apply_floor(init, floor)
    rng = np.random.default_rng(opts.seed)

    def run(theta):
        packer = ParamPacker(theta, GradMode.JOINT)
        obj = _make_objective(X, y, variant, GradMode.JOINT, packer, floor)
        x_final, trace = minimize_cg(obj, packer.pack(theta), opts)
        return _apply_floor(packer.unpack(x_final), floor), trace

    try:
        theta, trace = run(theta0)
        return fit(X, y, theta, variant), trace
    except NonFiniteObjective as err:
        last_err = err
    warnings.warn(
        "joint objective failed at x0; retrying with rescaled kernels",
        UserWarning)
    # keep the best evidence over the retry ladder instead of committing to
    # the first rescaling that happens to start
    best = None
    for s in [0.5, 0.25, 4.0, 0.0625, 16.0, 64.0]:
        jitter = 1e-3 * (np.abs(theta0.B).max() + 1.0)
        theta_s = replace(
            theta0,
            kernel=replace(theta0.kernel, eta=s * theta0.kernel.eta),
            B=theta0.B + jitter * rng.normal(size=theta0.B.shape),
        )
        try:
            theta, trace = run(theta_s)
        except NonFiniteObjective as err:
            last_err = err
            continue
        m = fit(X, y, theta, variant)
        if np.isfinite(m.log_evidence) and (
                best is None or m.log_evidence > best[0].log_evidence):
            best = (m, trace)
    if best is None:
        raise NonFiniteObjective(
            f"joint objective not finite after retries: {last_err}")
    return best


def train_restarts(X, y, inits, variant: ModelVariant = ModelVariant.FINITE,
                   opts: OptOptions = OptOptions(), method: str = "sequential",
                   cycles: int = 1):
    """Train from several starting points and keep the best-evidence run.

    Evidence maximization over inducing-point locations is multimodal, so a
    small multi-start (see baselines.init_pool) selected by final log
    evidence is used for the benchmark methods.  Failed starts are skipped;
    at least one must succeed.
    """
    best = None
    best_trace = None
    failures = []
    for init in inits:
        try:
            if method == "joint":
                m, tr = train_joint(X, y, init, variant, opts)
            elif method == "sequential":
                m, tr = train_sequential(X, y, init, variant, opts,
                                         cycles=cycles)
            else:
                raise ValueError(f"unknown method {method!r}")
        except (NonFiniteObjective, EigengapTooSmall) as err:
            failures.append(err)
            continue
        if not np.isfinite(m.log_evidence):
            continue
        if best is None or m.log_evidence > best.log_evidence:
            best, best_trace = m, tr
    if best is None:
        raise NonFiniteObjective(
            f"all {len(inits)} restarts failed; last error: "
            f"{failures[-1] if failures else 'none'}")
    return best, best_trace


# ---------------------------------------------------------------------------
# gradient self-check

def _mode_objective(X, y, variant, mode):
    if mode is GradMode.PHASE1:
        def f(theta):
            tied = tied_weights_theta(theta.kernel, theta.B, theta.sigma2)
            return log_evidence(tied, X, y, variant)
    else:
        def f(theta):
            return log_evidence(theta, X, y, variant)
    return f


def finite_diff_check(theta: HyperParams, X, y,
                      variant: ModelVariant = ModelVariant.FINITE,
                      mode: GradMode = GradMode.JOINT,
                      step: float = 1e-5,
                      tol: float = 1e-4,
                      abs_floor: float = 1e-7) -> dict:
    """Compare every analytic gradient block against central differences.

    A block passes when |analytic - fd| <= tol * max(|analytic|, |fd|)
    + abs_floor entrywise. Returns a report with per-block max scores
    (score <= 1 means pass); failures are carried in the report, not raised.
    """
    if mode is GradMode.PHASE1:
        theta = tied_weights_theta(theta.kernel, theta.B, theta.sigma2)
    res = evidence_and_grad(theta, X, y, variant, mode)
    f = _mode_objective(X, y, variant, mode)

    def perturbed(block, idx, delta):
        a0, eta = theta.kernel.a0, theta.kernel.eta.copy()
        B, w, s2 = theta.B.copy(), theta.w.copy(), theta.sigma2
        if block == "a0":
            a0 += delta
        elif block == "eta":
            eta[idx] += delta
        elif block == "B":
            B.flat[idx] += delta
        elif block == "w":
            w[idx] += delta
        elif block == "sigma2":
            s2 += delta
        return HyperParams(kernel=KernelParams(a0=a0, eta=eta), B=B, w=w,
                           sigma2=s2)

    report = {"mode": mode.value, "variant": variant.value, "blocks": {},
              "passed": True, "eigengap_guard_hit": False}
    for block in _MODE_BLOCKS[mode]:
        analytic = np.atleast_1d(np.asarray(res.grads[block], dtype=float)).ravel()
        vals = {"a0": np.array([theta.kernel.a0]),
                "eta": theta.kernel.eta,
                "B": theta.B.ravel(),
                "w": theta.w,
                "sigma2": np.array([theta.sigma2])}[block]
        scores = np.zeros(analytic.size)
        for i in range(analytic.size):
            if block == "eta" and theta.kernel.eta[i] == 0:
                continue  # pinned dimension: excluded from optimization
            if block == "w" and theta.w[i] == 0:
                continue  # pruned weight: excluded from optimization
            if block in ("a0", "eta", "w", "sigma2") and vals[i] > 0:
                # positive parameters get a relative step: it keeps the
                # minus step positive and the truncation error small (the
                # objective curves sharply as they approach zero)
                h = step * abs(vals[i])
            else:
                h = step * max(abs(vals[i]), 1.0)
            fp = f(perturbed(block, i, +h))
            fm = f(perturbed(block, i, -h))
            fd = (fp - fm) / (2.0 * h)
            denom = tol * max(abs(analytic[i]), abs(fd)) + abs_floor
            scores[i] = abs(analytic[i] - fd) / denom
        block_score = float(scores.max()) if scores.size else 0.0
        report["blocks"][block] = {"max_score": block_score,
                                   "passed": block_score <= 1.0}
        report["passed"] = report["passed"] and block_score <= 1.0
    return report
