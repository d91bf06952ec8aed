"""Acceptance suites: each maps one release gate to an executable check
with pinned seeds and thresholds, returning a machine-readable verdict.

Run from the command line as `eigengp-harness run <suite>` (or `run all`).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import tracemalloc
import warnings

import numpy as np

from . import __version__
from .baselines import (
    full_gp_predict,
    full_gp_train,
    init_pool,
    kmeans,
    nystrom_gp_predict,
    subset_gp_init,
)
from .dataio import gen_snelson_like, gen_xsinx3
from .eigenbasis import build_basis, default_weights, eval_phi
from .evidence import GradMode, evidence_and_grad, log_evidence
from .kernel import KernelParams, kernel_matrix
from .metrics import NmseDenominator, mnlp, nmse
from .model import HyperParams, ModelVariant, fit, ktilde, noise_diagonal, predict
from .optimizer import (
    OptOptions,
    finite_diff_check,
    train_joint,
    train_restarts,
    train_sequential,
)


class UnknownSuite(Exception):
    pass


def _check(name, passed, detail=""):
    return {"name": name, "passed": bool(passed), "detail": str(detail)}


def _verdict(suite, checks, t0, budget_s):
    elapsed = time.perf_counter() - t0
    checks = list(checks)
    checks.append(_check("runtime-budget", elapsed <= budget_s,
                         f"{elapsed:.1f}s of {budget_s}s"))
    return {
        "suite": suite,
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "seconds": elapsed,
        "tool_version": __version__,
    }


def _random_instance(seed, n_max=50, m_max=8, d_max=4):
    """Small random regression instance for gradient / oracle checks."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    m = int(rng.integers(2, m_max + 1))
    X = rng.uniform(-1.5, 1.5, size=(n, d))
    y = np.sin(X @ rng.uniform(-1, 1, size=d)) + 0.2 * rng.standard_normal(n)
    B = X[rng.choice(n, m, replace=False)] + 0.05 * rng.standard_normal((m, d))
    kernel = KernelParams(a0=float(rng.uniform(0.5, 2.0)),
                          eta=rng.uniform(0.3, 2.0, size=d))
    basis = build_basis(B, kernel)
    # keep w off the eigenvalue tie so the plus-variant clamp is strictly
    # inside one regime (the objective is differentiable at the checkpoint)
    w = 0.6 * default_weights(basis) * rng.uniform(0.5, 1.5, basis.m_basis)
    theta = HyperParams(kernel=kernel, B=B, w=w,
                        sigma2=float(rng.uniform(0.05, 0.4)))
    return theta, X, y


# ---------------------------------------------------------------------------
# 1. gradient fidelity

def suite_gradients():
    t0 = time.perf_counter()
    checks = []
    modes = (GradMode.PHASE1, GradMode.PHASE2, GradMode.JOINT)
    variants = (ModelVariant.FINITE, ModelVariant.PLUS)
    worst = 0.0
    all_pass = True
    for seed in range(20):
        theta, X, y = _random_instance(seed)
        for mode in modes:
            for variant in variants:
                report = finite_diff_check(theta, X, y, variant, mode,
                                           tol=1e-4)
                for block, entry in report["blocks"].items():
                    worst = max(worst, entry["max_score"])
                    if not entry["passed"]:
                        all_pass = False
                        checks.append(_check(
                            f"grad seed={seed} {mode.value}/{variant.value}"
                            f"/{block}", False,
                            f"score {entry['max_score']:.3g}"))
    checks.insert(0, _check(
        "all-blocks-match-fd-at-1e-4",
        all_pass, f"20 instances x 3 modes x 2 variants, worst score "
        f"{worst:.3g} (<=1 passes)"))
    return _verdict("gradients", checks, t0, 60.0)


# ---------------------------------------------------------------------------
# 2. low-rank vs dense oracle

def _dense_reference(theta, X, y, variant):
    basis = build_basis(theta.B, theta.kernel)
    Phi = eval_phi(basis, X)
    w = theta.w[:basis.m_basis]
    s = noise_diagonal(Phi, theta, variant)
    C = Phi @ np.diag(w) @ Phi.T + np.diag(s)
    n = len(y)
    sign, logdet = np.linalg.slogdet(C)
    Cinv_y = np.linalg.solve(C, y)
    value = -0.5 * (logdet + float(y @ Cinv_y) + n * math.log(2 * math.pi))
    return value, C, Cinv_y, basis, Phi, w


def suite_lowrank():
    t0 = time.perf_counter()
    checks = []
    worst_ev, worst_mean, worst_var = 0.0, 0.0, 0.0
    for seed in range(8):
        rng = np.random.default_rng(1000 + seed)
        theta, X, y = _random_instance(seed, n_max=200, m_max=8, d_max=3)
        for variant in (ModelVariant.FINITE, ModelVariant.PLUS):
            ref, C, Cinv_y, basis, Phi, w = _dense_reference(
                theta, X, y, variant)
            got = log_evidence(theta, X, y, variant)
            worst_ev = max(worst_ev, abs(got - ref) / max(abs(ref), 1.0))

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                m = fit(X, y, theta, variant)
                Xs = rng.uniform(-1.5, 1.5, size=(40, X.shape[1]))
                pred = predict(m, Xs)
            Kt = ktilde(Xs, X, basis, w)
            mean_ref = Kt @ Cinv_y
            Phis = eval_phi(basis, Xs)
            if variant is ModelVariant.PLUS:
                prior = theta.kernel.a0 * np.ones(len(Xs))
            else:
                prior = np.einsum("ij,j,ij->i", Phis, w, Phis)
            quad = np.einsum("ij,ji->i", Kt, np.linalg.solve(C, Kt.T))
            var_ref = prior - quad + theta.sigma2
            scale = max(float(np.max(np.abs(mean_ref))), 1.0)
            worst_mean = max(worst_mean,
                             float(np.max(np.abs(pred.mean - mean_ref))) / scale)
            worst_var = max(worst_var, float(np.max(
                np.abs(pred.variance - var_ref) / np.maximum(var_ref, 1e-12))))
    checks.append(_check("log-evidence-vs-dense", worst_ev <= 1e-7,
                         f"worst rel {worst_ev:.3g}"))
    checks.append(_check("predictive-mean-vs-dense", worst_mean <= 1e-7,
                         f"worst rel {worst_mean:.3g}"))
    checks.append(_check("predictive-variance-vs-dense", worst_var <= 1e-7,
                         f"worst rel {worst_var:.3g}"))
    return _verdict("lowrank", checks, t0, 30.0)


# ---------------------------------------------------------------------------
# 3. Nystrom equivalence

def suite_nystrom_equivalence():
    t0 = time.perf_counter()
    checks = []
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(2000 + seed)
        d = int(rng.integers(1, 4))
        m = int(rng.integers(2, 9))
        n = int(rng.integers(20, 120))
        X = rng.uniform(-2, 2, size=(n, d))
        B = rng.uniform(-2, 2, size=(m, d))
        kernel = KernelParams(a0=float(rng.uniform(0.5, 2.0)),
                              eta=rng.uniform(0.2, 1.5, size=d))
        basis = build_basis(B, kernel)
        if basis.m_basis != m:
            continue    # degenerate draw: equivalence needs the full basis
        Phi = eval_phi(basis, X)
        w = default_weights(basis)
        lhs = (Phi * w) @ Phi.T
        K_XB = kernel_matrix(X, B, kernel)
        K_BB = kernel_matrix(B, B, kernel)
        rhs = K_XB @ np.linalg.solve(K_BB, K_XB.T)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    checks.append(_check("phi-diag-w-phi-equals-nystrom", worst <= 1e-8,
                         f"worst abs diff {worst:.3g}"))
    return _verdict("nystrom-equivalence", checks, t0, 10.0)


# ---------------------------------------------------------------------------
# 4. Table-1 dataset-2 reproduction

def table1_ds2_run(seeds=range(10), M=14, max_evals=200, cycles=2):
    """EigenGP (sequential), EigenGP* (joint), and the Nystrom baseline on
    the nonstationary x sin(x^3) benchmark."""
    rows = []
    for seed in seeds:
        train, test = gen_xsinx3(seed=seed)
        ybar = float(np.mean(train.y))
        opts = OptOptions(max_evals=max_evals, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inits = init_pool(train.X, train.y, M, seed=seed, opts=opts)
            m_seq, _ = train_restarts(train.X, train.y, inits,
                                      ModelVariant.FINITE, opts,
                                      method="sequential", cycles=cycles)
            m_star, _ = train_joint(train.X, train.y, m_seq.theta,
                                    ModelVariant.FINITE, opts)
            kern, s2 = subset_gp_init(train.X, train.y, seed=seed, opts=opts)
            B = kmeans(train.X, M, seed)
            pred_ny, _, _ = nystrom_gp_predict(train.X, train.y, B, kern, s2,
                                               test.X)
        row = {"seed": seed}
        for name, pred in (("eigengp", predict(m_seq, test.X)),
                           ("eigengp-star", predict(m_star, test.X)),
                           ("nystrom", pred_ny)):
            row[name] = {
                "nmse": nmse(test.y, pred.mean, ybar),
                "nmse_paper": nmse(test.y, pred.mean, ybar,
                                   NmseDenominator.PAPER_LITERAL),
                "mnlp": mnlp(test.y, pred.mean, pred.variance),
            }
        rows.append(row)
    return rows


def suite_table1_ds2():
    t0 = time.perf_counter()
    rows = table1_ds2_run()
    checks = []

    def agg(method, key):
        return float(np.mean([r[method][key] for r in rows]))

    for method in ("eigengp", "eigengp-star"):
        nm, mn = agg(method, "nmse"), agg(method, "mnlp")
        checks.append(_check(f"{method}-nmse<=0.15", nm <= 0.15,
                             f"mean NMSE {nm:.4f} (target 0.06+-0.02)"))
        checks.append(_check(f"{method}-mnlp<=0.8", mn <= 0.8,
                             f"mean MNLP {mn:.3f} (target 0.40+-0.07)"))
    gap = agg("nystrom", "nmse_paper") / max(agg("eigengp", "nmse_paper"),
                                             1e-300)
    checks.append(_check("nystrom-gap>=100x", gap >= 100.0,
                         f"paper-convention NMSE ratio {gap:.1f}x "
                         f"(paper reports ~4 orders)"))
    return _verdict("table1-ds2", checks, t0, 600.0)


# ---------------------------------------------------------------------------
# 5. dataset-1 analog

def suite_dataset1_analog(seeds=range(10), M=7):
    t0 = time.perf_counter()
    res = []
    for seed in seeds:
        train = gen_snelson_like(seed=seed)
        X = train.X[:, None] if train.X.ndim == 1 else train.X
        Xs = np.linspace(0.0, 6.0, 500)[:, None]
        opts = OptOptions(max_evals=200, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            std = max(float(np.std(X)), 1e-12)
            k0 = KernelParams(a0=max(float(np.var(train.y)), 1e-6),
                              eta=np.array([1.0 / (2.0 * std**2)]))
            fg = full_gp_train(X, train.y, k0,
                               0.1 * max(float(np.var(train.y)), 1e-6), opts)
            ref = full_gp_predict(fg, Xs)
            inits = init_pool(X, train.y, M, seed=seed, opts=opts)
            m, _ = train_restarts(X, train.y, inits, ModelVariant.FINITE,
                                  opts, method="sequential", cycles=2)
            pred = predict(m, Xs)
        ybar = float(np.mean(train.y))
        res.append((nmse(ref.mean, pred.mean, ybar),
                    mnlp(ref.mean, pred.mean, pred.variance)))
    nm = float(np.mean([r[0] for r in res]))
    mn = float(np.mean([r[1] for r in res]))
    checks = [
        _check("eigengp-vs-fullgp-nmse<=0.05", nm <= 0.05,
               f"mean NMSE {nm:.4f} (paper 0.006+-0.001)"),
        _check("eigengp-mnlp<0.5", mn < 0.5,
               f"mean MNLP {mn:.3f} (paper -0.33)"),
    ]
    return _verdict("dataset1-analog", checks, t0, 300.0)


# ---------------------------------------------------------------------------
# 6. far-field predictive variance

def suite_plus_variance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    n, m = 60, 6
    X = rng.uniform(0.0, 2.0, size=(n, 1))
    y = np.sin(2.0 * X[:, 0]) + 0.1 * rng.standard_normal(n)
    B = np.linspace(0.1, 1.9, m)[:, None]
    kernel = KernelParams(a0=1.5, eta=np.array([2.0]))
    basis = build_basis(B, kernel)
    theta = HyperParams(kernel=kernel, B=B, w=default_weights(basis),
                        sigma2=0.04)
    # 5 lengthscales past the data edge: ell = 1/sqrt(2 eta)
    ell = 1.0 / math.sqrt(2.0 * kernel.eta[0])
    Xfar = np.array([[2.0 + 5.0 * ell], [2.0 + 8.0 * ell], [-5.0 * ell]])
    checks = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vf = predict(fit(X, y, theta, ModelVariant.FINITE), Xfar).variance
        vp = predict(fit(X, y, theta, ModelVariant.PLUS), Xfar).variance
    s2, a0 = theta.sigma2, kernel.a0
    checks.append(_check(
        "finite-far-field-variance-in-[s2,1.01s2]",
        bool(np.all((vf >= s2 - 1e-12) & (vf <= 1.01 * s2))),
        f"range [{vf.min():.6g}, {vf.max():.6g}] vs sigma2 {s2}"))
    checks.append(_check(
        "plus-far-field-variance-in-[0.99(a0+s2),1.01(a0+s2)]",
        bool(np.all((vp >= 0.99 * (a0 + s2)) & (vp <= 1.01 * (a0 + s2)))),
        f"range [{vp.min():.6g}, {vp.max():.6g}] vs a0+sigma2 {a0 + s2}"))
    return _verdict("plus-variance", checks, t0, 10.0)


# ---------------------------------------------------------------------------
# 7. complexity scaling

def _time_eval(theta, X, y, reps=3):
    best = math.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        evidence_and_grad(theta, X, y, ModelVariant.FINITE, GradMode.JOINT)
        best = min(best, time.perf_counter() - t0)
    return best


def suite_complexity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    M, d = 20, 2

    def instance(n):
        X = rng.uniform(-2, 2, size=(n, d))
        y = np.sin(X @ np.array([1.0, 0.5])) + 0.1 * rng.standard_normal(n)
        B = X[rng.choice(n, M, replace=False)] + 0.01 * rng.standard_normal((M, d))
        kernel = KernelParams(a0=1.2, eta=np.array([0.8, 1.1]))
        basis = build_basis(B, kernel)
        theta = HyperParams(kernel=kernel, B=B,
                            w=0.7 * default_weights(basis), sigma2=0.1)
        return theta, X, y

    inst2, inst4 = instance(2000), instance(4000)
    _time_eval(*inst2, reps=1)   # warm up BLAS/numpy paths
    time2 = _time_eval(*inst2)
    time4 = _time_eval(*inst4)
    ratio = time4 / time2

    n = 4000
    tracemalloc.start()
    evidence_and_grad(inst4[0], inst4[1], inst4[2],
                      ModelVariant.FINITE, GradMode.JOINT)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    nxn_bytes = n * n * 8

    checks = [
        _check("time-ratio-4000/2000-in-[1.5,3.0]", 1.5 <= ratio <= 3.0,
               f"ratio {ratio:.2f} ({time2 * 1e3:.1f}ms -> {time4 * 1e3:.1f}ms)"),
        _check("no-NxN-allocation", peak < 0.5 * nxn_bytes,
               f"peak traced {peak / 1e6:.1f}MB vs NxN {nxn_bytes / 1e6:.0f}MB"),
    ]
    return _verdict("complexity", checks, t0, 120.0)


# ---------------------------------------------------------------------------
# 8. optimizer contract

def _trace_key(trace):
    return [(e.eval_index, e.objective, e.gradient_norm, e.step_accepted)
            for e in trace.entries]


def suite_optimizer_contract():
    t0 = time.perf_counter()
    checks = []
    worst_violation = -math.inf
    deterministic = True
    for seed in (0, 1, 2):
        train, _ = gen_xsinx3(seed=seed)
        opts = OptOptions(max_evals=120, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inits = init_pool(train.X, train.y, 10, seed=seed, opts=opts)
            runs = [train_sequential(train.X, train.y, inits[0],
                                     ModelVariant.FINITE, opts)
                    for _ in range(2)]
        for m, trace in runs:
            acc = trace.accepted_objectives()
            if len(acc) > 1:
                worst_violation = max(worst_violation,
                                      float(np.max(np.diff(acc))))
        if _trace_key(runs[0][1]) != _trace_key(runs[1][1]):
            deterministic = False
    checks.append(_check(
        "accepted-steps-monotone", worst_violation <= 1e-12,
        f"max increase {worst_violation:.3g}"))
    checks.append(_check("traces-deterministic", deterministic,
                         "identical traces across repeated seeded runs"))
    return _verdict("optimizer-contract", checks, t0, 120.0)


# ---------------------------------------------------------------------------
# 9. metrics units

def suite_metrics_units():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    y = rng.standard_normal(100)
    ybar = float(np.mean(y))
    checks = [
        _check("nmse-perfect-prediction-0", nmse(y, y, ybar) == 0.0),
        _check("nmse-mean-predictor-1",
               abs(nmse(y, np.full_like(y, ybar), ybar) - 1.0) <= 1e-12),
        _check("mnlp-unit-variance-halflog2pi",
               abs(mnlp(y, y, np.ones_like(y)) - 0.5 * math.log(2 * math.pi))
               <= 1e-12),
    ]
    return _verdict("metrics-units", checks, t0, 10.0)


# ---------------------------------------------------------------------------
# registry

SUITES = {
    "gradients": suite_gradients,
    "lowrank": suite_lowrank,
    "nystrom-equivalence": suite_nystrom_equivalence,
    "table1-ds2": suite_table1_ds2,
    "dataset1-analog": suite_dataset1_analog,
    "plus-variance": suite_plus_variance,
    "complexity": suite_complexity,
    "optimizer-contract": suite_optimizer_contract,
    "metrics-units": suite_metrics_units,
}

# one suite per acceptance criterion, in order
CRITERIA = ["gradients", "lowrank", "nystrom-equivalence", "table1-ds2",
            "dataset1-analog", "plus-variance", "complexity",
            "optimizer-contract", "metrics-units"]


def run_suite(name: str) -> dict:
    if name not in SUITES:
        raise UnknownSuite(f"unknown suite {name!r}; known: {sorted(SUITES)}")
    return SUITES[name]()


def main(argv=None):
    parser = argparse.ArgumentParser(prog="eigengp-harness")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one suite (or 'all')")
    p.add_argument("suite")
    p.add_argument("--out", help="write the JSON verdict here")
    args = parser.parse_args(argv)

    names = CRITERIA if args.suite == "all" else [args.suite]
    reports = []
    try:
        for name in names:
            report = run_suite(name)
            reports.append(report)
            status = "PASS" if report["passed"] else "FAIL"
            print(f"{status} {name} ({report['seconds']:.1f}s)")
            for c in report["checks"]:
                mark = "ok" if c["passed"] else "FAIL"
                print(f"  [{mark}] {c['name']}: {c['detail']}")
    except UnknownSuite as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(reports if args.suite == "all" else reports[0], fh,
                      indent=2)
    return 0 if all(r["passed"] for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
