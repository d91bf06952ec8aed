"""Sparse Gaussian-process regression with a Nystrom eigenfunction basis.

The model represents the latent function as a finite sum of kernel
eigenfunctions anchored at learned inducing points, which keeps training
and prediction linear in the number of data points.  Submodules:

- kernel:     ARD squared-exponential kernel and its derivative bundles
- eigenbasis: eigendecomposition of K_BB into scaled basis functions
- model:      hyperparameters, fitting, prediction, (de)serialization
- evidence:   log marginal likelihood and its analytic gradients
- optimizer:  conjugate-gradient evidence maximization and training drivers
- baselines:  full GP, plain Nystrom predictor, k-means, initializations
- dataio:     synthetic generators, CSV loading, splits, standardization
- metrics:    NMSE and MNLP
- cli:        command-line front end
- harness:    acceptance suites
"""

__version__ = "0.1.0"

from .kernel import KernelParams, kernel_matrix
from .eigenbasis import EigenBasis, build_basis, default_weights, eval_phi
from .model import (
    HyperParams,
    ModelVariant,
    PredictiveDistribution,
    TrainedModel,
    fit,
    load_model,
    predict,
    save_model,
)
from .evidence import GradMode, evidence_and_grad, log_evidence
from .optimizer import (
    OptOptions,
    OptTrace,
    finite_diff_check,
    train_joint,
    train_phase1,
    train_restarts,
    train_sequential,
)
from .baselines import (
    full_gp_predict,
    full_gp_train,
    init_pool,
    kmeans,
    nystrom_gp_predict,
    subset_gp_init,
)
from .metrics import NmseDenominator, mnlp, nmse

__all__ = [
    "__version__",
    "KernelParams", "kernel_matrix",
    "EigenBasis", "build_basis", "default_weights", "eval_phi",
    "HyperParams", "ModelVariant", "PredictiveDistribution", "TrainedModel",
    "fit", "predict", "save_model", "load_model",
    "GradMode", "evidence_and_grad", "log_evidence",
    "OptOptions", "OptTrace", "finite_diff_check",
    "train_sequential", "train_joint", "train_phase1", "train_restarts",
    "full_gp_train", "full_gp_predict", "init_pool", "kmeans",
    "nystrom_gp_predict", "subset_gp_init",
    "NmseDenominator", "nmse", "mnlp",
]
