"""Evaluation metrics: normalized mean squared error and mean negative log
predictive probability."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ZeroDenominator(Exception):
    pass


class NonPositiveVariance(Exception):
    pass


class NmseDenominator(Enum):
    # conventional: normalize by the spread of the targets around the
    # training mean
    STANDARD = "standard"
    # literal printed form: normalize by the spread of the predictions
    # around the training mean (divides by zero for a constant predictor)
    PAPER_LITERAL = "paper-literal"


def nmse(y, mu, ybar_train: float,
         denominator: NmseDenominator = NmseDenominator.STANDARD) -> float:
    y = np.asarray(y, dtype=float).ravel()
    mu = np.asarray(mu, dtype=float).ravel()
    if y.shape != mu.shape:
        raise ValueError("y and mu must have equal lengths")
    num = float(np.sum((y - mu) ** 2))
    if denominator is NmseDenominator.STANDARD:
        den = float(np.sum((y - ybar_train) ** 2))
    else:
        den = float(np.sum((mu - ybar_train) ** 2))
    if den <= 0:
        raise ZeroDenominator(
            f"NMSE denominator is {den} in {denominator.value} mode"
        )
    return num / den


def mnlp(y, mu, var) -> float:
    y = np.asarray(y, dtype=float).ravel()
    mu = np.asarray(mu, dtype=float).ravel()
    var = np.asarray(var, dtype=float).ravel()
    if not (y.shape == mu.shape == var.shape):
        raise ValueError("y, mu, var must have equal lengths")
    if np.any(var <= 0):
        raise NonPositiveVariance("predictive variances must be positive")
    n = y.shape[0]
    return float(
        0.5 / n * np.sum((y - mu) ** 2 / var + np.log(var) + math.log(2 * math.pi))
    )


@dataclass
class EvalReport:
    nmse: float
    mnlp: float
    n_test: int
    nmse_denominator: str = NmseDenominator.STANDARD.value
    wall_time_train: float = 0.0
    wall_time_predict: float = 0.0
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "nmse": self.nmse,
            "mnlp": self.mnlp,
            "n_test": self.n_test,
            "nmse_denominator": self.nmse_denominator,
            "wall_time_train": self.wall_time_train,
            "wall_time_predict": self.wall_time_predict,
            "provenance": self.provenance,
        }
