import math

import numpy as np
import pytest

from eigengp.metrics import (
    EvalReport,
    NmseDenominator,
    NonPositiveVariance,
    ZeroDenominator,
    mnlp,
    nmse,
)


def test_nmse_standard_hand_computed():
    y = np.array([1.0, 2.0, 3.0])
    mu = np.array([1.5, 2.0, 2.5])
    ybar = 2.0
    # num = 0.25 + 0 + 0.25 = 0.5; den = 1 + 0 + 1 = 2
    assert nmse(y, mu, ybar) == pytest.approx(0.25)


def test_nmse_paper_literal_uses_prediction_spread():
    y = np.array([1.0, 2.0, 3.0])
    mu = np.array([1.5, 2.0, 2.5])
    ybar = 2.0
    # den = 0.25 + 0 + 0.25 = 0.5
    val = nmse(y, mu, ybar, denominator=NmseDenominator.PAPER_LITERAL)
    assert val == pytest.approx(1.0)


def test_nmse_constant_predictor_blows_up_in_paper_literal_mode():
    y = np.array([1.0, 2.0, 3.0])
    mu = np.full(3, 2.0)
    assert np.isfinite(nmse(y, mu, 2.0))
    with pytest.raises(ZeroDenominator):
        nmse(y, mu, 2.0, denominator=NmseDenominator.PAPER_LITERAL)


def test_nmse_scale_invariance_standard():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(50)
    mu = y + 0.1 * rng.standard_normal(50)
    v1 = nmse(y, mu, 0.0)
    v2 = nmse(10 * y, 10 * mu, 0.0)
    assert v1 == pytest.approx(v2)


def test_mnlp_gaussian_oracle():
    y = np.array([0.0, 1.0])
    mu = np.array([0.0, 0.0])
    var = np.array([1.0, 4.0])
    expected = 0.5 * np.mean(
        (y - mu) ** 2 / var + np.log(var) + math.log(2 * math.pi))
    assert mnlp(y, mu, var) == pytest.approx(expected)


def test_mnlp_perfect_unit_prediction():
    y = np.zeros(10)
    assert mnlp(y, y, np.ones(10)) == pytest.approx(0.5 * math.log(2 * math.pi))


def test_mnlp_rejects_nonpositive_variance():
    with pytest.raises(NonPositiveVariance):
        mnlp(np.zeros(2), np.zeros(2), np.array([1.0, 0.0]))


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        nmse(np.zeros(3), np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        mnlp(np.zeros(3), np.zeros(3), np.ones(2))


def test_eval_report_to_dict():
    r = EvalReport(nmse=0.1, mnlp=0.2, n_test=5)
    d = r.to_dict()
    assert d["nmse"] == 0.1
    assert d["nmse_denominator"] == "standard"
    assert d["n_test"] == 5
