import pytest

from eigengp.harness import CRITERIA, SUITES, UnknownSuite, main, run_suite


def test_registry_is_exhaustive():
    assert len(CRITERIA) == 9
    assert set(CRITERIA) == set(SUITES)
    assert len(set(CRITERIA)) == len(CRITERIA)


def test_unknown_suite_raises():
    with pytest.raises(UnknownSuite):
        run_suite("not-a-suite")


def test_report_shape():
    report = run_suite("metrics-units")
    assert report["suite"] == "metrics-units"
    assert isinstance(report["passed"], bool)
    assert any(c["name"] == "runtime-budget" for c in report["checks"])


def test_main_runs_single_suite(capsys):
    assert main(["run", "metrics-units"]) == 0
    out = capsys.readouterr().out
    assert "metrics-units" in out
    assert "PASS" in out
