"""Acceptance gate: every release criterion must pass at its stated
tolerance and runtime budget.

Each criterion prints one PASS/FAIL line; run with `pytest -v -s` (or read
the captured stdout of a failure) to see them all.
"""

import json

import pytest

from eigengp.harness import CRITERIA, run_suite


@pytest.mark.parametrize("criterion", CRITERIA)
def test_acceptance(criterion):
    report = run_suite(criterion)
    status = "PASS" if report["passed"] else "FAIL"
    print(f"[acceptance] {criterion}: {status} ({report['seconds']:.1f}s)")
    assert report["passed"], json.dumps(report, indent=2, default=str)
