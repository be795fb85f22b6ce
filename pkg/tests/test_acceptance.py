"""Acceptance criteria at their stated tolerances and wall-clock budgets.

One test per sub-case. Each prints its ``[PASS]``/``[FAIL]`` line, and the
collected lines are repeated in the terminal summary (see ``conftest.py``).
Failures are reported as they are; no tolerance here is looser than stated.
"""

import pytest

from stablegap.acceptance import SUBCASES

RESULTS: list = []


@pytest.mark.acceptance
@pytest.mark.parametrize("sub", SUBCASES, ids=[s.key for s in SUBCASES])
def test_criterion(sub):
    result = sub.run()
    RESULTS.append(result.line())
    print(result.line())
    assert result.ok, result.detail
    assert result.seconds <= result.budget, f"took {result.seconds:.1f}s, budget {result.budget:g}s"
