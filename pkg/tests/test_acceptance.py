"""Acceptance suite: every criterion at its stated tolerance and time budget.

Each criterion prints one ``[PASS]``/``[FAIL]`` line; the lines are also
repeated in the pytest terminal summary so they survive output capture.
"""

import pytest

from degentrace.acceptance import CRITERIA

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, acceptance_lines):
    res = CRITERIA[number]()
    line = res.line()
    print(line)
    acceptance_lines.append(line)
    for c in res.checks:
        print(f"    {c.check_id} {c.status} measured={c.measured!r} expected={c.expected!r} "
              f"tolerance={c.tolerance!r} {c.detail}")
    assert res.passed, line
