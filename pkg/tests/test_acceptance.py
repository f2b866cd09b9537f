"""One test per acceptance criterion; each prints its pass/fail line.

Run just these with ``pytest tests/test_acceptance.py -s`` or ``secknn selftest``.
"""

import pytest

from secknn.acceptance import CHECKS

# wall-clock limits (seconds) stated with some of the criteria
TIME_LIMITS = {1: 60.0, 2: 60.0, 5: 120.0}


@pytest.mark.slow
@pytest.mark.parametrize("number,check", list(enumerate(CHECKS, start=1)),
                         ids=[f"{i}-{c.__name__}" for i, c in enumerate(CHECKS, start=1)])
def test_criterion(number, check, capsys):
    res = check()
    with capsys.disabled():
        print("\n" + res.line())
    assert res.number == number
    assert res.passed, res.line()
    if number in TIME_LIMITS:
        assert res.seconds < TIME_LIMITS[number], f"took {res.seconds:.1f}s, limit {TIME_LIMITS[number]}s"
