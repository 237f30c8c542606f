"""Acceptance criteria 1-13, one printed PASS/FAIL line each."""

import pytest

from heatchain.harness import checks

CRITERIA = {i + 1: fn for i, fn in enumerate(checks.ALL)}


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    res = CRITERIA[number]()
    assert res.number == number
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
