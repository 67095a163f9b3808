"""One test per acceptance criterion; each prints its PASS/FAIL line."""
from __future__ import annotations

import pytest

from annealed_lyapunov.acceptance import CRITERIA


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{c.number:02d}_{c.__name__}" for c in CRITERIA])
def test_criterion(criterion, capsys):
    result = criterion()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
