import numpy as np
import pytest
from hypothesis import settings

import lwis.learner
import lwis.selection

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES = []
SIMPLEX_LOG = {"updates": 0, "worst_sum_error": 0.0, "min_weight": 1.0}

_original_update = lwis.selection.lwis_update


def _checked_update(ledger, anchor, alpha_val, delta):
    out = _original_update(ledger, anchor, alpha_val, delta)
    w = out.weights
    err = abs(float(w.sum()) - 1.0)
    SIMPLEX_LOG["updates"] += 1
    SIMPLEX_LOG["worst_sum_error"] = max(SIMPLEX_LOG["worst_sum_error"], err)
    SIMPLEX_LOG["min_weight"] = min(SIMPLEX_LOG["min_weight"], float(w.min()))
    assert err <= 1e-12, f"weights sum to 1 + {err:.3e}"
    assert np.all(w > 0), "a weight reached zero"
    return out


@pytest.fixture(autouse=True)
def _simplex_guard(monkeypatch):
    """Every LWIS update made anywhere in the suite is checked for the simplex invariant."""
    monkeypatch.setattr(lwis.learner, "lwis_update", _checked_update)
    yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
