import numpy as np
import pytest

ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one acceptance line: record(k, ok, detail)."""
    def _record(k, ok, detail):
        ACCEPTANCE[k] = (bool(ok), detail)
        print(f"acceptance {k}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
