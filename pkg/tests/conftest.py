import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rand_nchw(rng, n, c, h, w, dtype=np.float32, lo=-1.0, hi=1.0):
    return rng.uniform(lo, hi, size=(n, c, h, w)).astype(dtype)


ACCEPTANCE_PREFIX = "tests/test_acceptance.py::test_criterion_"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, printed after the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in nodeid:
                name = nodeid.split("::", 1)[1]
                lines.append((name, status.upper()))
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, status in sorted(lines):
        terminalreporter.write_line(f"{status:6s} {name}")
