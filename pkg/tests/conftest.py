import math

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

TWO_PI = 2 * math.pi


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """``report(cid, checks)``: record one PASS/FAIL line and assert all checks hold."""
    def report(cid, checks):
        failed = [name for name, ok in checks.items() if not ok]
        detail = "; ".join(f"{name}={'ok' if ok else 'FAIL'}" for name, ok in checks.items())
        line = f"ACCEPTANCE {cid} {'FAIL' if failed else 'PASS'}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print("\n" + line)
        assert not failed, f"criterion {cid}: failed sub-checks {failed}"
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
