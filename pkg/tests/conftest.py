import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# criterion number -> list of (part, passed, detail), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def report():
    """Record one acceptance check and echo it as a PASS/FAIL line."""
    def record(criterion, part, passed, detail=""):
        ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {criterion} [{part}] {detail}")
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        failed = [p for p, ok, _ in parts if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"{status} criterion {criterion:2d}: {len(parts) - len(failed)}/{len(parts)} checks"
        if failed:
            line += " (failing: " + ", ".join(failed) + ")"
        terminalreporter.write_line(line)
        for part, ok, detail in parts:
            terminalreporter.write_line(f"    {'ok  ' if ok else 'FAIL'} {part}: {detail}")
