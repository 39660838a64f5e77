import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "flaglab", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("flaglab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["SL2R", "SL2C"])
def backend(request):
    from flaglab.group import Backend

    return Backend(request.param)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(number: int, name: str, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {name}: {detail}"
        lines.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
