import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lpgauss.bodies import square
from lpgauss.measures import lebesgue

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def Q():
    return square()


@pytest.fixture
def leb2():
    return lebesgue(2, 2)


@pytest.fixture
def leb3():
    return lebesgue(3, 1)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


@pytest.fixture
def criterion():
    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (
            f" ({detail})" if detail else "")
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
