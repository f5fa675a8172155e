import numpy as np
import pytest

from ctregions.dtmpqp import solve_explicit
from ctregions.model import LtiSystem, demo_system
from ctregions.partition import compute_partition

# (criterion, passed, detail) collected by the acceptance suite
ACCEPTANCE = []


def record(number, passed, detail):
    ACCEPTANCE.append((number, bool(passed), detail))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} | {detail}")


def random_stable(rng, n, t_f=5.0, margin=0.1):
    while True:
        A = rng.normal(size=(n, n))
        if np.linalg.eigvals(A).real.max() < -margin:
            break
    B = rng.normal(size=n)
    return LtiSystem(A, B, t_f, 0.4, -np.ones(n), np.ones(n))


@pytest.fixture(scope="session")
def demo():
    return demo_system()


@pytest.fixture(scope="session")
def partition(demo):
    return compute_partition(demo, strict=False)


@pytest.fixture(scope="session")
def sol5(demo):
    return solve_explicit(demo, 5)


@pytest.fixture(scope="session")
def sol10(demo):
    return solve_explicit(demo, 10)
