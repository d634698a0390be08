import numpy as np
import pytest

from hogwild_lab.data import Dataset
from hogwild_lab.objectives import Objective


def random_sparse(n, dim, density, seed, kind="logistic"):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, dim)) * (rng.random((n, dim)) < density)
    X[np.arange(n), rng.integers(0, dim, n)] = rng.standard_normal(n)
    if kind == "logistic":
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    else:
        y = rng.standard_normal(n)
    return Dataset.from_dense(X, y)


@pytest.fixture(scope="session")
def logistic_fixture():
    """200-example sparse logistic problem shared by several tests."""
    return Objective("logistic", random_sparse(200, 30, 0.15, seed=11))


@pytest.fixture(scope="session")
def ls_fixture():
    return Objective("least_squares", random_sparse(120, 20, 0.2, seed=5, kind="ls"), lam=0.05)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; all lines are repeated
    in the terminal summary so they survive output capture."""
    def emit(number, ok, detail, elapsed, limit):
        within = elapsed < limit
        status = "PASS" if ok and within else "FAIL"
        line = f"ACCEPTANCE {number:>2}: {status}  {detail}  [{elapsed:.1f}s < {limit:g}s: {within}]"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok and within
    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
