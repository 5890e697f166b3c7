import numpy as np
import pytest

from dsfs.network import LoadProfileParams, assemble_compact, generate_feeder, toy_a, toy_b

DESK = dict(seed=7, n=12, m=18, T=2)


@pytest.fixture
def model_a():
    return toy_a()


@pytest.fixture
def model_b():
    return toy_b()


@pytest.fixture(scope="session")
def desk_specs():
    return generate_feeder(DESK["seed"], DESK["n"], DESK["m"], DESK["T"], LoadProfileParams())


@pytest.fixture(scope="session")
def desk_model(desk_specs):
    return assemble_compact(*desk_specs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def in_toy_b(x, tol=0.0):
    x = np.atleast_2d(x)
    return (np.abs(x[:, 0]) <= 1 + tol) & (np.abs(x[:, 1]) <= 1 + tol) & (np.abs(x[:, 0] + x[:, 1]) <= 1 + tol)


# one line per acceptance criterion, printed again in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
