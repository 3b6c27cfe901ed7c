import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

SIGMA_INIT = np.array([[4.0, np.sqrt(11.0)], [np.sqrt(11.0), 3.0]])
SIGMA_FIN = np.array([[2.0, -1.0], [-1.0, 1.0]])
EXAMPLE_B = np.eye(2) / 5


def random_spd(rng, n, lo=0.5, hi=4.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


@pytest.fixture(scope='session')
def example():
    from attnsteer.model import SteeringProblem
    return SteeringProblem(SIGMA_INIT, SIGMA_FIN, EXAMPLE_B, 1.0, 0.5)


@pytest.fixture(scope='session')
def example_half(example):
    from attnsteer.fonc_bvp import solve_fonc
    return solve_fonc(example)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_REPORT = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_REPORT:
        terminalreporter.section('acceptance criteria')
        for line in sorted(ACCEPTANCE_REPORT,
                           key=lambda s: int(s.split()[1].strip('AC:'))):
            terminalreporter.write_line(line)
