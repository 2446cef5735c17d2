"""Shared fixtures: small problems and their reference matrices."""

import numpy as np
import pytest

from ibf import Box, build_preliminary, make_plan, make_problem
from ibf.kernels import kernel_matrix


def plan_for(transform, N, q, seed=0, depth=None):
    prob = make_problem(transform, N, seed)
    return prob, make_plan(prob.spec, prob.x, prob.xi, q, prob.x_domain, prob.xi_domain, depth)


def line_plan(spec, N, q, x=None, depth=None):
    """1-d plan on the standard grids, with optional custom space points."""
    if x is None:
        x = np.arange(N) / N
    xi = np.arange(-N // 2, N // 2, dtype=float)
    plan = make_plan(spec, x, xi, q, Box.from_bounds(0, 1), Box.from_bounds(-N / 2, N / 2), depth)
    return x, xi, plan


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture(scope="session")
def fio256_q6():
    prob, plan = plan_for("fio1d", 256, 6)
    return prob, plan, build_preliminary(plan)


@pytest.fixture(scope="session")
def dense_fio256(fio256_q6):
    prob, _, _ = fio256_q6
    return kernel_matrix(prob.spec, prob.x, prob.xi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, reported at the end of the run
ACCEPTANCE_RESULTS = {}


def record_criterion(number, ok, detail):
    line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
