import numpy as np
import pytest

from twolayer import PhaseType, Problem, build_model, solve

# Weibull(2, 1) phase-type fit used for the reference numerical study
WEIBULL_T = np.array([
    [-5.6546, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.6066, -5.6847, 0.0, 0.0166, 0.0089, 5.0526],
    [0.2156, 4.3616, -5.6485, 0.9162, 0.1424, 0.0126],
    [5.6247, 0.0, 0.0, -5.6786, 0.0, 0.0],
    [0.0107, 0.0, 0.0, 5.7247, -5.7420, 0.0],
    [0.0136, 0.0, 0.0, 0.0024, 5.7022, -5.7183],
])
WEIBULL_ALPHA = np.array([0.0, 0.0007, 0.9961, 0.0, 0.0001, 0.0031])


def weibull_model(delta=1.0, sigma=0.2):
    return build_model(0.5, sigma, 2.0, PhaseType(WEIBULL_ALPHA, WEIBULL_T), delta)


def weibull_problem(rho_bar=0.0, beta=0.5, delta=1.0, q=0.05):
    return Problem.normalized(weibull_model(delta), q, beta, rho_bar * delta / q)


def exp_model(c_Y=1.0, kappa=4.0, omega=2.0, delta=0.1, sigma=0.0):
    return build_model(c_Y, sigma, kappa, PhaseType.exponential(omega), delta)


def exp_problem(rho=0.0, beta=0.6, q=0.2, **kw):
    return Problem.normalized(exp_model(**kw), q, beta, rho)


@pytest.fixture(scope="session")
def appendix():
    return weibull_problem()


@pytest.fixture(scope="session")
def appendix_solution(appendix):
    return solve(appendix)


@pytest.fixture(scope="session")
def expo():
    return exp_problem()


@pytest.fixture(scope="session")
def expo_rho1():
    return exp_problem(rho=1.0)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
