import numpy as np
import pytest

from gwsteer import DCAConfig, SystemParams, solve_gw_steering

REF_UNCONTROLLED_GGW2 = 6711.44
REF_THETA_GW = 1.20

_criteria = []


def example_system(**overrides):
    kw = dict(
        A=np.array([[1.0, 0.1], [-0.3, 1.0]]),
        B=np.array([[0.7], [0.4]]),
        W=0.5 * np.eye(2),
        R=np.array([[1.0]]),
        N=10,
        Sigma0=3.0 * np.eye(2),
    )
    kw.update(overrides)
    return SystemParams(**kw)


def random_spd(rng, n, floor=0.0, scale=1.0):
    L = scale * rng.standard_normal((n, n))
    return L @ L.T + floor * np.eye(n)


def random_problem(seed):
    """Well-posed random steering problem: invertible A, W >= 0.1 I, PD Sigma0."""
    rng = np.random.default_rng(seed)
    nx = int(rng.choice([2, 3]))
    nu = int(rng.choice([1, 2]))
    N = int(rng.choice([5, 10]))
    A = np.eye(nx) + 0.3 * rng.standard_normal((nx, nx))
    while abs(np.linalg.det(A)) < 0.2:
        A = np.eye(nx) + 0.3 * rng.standard_normal((nx, nx))
    params = SystemParams(
        A=A,
        B=rng.standard_normal((nx, nu)),
        W=random_spd(rng, nx, floor=0.1, scale=0.3),
        R=np.eye(nu),
        N=N,
        Sigma0=random_spd(rng, nx, floor=1.0),
    )
    target = random_spd(rng, nx)
    lam = float(10 ** rng.uniform(-1, 1))
    return params, target, lam


@pytest.fixture(scope="session")
def example_params():
    return example_system()


@pytest.fixture(scope="session")
def ellipse_target():
    return np.diag([2.0, 0.5])


@pytest.fixture(scope="session")
def example_dca(example_params, ellipse_target):
    return solve_gw_steering(example_params, ellipse_target, 1.0)


@pytest.fixture(scope="session")
def random_suite():
    """Twenty random problems solved by DCA, with every iteration's linearization recorded."""
    suite = []
    for seed in range(20):
        params, target, lam = random_problem(seed)
        subproblems = []
        result = solve_gw_steering(
            params, target, lam, DCAConfig(max_iters=200), callback=lambda it, rec, sol: subproblems.append(sol)
        )
        suite.append((seed, params, target, lam, result, subproblems))
    return suite


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, printed in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _criteria.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_criteria):
            terminalreporter.write_line(line)
