import numpy as np
import pytest

from splitpro.behavior import StateSpaceRep, random_state_space, ss_basis, simulate
from splitpro.lqt import LqtProblem
from splitpro.trajectory import Trajectory


@pytest.fixture
def integrator():
    return StateSpaceRep(np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]), np.array([[0.0]]))


def random_system(seed, n_max=6, m_max=2, p_max=2):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    p = int(rng.integers(1, p_max + 1))
    return random_state_space(rng, n, m, p)


def random_problem(seed, T_f=10, Phi=None, T_ini=None, **kw):
    """Random LQT instance with a feasible prefix and T_ini = lag."""
    sys_ = random_system(seed, **kw)
    rng = np.random.default_rng([seed, 99])
    T_ini = sys_.lag if T_ini is None else T_ini
    L = T_ini + T_f
    w_ini, _ = simulate(sys_, rng.uniform(-1, 1, (T_ini, sys_.m)), rng.uniform(-1, 1, sys_.n))
    w_ref = Trajectory(rng.uniform(-1, 1, sys_.q * T_f), sys_.q)
    Phi = np.eye(sys_.q) if Phi is None else Phi
    return sys_, LqtProblem(w_ini, w_ref, Phi, ss_basis(sys_, L), lag=sys_.lag)


# one summary line per acceptance criterion, printed after the run
CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
