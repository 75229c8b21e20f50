import pytest

from budgetbo.learners import SyntheticProblem
from budgetbo.planner import BAPIConfig, OptState, initial_design


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


@pytest.fixture
def small_problem():
    return SyntheticProblem(dim=2, t_max=10, seed=3)


@pytest.fixture
def warm_state(small_problem):
    """Optimizer state after the initial design, with a large budget."""
    state = OptState(small_problem, 1e6, BAPIConfig(n_init=4), seed=0)
    initial_design(state)
    state.refit(optimize=True)
    return state
