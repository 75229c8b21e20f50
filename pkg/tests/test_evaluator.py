import numpy as np
import pytest

from budgetbo.evaluator import BUDGET, COMPLETED, EARLY, FAILED, block_size, evaluate, select_curve_points
from budgetbo.planner import BudgetLedger
from oracles import early_stop_scenario


class PeakVariance:
    """Stub model whose predictive variance peaks at chosen epochs."""

    def __init__(self, peaks, t_max):
        self.peaks, self.t_max = peaks, t_max

    def predict(self, Zs):
        t = np.rint(Zs[:, -1] * self.t_max)
        var = 0.1 + np.isin(t, self.peaks).astype(float)
        return np.zeros(len(Zs)), var


def test_select_points_short_curves():
    m = PeakVariance([], 20)
    assert select_curve_points(m, [0.5], [4], 20).tolist() == [0]
    assert select_curve_points(m, [0.5], [4, 8], 20).tolist() == [0, 1]
    assert select_curve_points(m, [0.5], [], 20).size == 0


def test_select_points_variance_peaks():
    epochs = np.arange(1, 21)
    idx = select_curve_points(PeakVariance([3, 11], 20), [0.5], epochs, 20)
    assert epochs[idx].tolist() == [3, 11, 20]


def test_select_points_ties_prefer_early_epochs():
    epochs = np.arange(1, 11)
    idx = select_curve_points(PeakVariance([], 10), [0.5], epochs, 10)
    assert epochs[idx].tolist() == [1, 2, 10]


def test_block_size():
    assert block_size(0.2, 20) == 4
    assert block_size(0.25, 10) == 3
    assert block_size(1.0, 7) == 7
    assert block_size(0.01, 10) == 1


@pytest.fixture(scope="module")
def plateau():
    return early_stop_scenario("plateau", 0)


def test_single_block_when_target_is_short(plateau):
    state, x = plateau
    out = evaluate(state.backend, x, 3, state)
    assert out.reason == COMPLETED
    assert out.epochs.tolist() == [1, 2, 3]
    assert out.checks == []


def test_never_trains_past_t_max(plateau):
    state, x = plateau
    out = evaluate(state.backend, x, 50, state, early_stop=False)
    assert out.final_epoch == state.t_max
    assert out.epochs.tolist() == list(range(1, state.t_max + 1))


def test_budget_stop_halts_at_next_checkpoint():
    state, x = early_stop_scenario("plateau", 1)
    state.ledger = BudgetLedger(6.0)
    out = evaluate(state.backend, x, 20, state, early_stop=False)
    assert out.reason == BUDGET
    # unit cost per epoch, blocks of 4: the second block overruns by 2
    assert out.final_epoch == 8
    assert state.ledger.spent == 8.0
    assert state.ledger.overrun <= block_size(state.config.p, state.t_max)


def test_resume_charges_only_new_epochs():
    state, x = early_stop_scenario("plateau", 2)
    first = evaluate(state.backend, x, 8, state, early_stop=False)
    state.record(first)
    second = evaluate(state.backend, x, 12, state, early_stop=False)
    assert second.start_epoch == 8
    assert second.epochs.tolist() == [9, 10, 11, 12]
    assert second.charged == pytest.approx(4.0)
    assert state.ledger.spent == pytest.approx(12.0)
    state.record(second)
    assert state.restart.paid(x)[0] == 12


def test_fully_trained_config_costs_nothing():
    state, x = early_stop_scenario("plateau", 3)
    state.record(evaluate(state.backend, x, 20, state, early_stop=False))
    spent = state.ledger.spent
    out = evaluate(state.backend, x, 20, state)
    assert out.curve == [] and state.ledger.spent == spent


def test_backend_failure_keeps_partial_curve(plateau):
    state, x = plateau

    class Flaky:
        def train(self, x, start, end):
            if start >= 4:
                raise RuntimeError("disk full")
            return state.backend.train(x, start, end)

    out = evaluate(Flaky(), x, 20, state, early_stop=False)
    assert out.reason == FAILED and out.failed
    assert out.final_epoch == 4
    assert isinstance(out.error, RuntimeError)


def _fires(check, state):
    return check["mean"] <= state.incumbent and check["sd_opt"] <= state.config.tau * check["sd_now"]


@pytest.mark.parametrize("kind", ["plateau", "late"])
def test_rule_fidelity(kind):
    for seed in range(3):
        state, x = early_stop_scenario(kind, seed)
        out = evaluate(state.backend, x, state.t_max, state)
        assert out.checks
        for c in out.checks:
            assert c["fired"] == _fires(c, state)
        # a stop never happens without a fired check, and a fired check always stops
        assert (out.reason == EARLY) == out.checks[-1]["fired"]
        assert not any(c["fired"] for c in out.checks[:-1])


def test_plateau_stops_early():
    stops = 0
    for seed in range(3):
        state, x = early_stop_scenario("plateau", seed)
        out = evaluate(state.backend, x, state.t_max, state)
        stops += out.reason == EARLY and out.final_epoch < 0.6 * state.t_max
    assert stops == 3


def test_late_bloomer_blocked_by_uncertainty():
    for seed in range(3):
        state, x = early_stop_scenario("late", seed)
        out = evaluate(state.backend, x, state.t_max, state)
        first = out.checks[0]
        assert first["sd_opt"] > state.config.tau * first["sd_now"]
        assert not first["fired"]
