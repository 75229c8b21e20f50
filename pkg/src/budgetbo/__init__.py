"""Budget-aware non-myopic Bayesian optimization for iterative learners."""
from ._accel import BACKEND
from .acquisition import FantasyBatch, ei, expected_improvement, greedy_append, greedy_batch, qei, qei_estimate
from .baselines import run_baseline
from .cost import CostModel, RestartState, incremental_cost, predict_cost
from .evaluator import EvalOutcome, evaluate, select_curve_points
from .exceptions import (
    BackendError,
    ConfigError,
    IllConditionedError,
    NotFoundError,
    ParameterDomainError,
    UnsupportedOperationError,
)
from .gp import GPModel, PosteriorSummary, fit_hyperparams, log_marginal_likelihood, posterior
from .harness import RunConfig, emit_plot, run_experiment
from .kernels import RBF, ExpDecay, Linear, Product, kernel_eval, kernel_grad_t, kernel_hess_tt
from .learners import CurveTable, SyntheticProblem, synth_eval, table_eval
from .monotone import (
    ConstrainedPosterior,
    ConstraintSpec,
    MonotoneGP,
    build_virtual_locations,
    constrained_posterior,
    constraint_probability,
    monotone_constraint,
    sample_constraint,
)
from .planner import (
    BAPIConfig,
    BudgetLedger,
    Horizon,
    HorizonEntry,
    OptState,
    bapi_run,
    build_horizon,
    conservative_stopping,
    select_query,
)

__version__ = "0.1.0"
