"""Momentum-accelerated, variance-reduced solvers for stochastic composition problems.

Minimise ``Phi(x) = f(g(x)) + r(x)`` where ``g`` (and possibly ``f``) is an
average or expectation of sampled components.
"""
__version__ = "0.1.0"

from ._accel import backend_name
from .core import (ConfigurationError, SequencingError, LipschitzProfile, CompositionProblem, full_inner,
                   full_gradient, objective, smooth_objective)
from .prox import L1, NoRegularizer, prox, gradient_mapping
from .estimators import BatchPlan, EstimatorState, refresh_checkpoint, recursive_update, approx_gradient, variance_bound
from .solvers import (MomentumSchedule, RestartPolicy, SolverConfig, SolverOutput, IterationRecord, run_mvrc1,
                      run_mvrc2, run_with_restarts, theorem_beta, theorem_beta_mvrc2, theorem_batch_plan,
                      graddom_restart_plan)
from .baselines import BaselineConfig, run_scgd, run_ascpg, run_civr
from .problems import (PortfolioProblem, SpamProblem, LinearCompositionProblem, SmoothSyntheticProblem,
                       OnlineShiftProblem, identity_quadratic, portfolio_objective, spam_objective,
                       synthetic_graddom_constant)
from .data import DataLoadError, Dataset, RngSpec, make_rng, load_csv, synth_portfolio, synth_housing
