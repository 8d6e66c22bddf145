"""Variance-reduced stochastic cubic-regularised policy gradient.

Exact oracles for small MDPs, unbiased gradient and Hessian-vector-product
estimators, cubic subproblem solvers, the variance-reduced driver with
REINFORCE and non-recursive baselines, and a PR / LCI evaluation harness.
"""

__version__ = "0.1.0"

from .baselines import BaselineConfig, reinforce_run, scrn_run
from .cubic import (CubicModel, SolverParams, cauchy_point, cubic_finalsolver, cubic_subsolver,
                    model_grad, model_value, oracle_global_max)
from .driver import HyperParams, compute_S_t, mu_diagnostic, vrscp_run, vrscp_step
from .env import (Trajectory, discounted_return, enumerate_exact, exact_dp, gridworld,
                  linear_gaussian, random_mdp, returns_to_go, sample_trajectory)
from .errors import ConfigError, EnumerationBudgetError, NumericError, OracleError, VrscpError
from .estimators import (EstimatorContext, HvpOperator, batch_mean_grad, batch_mean_hvp,
                         grad_estimate, hvp_estimate, phi_grad)
from .evaluation import PrReport, align_runs, lci, pr_metric
from .policy import GaussianLinear, GaussianMLP, SoftmaxTabular, make_policy
from .records import RunRecord
from .sources import SyntheticSource, TrajectorySource, hvp_correction, strict_saddle
