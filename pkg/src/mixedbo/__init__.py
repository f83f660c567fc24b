"""Bayesian optimization over mixed discrete/continuous spaces with
probabilistic reparameterization of the discrete parameters."""

from .acqopt import AcqOptimizerConfig, CandidateResult, optimize
from .acquisition import AcquisitionFunction, evaluate, expected_improvement, ucb_beta, upper_confidence_bound
from .exceptions import *  # noqa: F401,F403
from .harness import ExperimentConfig, RunRecord, aggregate, compute_regret, export, run_bo, run_experiment
from .problems import Problem, get_problem
from .reparam import (BaselineState, BaseSampleSet, analytic_po, log_prob, mc_po, mc_po_grad, sample, saa_sample,
                      transform, update_baseline)
from .space import ParameterDescriptor, SearchSpace
from .surrogate import GPModel, KernelConfig, fit_gp, log_marginal_likelihood

__version__ = "0.1.0"
