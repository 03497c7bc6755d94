"""Failure-mode prediction and design repair for differentiable simulators.

The package alternates MCMC sampling over exogenous-disturbance and
design-parameter pseudo-posteriors, with gradients supplied by a built-in
reverse-mode differentiation engine that reaches through the simulators
(including an implicit power-flow solve).
"""

from . import autodiff
from .distributions import DiagonalGaussian, SmoothedUniformBox
from .estimators import AlternatingDescent, DomainRandomization, PredictRepair
from .orchestrator import (
    Population,
    PredictRepairConfig,
    RoundRecord,
    baseline_dr,
    baseline_gd,
    failure_log_density,
    predict_and_repair,
    repair_log_density,
    risk_adjusted_cost,
    select_best_design,
    tempering_schedule,
)
from .samplers import ChainState, KernelConfig, gd_step, mala_step, rmh_step, run_chain

__all__ = [
    "autodiff",
    "DiagonalGaussian", "SmoothedUniformBox",
    "PredictRepair", "DomainRandomization", "AlternatingDescent",
    "Population", "PredictRepairConfig", "RoundRecord",
    "predict_and_repair", "baseline_dr", "baseline_gd",
    "risk_adjusted_cost", "failure_log_density", "repair_log_density",
    "select_best_design", "tempering_schedule",
    "ChainState", "KernelConfig", "mala_step", "rmh_step", "gd_step", "run_chain",
]

__version__ = "0.1.0"
