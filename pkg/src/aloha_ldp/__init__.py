"""Slotted ALOHA simulation and large-deviation rate functions.

Four protocols are covered: local (L) or global (G) access rules combined
with multi-channel (MC) or interference-based (IB) success rules.
"""

from .errors import BudgetError, ParameterError, SolverError
from .prob_core import FinitePmf, TruncationPolicy, binomial_pmf, kl_divergence, poisson_pmf, tilt
from .simulator import AccessRule, BatchStats, ModelParams, RunSummary, Scenario, run_batch, simulate_run
from .lln import TypicalPoint, throughput_sweep, typical_ib, typical_mc
from .rate_ib import (
    DualSolutionIB,
    attempts_rate,
    contraction_rate_s,
    rate_g_ib,
    rate_l_ib,
    rate_l_ib_alternate,
    rate_l_ib_min_r,
)
from .rate_mc import DualSolutionMC, rate_g_mc, rate_l_mc, reference_measure_m
from .optimizer import OptimalP, optimal_a_star, sp_derivative
from .conditional import ConditionalSolution, Side, conditional_attempts, phi, sign_diagnostic
from .exact_oracle import SlotLaw, convolve_n, empirical_rate, slot_law
from .rare_event import ISEstimate, is_estimate

__version__ = "0.1.0"

__all__ = [
    "AccessRule",
    "BatchStats",
    "BudgetError",
    "ConditionalSolution",
    "DualSolutionIB",
    "DualSolutionMC",
    "FinitePmf",
    "ISEstimate",
    "ModelParams",
    "OptimalP",
    "ParameterError",
    "RunSummary",
    "Scenario",
    "Side",
    "SlotLaw",
    "SolverError",
    "TruncationPolicy",
    "TypicalPoint",
    "attempts_rate",
    "binomial_pmf",
    "conditional_attempts",
    "contraction_rate_s",
    "convolve_n",
    "empirical_rate",
    "is_estimate",
    "kl_divergence",
    "optimal_a_star",
    "phi",
    "poisson_pmf",
    "rate_g_ib",
    "rate_g_mc",
    "rate_l_ib",
    "rate_l_ib_alternate",
    "rate_l_ib_min_r",
    "rate_l_mc",
    "reference_measure_m",
    "run_batch",
    "sign_diagnostic",
    "simulate_run",
    "slot_law",
    "sp_derivative",
    "throughput_sweep",
    "tilt",
    "typical_ib",
    "typical_mc",
]
