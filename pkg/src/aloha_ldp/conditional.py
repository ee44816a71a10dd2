"""Typical attempt rate given an atypical throughput, for the local rule.

Conditioned on S_N / N close to s, A_N / N concentrates at a_p(s), the
minimizer over a of inf_r I_{L,IB}(a, s, r). At that minimizer the dual B
vanishes, so a_p(s) = d_B phi(0, C) where C solves d_C phi(0, C) = s, with

    phi(B, C) = log( sum_{k<=kappa} q_k e^{(B+C)k} + sum_{k>kappa} q_k e^{Bk} ).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import ParameterError, SolverError
from .lln import typical_ib
from .optimizer import optimal_a_star
from .prob_core import poisson_cutoff, poisson_logpmf
from .rate_ib import rate_l_ib_min_r


class Side(enum.Enum):
    SAME_SIDE = "same_side"
    OPPOSITE_SIDE = "opposite_side"
    AT_OPTIMUM = "at_optimum"


class Position(enum.Enum):
    ABOVE = "above"
    BELOW = "below"
    AT = "at"


@dataclass(frozen=True)
class ConditionalSolution:
    s: float
    a_p_s: float
    C: float
    B_residual: float
    side: Position
    iterations: int = 0


def _terms(bp: float, kappa: int, B: float, C: float, tail_tol: float = 1e-14):
    """k, log q_k, head indicator on a support adequate for the tilt."""
    lam_t = bp * math.exp(min(B, 700.0))
    K = max(kappa + 1, poisson_cutoff(lam_t, tail_tol))
    while True:
        k = np.arange(K + 1)
        head = k <= kappa
        log_w = poisson_logpmf(k, bp) + B * k + C * k * head
        log_z = logsumexp(log_w)
        log_tail = bp * math.expm1(B) + stats.poisson.logsf(K, lam_t)
        if log_tail - log_z < math.log(tail_tol):
            return k, head, log_w, log_z
        K *= 2


def phi(bp: float, kappa: int, B: float, C: float):
    """(phi, gradient, Hessian) in the coordinates (B, C)."""
    if not bp > 0:
        raise ParameterError("bp must be positive")
    k, head, log_w, log_z = _terms(bp, kappa, B, C)
    w = np.exp(log_w - log_z)
    F = np.column_stack([k, k * head]).astype(float)
    mean = w @ F
    hess = (F * w[:, None]).T @ F - np.outer(mean, mean)
    return float(log_z), mean, hess


def _solve_c(bp: float, kappa: int, s: float, tol: float = 1e-12, max_iter: int = 200):
    """Newton on the increasing map C -> d_C phi(0, C), safeguarded by a bracket."""
    lo, hi = -math.inf, math.inf
    C = 0.0
    for it in range(1, max_iter + 1):
        _, grad, hess = phi(bp, kappa, 0.0, C)
        g = grad[1] - s
        if abs(g) < tol * max(1.0, s):
            return C, grad, it
        if g > 0:
            hi = C
        else:
            lo = C
        step = -g / hess[1, 1] if hess[1, 1] > 0 else math.nan
        nxt = C + step
        if not (math.isfinite(nxt) and lo < nxt < hi):
            if math.isfinite(lo) and math.isfinite(hi):
                nxt = 0.5 * (lo + hi)
            else:
                nxt = C + (1.0 if g < 0 else -1.0) * max(1.0, abs(C))
        C = nxt
    raise SolverError(f"d_C phi(0, C) = {s} not reached")


def conditional_attempts(bp: float, kappa: int, s: float, check_b: bool = True) -> ConditionalSolution:
    """a_p(s) together with the dual C; ``B_residual`` is |B| re-solved at (a_p(s), s)."""
    if not bp > 0:
        raise ParameterError("bp must be positive")
    if not 0 < s < kappa:
        raise ParameterError("s must lie in (0, kappa)")
    C, grad, it = _solve_c(bp, kappa, s)
    a = float(grad[0])
    b_res = abs(rate_l_ib_min_r(bp, kappa, a, s).B) if check_b else math.nan
    if abs(a - bp) <= 1e-12 * bp:
        pos = Position.AT
    else:
        pos = Position.ABOVE if a > bp else Position.BELOW
    return ConditionalSolution(s=s, a_p_s=a, C=C, B_residual=b_res, side=pos, iterations=it)


def slope_at_typical(bp: float, kappa: int) -> float:
    """a_p'(s_p) = Cov(k, k1{k<=kappa}) / Var(k1{k<=kappa}) under Poi_bp."""
    _, _, hess = phi(bp, kappa, 0.0, 0.0)
    return float(hess[0, 1] / hess[1, 1])


def sign_diagnostic(b: float, p: float, kappa: int, s: float, radius: float = 0.02) -> Side:
    """Whether a_p(s) - bp has the same sign as s - s_p.

    The dichotomy is only local; ``radius`` (relative to s_p) is the
    neighborhood the caller vouches for, and leaving it only warns.
    """
    bp = b * p
    s_p = typical_ib(b, p, kappa).s
    if abs(s - s_p) > radius * s_p * (1 + 1e-9):
        warnings.warn(f"s={s} is outside the {radius:g} neighborhood of s_p={s_p}", stacklevel=2)
    if s == s_p:
        raise ParameterError("s equals s_p; there is no deviation to classify")
    a_star = optimal_a_star(kappa).a_star
    if abs(bp - a_star) <= 1e-9 * a_star:
        return Side.AT_OPTIMUM
    sol = conditional_attempts(bp, kappa, s, check_b=False)
    same = (sol.a_p_s - bp) * (s - s_p) > 0
    return Side.SAME_SIDE if same else Side.OPPOSITE_SIDE
