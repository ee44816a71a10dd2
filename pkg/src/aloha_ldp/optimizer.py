"""Access probability maximizing the interference-based throughput.

With a = bp the throughput is s(a) = a P(Poi_a <= kappa - 1), and

    s'(a) = P(Poi_a <= kappa - 1) - kappa Poi_a(kappa),

which is e^{-a}/(kappa-1)! times sum_{i<kappa} a^i (kappa-1)!/i! - a^kappa.
We work with the Poisson-scaled form throughout so large kappa is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ParameterError, SolverError
from .prob_core import poisson_logpmf, poisson_partial_sum

EPS = 1e-9


@dataclass(frozen=True)
class OptimalP:
    a_star: float
    p_star: float
    s_star: float
    kappa: int
    residual: float = 0.0


def first_order(kappa: int, a: float) -> float:
    """ds/da at attempt rate a; positive below a*, negative above."""
    return poisson_partial_sum(a, kappa - 1) - kappa * math.exp(float(poisson_logpmf(kappa, a)))


def lower_bound(kappa: int) -> float:
    """(kappa - sqrt kappa)^(1 - 1/sqrt kappa); zero for kappa = 1."""
    if kappa < 2:
        return 0.0
    r = math.sqrt(kappa)
    return (kappa - r) ** (1.0 - 1.0 / r)


def sign_changes(kappa: int, lo: float, hi: float, n: int = 1000) -> int:
    grid = np.linspace(lo, hi, n)
    vals = np.array([first_order(kappa, a) for a in grid])
    signs = np.sign(vals[vals != 0])
    return int(np.count_nonzero(np.diff(signs)))


def _bracket(kappa: int) -> tuple[float, float]:
    lo = max(EPS, lower_bound(kappa))
    if first_order(kappa, lo) <= 0:
        lo = EPS
    hi = 2.0 * kappa + 2.0
    while first_order(kappa, hi) >= 0:
        hi *= 2.0
    return lo, hi


def optimal_a_star(kappa: int, b: float = 1.0, check_unique: bool = True) -> OptimalP:
    """Unique maximizer a* = bp* of the IB throughput; p* = a*/b."""
    if int(kappa) != kappa or kappa < 1:
        raise ParameterError("kappa must be a positive integer")
    if not b > 0:
        raise ParameterError("b must be positive")
    kappa = int(kappa)
    lo, hi = _bracket(kappa)
    if check_unique and sign_changes(kappa, lo, hi, 200) != 1:
        raise SolverError(f"expected one sign change of the first-order condition on [{lo}, {hi}]")
    a = optimize.brentq(lambda x: first_order(kappa, x), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    s = a * poisson_partial_sum(a, kappa - 1)
    return OptimalP(a_star=a, p_star=a / b, s_star=s, kappa=kappa, residual=abs(first_order(kappa, a)))


def sp_derivative(b: float, p: float, kappa: int) -> float:
    """d/dp of s_IB(p, kappa) = b [P(Poi_bp <= kappa-1) - kappa Poi_bp(kappa)]."""
    if not (b > 0 and p > 0):
        raise ParameterError("b and p must be positive")
    return b * first_order(int(kappa), b * p)


def mc_optimum(b: float, kappa: int) -> OptimalP:
    """bp e^{-bp/kappa} peaks at bp = kappa with value kappa/e."""
    if not b > 0:
        raise ParameterError("b must be positive")
    return OptimalP(a_star=float(kappa), p_star=kappa / b, s_star=kappa / math.e, kappa=int(kappa))
