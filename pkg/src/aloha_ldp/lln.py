"""Law-of-large-numbers limits of (A_N, S_N, R_N) / N for the four protocols.

The typical values do not depend on the access rule; only the success rule
matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError
from .prob_core import poisson_partial_sum


@dataclass(frozen=True)
class TypicalPoint:
    a: float
    s: float
    r: float | None = None


def _check(b: float, p: float, kappa: int) -> None:
    if not (b > 0 and p > 0):
        raise ParameterError("b and p must be positive")
    if kappa < 1 or int(kappa) != kappa:
        raise ParameterError("kappa must be a positive integer")


def typical_ib(b: float, p: float, kappa: int) -> TypicalPoint:
    """a = bp, s = bp P(Poi_bp <= kappa - 1), r = P(Poi_bp <= kappa)."""
    _check(b, p, kappa)
    bp = b * p
    return TypicalPoint(a=bp, s=bp * poisson_partial_sum(bp, kappa - 1), r=poisson_partial_sum(bp, kappa))


def typical_mc(b: float, p: float, kappa: int) -> TypicalPoint:
    _check(b, p, kappa)
    bp = b * p
    return TypicalPoint(a=bp, s=bp * math.exp(-bp / kappa))


def throughput_sweep(b: float, kappa: int, p_grid) -> list[dict]:
    """Rows ``{p, s_ib, s_mc, a, r}`` for each p in the grid."""
    grid = list(p_grid)
    if not grid:
        raise ParameterError("p_grid must be nonempty")
    rows = []
    for p in grid:
        ib = typical_ib(b, p, kappa)
        mc = typical_mc(b, p, kappa)
        rows.append({"p": float(p), "s_ib": ib.s, "s_mc": mc.s, "a": ib.a, "r": ib.r})
    return rows
