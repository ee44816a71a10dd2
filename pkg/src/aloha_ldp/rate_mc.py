"""Rate functions for the multi-channel scenario.

Per slot, the pair (attempts, successes) is distributed (in the many-user
limit) as M(i, j) = P(sum_k X_k = i, #{k: X_k = 1} = j) for kappa
independent Poi_{bp/kappa} channel loads. The local rule's rate function is
inf H(nu | M) under mean constraints (a, s) on
Xi = {(i, j): j <= i, j <= kappa}; the global rule's is a one-channel
entropy problem scaled by kappa plus the attempt-rate correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import logsumexp, xlogy

from ._dual import PoissonReference, solve_dual
from .errors import BudgetError, ParameterError, SolverError
from .prob_core import DEFAULT_POLICY, TruncationPolicy, poisson_cutoff, poisson_logpmf
from .rate_ib import EDGE, NAN, RateValue, rule_correction

MAX_KAPPA = 64


@dataclass(frozen=True)
class ReferenceMeasureM:
    """M on Xi, stored as ``probs[i, j]`` for i <= cap, j <= kappa."""

    kappa: int
    alpha: float
    probs: np.ndarray
    tail_mass: float

    @property
    def cap(self) -> int:
        return self.probs.shape[0] - 1

    def __call__(self, i: int, j: int) -> float:
        if 0 <= i <= self.cap and 0 <= j <= self.kappa:
            return float(self.probs[i, j])
        return 0.0

    def points(self):
        """(i, j, mass) for the charged points of Xi."""
        i, j = np.nonzero(self.probs > 0)
        return i, j, self.probs[i, j]

    def rows(self) -> list[tuple[int, int, float]]:
        i, j, m = self.points()
        return [(int(a), int(b), float(c)) for a, b, c in zip(i, j, m)]


def _check(bp: float, kappa: int) -> None:
    if not bp > 0:
        raise ParameterError("bp must be positive")
    if int(kappa) != kappa or kappa < 1:
        raise ParameterError("kappa must be a positive integer")
    if kappa > MAX_KAPPA:
        raise BudgetError(f"kappa={kappa} exceeds the validated channel count {MAX_KAPPA}")


@lru_cache(maxsize=64)
def _build_m(bp: float, kappa: int, cap: int) -> ReferenceMeasureM:
    alpha = bp / kappa
    # per-channel loads above the cap cannot contribute to rows <= cap
    pi = np.exp(poisson_logpmf(np.arange(cap + 1), alpha))
    table = np.zeros((cap + 1, kappa + 1))
    table[0, 0] = 1.0
    for _ in range(kappa):
        nxt = np.zeros_like(table)
        for x in range(cap + 1):
            w = pi[x]
            if w == 0.0:
                break
            if x == 1:
                nxt[1:, 1:] += w * table[:-1, :-1]
            else:
                nxt[x:, :] += w * table[: cap + 1 - x, :]
        table = nxt
    # what is missing from the table is exactly the Poi_bp mass beyond the cap
    tail = float(stats.poisson.sf(cap, bp))
    table.setflags(write=False)
    return ReferenceMeasureM(kappa, alpha, table, tail)


def reference_measure_m(
    bp: float, kappa: int, policy: TruncationPolicy = DEFAULT_POLICY, cap: int | None = None
) -> ReferenceMeasureM:
    """Dynamic program over channels with state (total attempts, singleton channels)."""
    _check(bp, kappa)
    if cap is None:
        cap = max(kappa + 1, poisson_cutoff(bp, policy.tail_tol))
    if (cap + 1) * (kappa + 1) > policy.max_support:
        raise BudgetError("M table exceeds the support budget")
    return _build_m(float(bp), int(kappa), int(cap))


class _MReference:
    """Reference M for the dual solver; the cap grows with the tilt.

    The mass beyond the cap is estimated per column j by extrapolating the
    tilted weights geometrically from the largest ratio seen over the last
    rows (the per-row ratios of these Poisson-type sums decrease like 1/i).
    """

    LOOKBACK = 8

    def __init__(self, bp, kappa, keep=None, features=None, tail_tol=1e-14):
        self.bp, self.kappa, self.keep, self.tail_tol = bp, kappa, keep, tail_tol
        self.features = features or (lambda i, j: np.column_stack([i, j]))
        self._cache = {}

    def _arrays_for(self, cap):
        hit = self._cache.get(cap)
        if hit is None:
            m = reference_measure_m(self.bp, self.kappa, cap=cap)
            ii, jj = np.indices(m.probs.shape)
            mask = m.probs > 0
            if self.keep is not None:
                mask &= self.keep(ii, jj)
            with np.errstate(divide="ignore"):
                log_table = np.where(mask, np.log(np.where(mask, m.probs, 1.0)), -np.inf)
            i, j = ii[mask], jj[mask]
            hit = (log_table[mask], np.asarray(self.features(i, j), dtype=float), np.column_stack([i, j]), log_table)
            self._cache[cap] = hit
        return hit

    def _log_tail(self, log_table, theta):
        cap = log_table.shape[0] - 1
        beta = float(theta[0])
        gamma = float(theta[1]) if theta.size > 1 else 0.0
        ii, jj = np.indices(log_table.shape)
        lw = log_table + beta * ii + gamma * jj
        last = lw[cap - self.LOOKBACK :]
        out = []
        for col in last.T:
            if not np.isfinite(col[-1]):
                if np.isfinite(col).any():
                    return math.inf
                continue
            ratio = np.max(np.diff(col))
            if ratio >= math.log(0.9):
                return math.inf
            out.append(col[-1] + ratio - math.log1p(-math.exp(ratio)))
        return logsumexp(out) if out else -math.inf

    def arrays(self, theta):
        lam_t = self.bp * math.exp(min(float(theta[0]), 700.0))
        cap = max(self.kappa + self.LOOKBACK + 2, poisson_cutoff(min(lam_t, 1e5), self.tail_tol) // 2)
        while True:
            if poisson_logpmf(cap, self.bp) < -700.0:
                # rows near the cap would underflow in the linear-space table
                raise OverflowError("tilt reaches the underflow range of M")
            log_q, F, pts, log_table = self._arrays_for(cap)
            log_z = logsumexp(log_q + F @ theta)
            if self._log_tail(log_table, theta) - log_z < math.log(self.tail_tol):
                return log_q, F, pts
            cap = int(cap * 1.25) + 1


@dataclass
class DualSolutionMC:
    value: float
    beta: float = NAN
    gamma: float = NAN
    log_partition: float = NAN
    points: np.ndarray | None = None
    probs: np.ndarray | None = None
    a: float = NAN
    s: float = NAN
    residual: float = 0.0
    on_boundary: bool = False
    diagnostic: str = ""
    checks: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.value)


def _require(fit, what):
    if not fit.converged:
        raise SolverError(f"{what}: dual Newton stalled at residual {fit.residual:.3e}")
    return fit


def feasibility_mc(kappa: int, a: float, s: float) -> str:
    if s < -EDGE:
        return "s must be nonnegative"
    if s > a + EDGE:
        return "s must not exceed a"
    if s > kappa + EDGE:
        return "s must not exceed kappa"
    if s >= kappa - EDGE and abs(a - kappa) > EDGE:
        return "s = kappa forces a = kappa"
    return ""


def rate_l_mc(bp: float, kappa: int, a: float, s: float, tol: float = 1e-10) -> DualSolutionMC:
    """I_{L,MC}(a, s) = inf { H(nu | M) : E_nu[i] = a, E_nu[j] = s } with duals (beta, gamma)."""
    _check(bp, kappa)
    reason = feasibility_mc(kappa, a, s)
    if reason:
        return DualSolutionMC(math.inf, a=a, s=s, diagnostic=reason)
    if s >= kappa - EDGE:
        m = reference_measure_m(bp, kappa)
        return DualSolutionMC(
            -math.log(m(kappa, kappa)),
            points=np.array([[kappa, kappa]]),
            probs=np.array([1.0]),
            a=a,
            s=s,
            on_boundary=True,
            diagnostic="point mass at (kappa, kappa)",
        )
    if a <= EDGE:
        m = reference_measure_m(bp, kappa)
        return DualSolutionMC(
            -math.log(m(0, 0)), points=np.array([[0, 0]]), probs=np.array([1.0]), a=a, s=s, on_boundary=True
        )
    boundary = ""
    if s <= EDGE:
        ref = _MReference(bp, kappa, keep=lambda i, j: j == 0, features=lambda i, j: i[:, None])
        targets = [a]
        boundary = "s = 0: face j = 0"
    elif a - s <= EDGE:
        ref = _MReference(bp, kappa, keep=lambda i, j: i == j, features=lambda i, j: i[:, None])
        targets = [a]
        boundary = "s = a: diagonal face"
    else:
        ref = _MReference(bp, kappa)
        targets = [a, s]
    fit = _require(solve_dual(ref, targets, tol=tol), "rate_l_mc")
    value = fit.value(targets)
    beta = float(fit.theta[0])
    gamma = float(fit.theta[1]) if fit.theta.size > 1 else NAN
    return DualSolutionMC(
        value=max(value, 0.0),
        beta=beta,
        gamma=gamma,
        log_partition=fit.log_partition,
        points=fit.points,
        probs=fit.probs,
        a=a,
        s=s,
        residual=fit.residual,
        on_boundary=bool(boundary),
        diagnostic=boundary,
        checks={"entropy": fit.entropy(), "duality_value": value},
    )


def channel_rate(alpha: float, x: float, y: float, tol: float = 1e-10) -> DualSolutionMC:
    """inf { H(mu | Poi_alpha) : mean(mu) = x, mu({1}) = y } over mu on N_0.

    Feasible when 0 <= y <= min(x, 1) and y = 1 only with x = 1.
    """
    if y < -EDGE or y > x + EDGE or y > 1 + EDGE or (y >= 1 - EDGE and abs(x - 1) > EDGE):
        return DualSolutionMC(math.inf, a=x, s=y, diagnostic="infeasible channel point")
    lq0, lq1 = float(poisson_logpmf(0, alpha)), float(poisson_logpmf(1, alpha))
    if x - y <= EDGE:
        # mass only at 0 and 1
        value = float(xlogy(1 - y, 1 - y) - (1 - y) * lq0 + xlogy(y, y) - y * lq1)
        return DualSolutionMC(value, a=x, s=y, on_boundary=True, diagnostic="support {0, 1}")
    if y <= EDGE:
        ref = PoissonReference(
            alpha, lambda g: g[:, None], tail_slope=lambda th: th[0], keep=lambda g: g != 1, kmin_support=2
        )
        targets = [x]
    else:
        ref = PoissonReference(
            alpha, lambda g: np.column_stack([g, g == 1]), tail_slope=lambda th: th[0], kmin_support=2
        )
        targets = [x, y]
    fit = _require(solve_dual(ref, targets, tol=tol), "channel_rate")
    value = fit.value(targets)
    return DualSolutionMC(
        value=max(value, 0.0),
        beta=float(fit.theta[0]),
        gamma=float(fit.theta[1]) if fit.theta.size > 1 else NAN,
        log_partition=fit.log_partition,
        points=fit.points,
        probs=fit.probs,
        a=x,
        s=y,
        residual=fit.residual,
        on_boundary=y <= EDGE,
    )


def rate_l_mc_channels(bp: float, kappa: int, a: float, s: float) -> float:
    """kappa * channel_rate(bp/kappa, a/kappa, s/kappa): the same rate through one channel.

    The log-moment generating function of M is kappa times that of
    (X, 1{X = 1}) under Poi_{bp/kappa}, so the Legendre transforms agree.
    """
    _check(bp, kappa)
    return kappa * channel_rate(bp / kappa, a / kappa, s / kappa).value


def rate_g_mc(b: float, p: float, kappa: int, a: float, s: float) -> RateValue:
    if p > 1:
        raise ParameterError("p must be <= 1 under global rule")
    if a > b:
        return RateValue(math.inf, detail="a > b: rule G caps attempts at b per slot")
    inner = channel_rate(b * p / kappa, a / kappa, s / kappa)
    corr = rule_correction(b, p, a)
    local = kappa * inner.value
    return RateValue(local + corr, local=local, correction=corr, detail=inner)
