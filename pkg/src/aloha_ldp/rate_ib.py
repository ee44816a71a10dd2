"""Rate functions for the interference-based scenario.

The local-rule rate function is the entropy minimization

    I_L(a, s, r) = inf { H(mu | Poi_bp) : <mu, f> = (a, s, r) },
    f(k) = (k, k 1{k <= kappa}, 1{k <= kappa}),

solved through its exponential-family dual. Off the feasible set the rate
is +inf, returned as a value rather than raised.

Feasible set (derived from the constraint structure of f): 0 <= r <= 1,
0 <= s <= kappa r and a - s >= (kappa + 1)(1 - r). The point is interior
when r in (0, 1), s / r in (0, kappa) and (a - s) / (1 - r) > kappa + 1;
everywhere else on the feasible set the measure splits into a head part on
[0, kappa] and a tail part on (kappa, inf) that are solved separately on
their reduced supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from scipy.special import gammaln, logsumexp, xlogy

from ._dual import PoissonReference, solve_dual
from .errors import ParameterError, SolverError
from .prob_core import FinitePmf, poisson_cutoff, poisson_logpmf
from .simulator import AccessRule

EDGE = 1e-12
NAN = float("nan")


@dataclass
class DualSolutionIB:
    """Solution of an IB entropy minimization.

    ``A`` is minus the log-partition; duals that do not exist (dropped
    constraints, boundary points) are NaN.
    """

    value: float
    B: float = NAN
    C: float = NAN
    D: float = NAN
    A: float = NAN
    minimizer: FinitePmf | None = None
    a: float = NAN
    s: float = NAN
    r: float = NAN
    residual: float = 0.0
    on_boundary: bool = False
    diagnostic: str = ""
    checks: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.value)


@dataclass
class RateValue:
    value: float
    local: float = NAN
    correction: float = 0.0
    detail: object = None


def _infeasible(reason: str, **kw) -> DualSolutionIB:
    return DualSolutionIB(value=math.inf, diagnostic=reason, **kw)


def _check_bp(bp: float, kappa: int) -> None:
    if not bp > 0:
        raise ParameterError("bp must be positive")
    if int(kappa) != kappa or kappa < 1:
        raise ParameterError("kappa must be a positive integer")


def _to_pmf(points: np.ndarray, probs: np.ndarray) -> FinitePmf:
    full = np.zeros(int(points.max()) + 1)
    full[points] = probs
    total = full.sum()
    return FinitePmf(0, full / total, 0.0)


def _require(fit, what: str):
    if not fit.converged:
        raise SolverError(f"{what}: dual Newton stalled at residual {fit.residual:.3e}")
    return fit


def feasibility_ib(kappa: int, a: float, s: float, r: float) -> str:
    """Empty string if (a, s, r) is attainable, else the violated condition."""
    if not (-EDGE <= r <= 1 + EDGE):
        return "r must lie in [0, 1]"
    if s < -EDGE:
        return "s must be nonnegative"
    if s > a + EDGE:
        return "s must not exceed a"
    if s > kappa * r + EDGE:
        return "s must not exceed kappa * r"
    if a - s < (kappa + 1) * (1 - r) - EDGE:
        return "a - s must be at least (kappa + 1)(1 - r)"
    return ""


def _ib_features(kappa: int):
    def features(k):
        head = (k <= kappa).astype(float)
        return np.column_stack([k, k * head, head])

    return features


# --- reduced-support pieces -------------------------------------------------


def _head_part(bp: float, kappa: int, x: float):
    """min sum_{k<=kappa} nu_k log(nu_k / q_k) over probability nu on [0, kappa], mean x.

    Returns (value, probs over 0..kappa, tilt).
    """
    probs = np.zeros(kappa + 1)
    if x <= EDGE:
        probs[0] = 1.0
        return bp, probs, -math.inf
    if x >= kappa - EDGE:
        probs[kappa] = 1.0
        return -float(poisson_logpmf(kappa, bp)), probs, math.inf
    ref = PoissonReference(bp, lambda k: k[:, None], kmax=kappa)
    fit = _require(solve_dual(ref, [x]), "head part")
    probs[fit.points] = fit.probs
    return fit.value([x]), probs, float(fit.theta[0])


def _tail_part(bp: float, kappa: int, x: float):
    """Same as the head part, on (kappa, inf)."""
    if x <= kappa + 1 + EDGE:
        probs = np.zeros(kappa + 2)
        probs[kappa + 1] = 1.0
        return -float(poisson_logpmf(kappa + 1, bp)), probs, -math.inf
    ref = PoissonReference(
        bp,
        lambda k: k[:, None],
        tail_slope=lambda th: th[0],
        keep=lambda k: k > kappa,
        kmin_support=kappa + 1,
    )
    fit = _require(solve_dual(ref, [x]), "tail part")
    probs = np.zeros(int(fit.points.max()) + 1)
    probs[fit.points] = fit.probs
    return fit.value([x]), probs, float(fit.theta[0])


def _split_solution(bp: float, kappa: int, a: float, s: float, r: float) -> DualSolutionIB:
    r = min(max(r, 0.0), 1.0)
    value = float(xlogy(r, r) + xlogy(1 - r, 1 - r))
    head = tail = None
    if r > EDGE:
        h_val, head, _ = _head_part(bp, kappa, s / r)
        value += r * h_val
    if r < 1 - EDGE:
        t_val, tail, _ = _tail_part(bp, kappa, (a - s) / (1 - r))
        value += (1 - r) * t_val
    size = max(len(head) if head is not None else 0, len(tail) if tail is not None else 0)
    mix = np.zeros(size)
    if head is not None:
        mix[: head.size] += r * head
    if tail is not None:
        mix[: tail.size] += (1 - r) * tail
    mix /= mix.sum()
    return DualSolutionIB(
        value=max(value, 0.0),
        minimizer=FinitePmf(0, mix, 0.0),
        a=a,
        s=s,
        r=r,
        on_boundary=True,
        diagnostic="solved on reduced support",
    )


def _split_duals(bp: float, kappa: int, a: float, s: float, r: float) -> np.ndarray:
    """(B, C, D) assembled from the head and tail tilts of an interior point."""
    z_h = _head_part(bp, kappa, s / r)[2]
    z_t = _tail_part(bp, kappa, (a - s) / (1 - r))[2]
    # sum_{k<=kappa} q_k e^{zk} = e^{bp(e^z - 1)} P(Poi_{bp e^z} <= kappa), likewise for the tail
    log_zh = bp * math.expm1(z_h) + stats.poisson.logcdf(kappa, bp * math.exp(z_h))
    log_zt = bp * math.expm1(z_t) + stats.poisson.logsf(kappa, bp * math.exp(z_t))
    D = math.log(r / (1 - r)) + log_zt - log_zh
    return np.array([z_t, z_h - z_t, D])


# --- rule L -----------------------------------------------------------------


def rate_l_ib(bp: float, kappa: int, a: float, s: float, r: float, tol: float = 1e-10) -> DualSolutionIB:
    """I_{L,IB}(a, s, r) with its three duals (B, C, D)."""
    _check_bp(bp, kappa)
    reason = feasibility_ib(kappa, a, s, r)
    if reason:
        return _infeasible(reason, a=a, s=s, r=r)
    interior = (
        EDGE < r < 1 - EDGE and EDGE < s / r < kappa - EDGE and (a - s) / (1 - r) > kappa + 1 + EDGE
    )
    if not interior:
        return _split_solution(bp, kappa, a, s, r)
    ref = PoissonReference(bp, _ib_features(kappa), tail_slope=lambda th: th[0], kmin_support=kappa + 1)
    targets = [a, s, r]
    fit = solve_dual(ref, targets, tol=tol)
    if not fit.converged:
        # far from the reference the cold start can stall; restart from the split duals
        fit = solve_dual(ref, targets, tol=tol, theta0=_split_duals(bp, kappa, a, s, r))
    _require(fit, "rate_l_ib")
    B, C, D = (float(x) for x in fit.theta)
    value = fit.value(targets)
    return DualSolutionIB(
        value=max(value, 0.0),
        B=B,
        C=C,
        D=D,
        A=-fit.log_partition,
        minimizer=_to_pmf(fit.points, fit.probs),
        a=a,
        s=s,
        r=r,
        residual=fit.residual,
        checks={"entropy": fit.entropy(), "duality_value": value},
    )


def rate_l_ib_min_r(bp: float, kappa: int, a: float, s: float, tol: float = 1e-10) -> DualSolutionIB:
    """inf_r I_{L,IB}(a, s, r) via the two duals (B, C) of phi(B, C).

    The returned ``r`` is the head mass of the minimizer.
    """
    _check_bp(bp, kappa)
    if s < -EDGE or s > a + EDGE or s > kappa + EDGE:
        return _infeasible("need 0 <= s <= min(a, kappa)", a=a, s=s)
    if s >= kappa - EDGE:
        if abs(a - kappa) > EDGE:
            return _infeasible("s = kappa forces a = kappa", a=a, s=s)
        return rate_l_ib(bp, kappa, a, s, 1.0)
    if a - s <= EDGE:
        return rate_l_ib(bp, kappa, a, s, 1.0)
    if s <= EDGE:
        # head part collapses to the atom at 0
        ref = PoissonReference(
            bp,
            lambda k: k[:, None],
            tail_slope=lambda th: th[0],
            keep=lambda k: (k == 0) | (k > kappa),
            kmin_support=kappa + 1,
        )
        fit = _require(solve_dual(ref, [a], tol=tol), "rate_l_ib_min_r(s=0)")
        mu = _to_pmf(fit.points, fit.probs)
        return DualSolutionIB(
            value=max(fit.value([a]), 0.0),
            B=float(fit.theta[0]),
            C=-math.inf,
            A=-fit.log_partition,
            minimizer=mu,
            a=a,
            s=0.0,
            r=mu.prob(0),
            residual=fit.residual,
            on_boundary=True,
            diagnostic="s = 0: head reduced to {0}",
        )

    def features(k):
        return np.column_stack([k, k * (k <= kappa)])

    ref = PoissonReference(bp, features, tail_slope=lambda th: th[0], kmin_support=kappa + 1)
    fit = _require(solve_dual(ref, [a, s], tol=tol), "rate_l_ib_min_r")
    mu = _to_pmf(fit.points, fit.probs)
    value = fit.value([a, s])
    return DualSolutionIB(
        value=max(value, 0.0),
        B=float(fit.theta[0]),
        C=float(fit.theta[1]),
        A=-fit.log_partition,
        minimizer=mu,
        a=a,
        s=s,
        r=float(mu.probs[: kappa + 1].sum()),
        residual=fit.residual,
        checks={"entropy": fit.entropy(), "duality_value": value},
    )


def contraction_rate_s(bp: float, kappa: int, s: float, tol: float = 1e-10, verify: bool = True) -> DualSolutionIB:
    """Rate function of S_N / N: inf over (a, r) of I_{L,IB}(a, s, r).

    Solved with the single dual C. With ``verify`` the 3-dual problem is
    re-solved at the minimizer's (a, r) and its B and D are stored in
    ``checks``; they vanish when the reduction is right.
    """
    _check_bp(bp, kappa)
    if s < -EDGE or s > kappa + EDGE:
        return _infeasible("need 0 <= s <= kappa", s=s)
    q = np.exp(poisson_logpmf(np.arange(kappa + 1), bp))
    if s >= kappa - EDGE:
        mu = np.zeros(kappa + 1)
        mu[kappa] = 1.0
        return DualSolutionIB(
            value=-math.log(q[kappa]), C=math.inf, minimizer=FinitePmf(0, mu), a=kappa, s=kappa, r=1.0, on_boundary=True
        )
    if s <= EDGE:
        # condition Poi_bp on {0} u (kappa, inf)
        kept = 1.0 - q[1:].sum()
        K = poisson_cutoff(bp)
        k = np.arange(max(K, kappa + 1) + 1)
        w = np.exp(poisson_logpmf(k, bp))
        w[1 : kappa + 1] = 0.0
        mu = FinitePmf(0, w / w.sum(), 0.0)
        return DualSolutionIB(
            value=-math.log(kept),
            C=-math.inf,
            B=0.0,
            D=NAN,
            minimizer=mu,
            a=mu.mean(),
            s=0.0,
            r=mu.prob(0),
            on_boundary=True,
        )
    ref = PoissonReference(bp, lambda k: (k * (k <= kappa))[:, None], kmin_support=kappa + 1)
    fit = _require(solve_dual(ref, [s], tol=tol), "contraction_rate_s")
    mu = _to_pmf(fit.points, fit.probs)
    a = mu.mean()
    r = float(mu.probs[: kappa + 1].sum())
    sol = DualSolutionIB(
        value=max(fit.value([s]), 0.0),
        B=0.0,
        C=float(fit.theta[0]),
        D=0.0,
        A=-fit.log_partition,
        minimizer=mu,
        a=a,
        s=s,
        r=r,
        residual=fit.residual,
    )
    if verify and EDGE < r < 1 - EDGE:
        full = rate_l_ib(bp, kappa, a, s, r, tol=tol)
        sol.checks = {"B": full.B, "C": full.C, "D": full.D, "value": full.value}
    return sol


# --- attempt rate functions and rule G ---------------------------------------


def _as_rule(rule) -> AccessRule:
    if isinstance(rule, AccessRule):
        return rule
    name = str(rule).lower()
    return AccessRule({"l": "local", "g": "global"}.get(name, name))


def attempts_rate(rule, b: float, p: float, a: float) -> float:
    """Rate function of A_N / N: J_L under the local rule, J_G under the global one."""
    rule = _as_rule(rule)
    if not (b > 0 and p > 0):
        raise ParameterError("b and p must be positive")
    if a < 0:
        raise ParameterError("a must be nonnegative")
    if rule is AccessRule.LOCAL:
        return float(p * b - a + xlogy(a, a / (p * b)))
    if p > 1:
        raise ParameterError("p must be <= 1 under global rule")
    if a > b:
        raise ParameterError("a must not exceed b under the global rule")
    if p == 1:
        return 0.0 if a == b else math.inf
    return float(xlogy(a, a / p) + xlogy(b - a, (b - a) / (1 - p)) - b * math.log(b))


def rule_correction(b: float, p: float, a: float) -> float:
    """I_G - I_L = (b - a) log((1 - a/b) / (1 - p)) + a - bp, with 0 log 0 = 0."""
    if a > b:
        return math.inf
    if p >= 1:
        return a - b * p if a == b else math.inf
    return float(xlogy(b - a, (1 - a / b) / (1 - p)) + a - b * p)


def rate_g_ib(b: float, p: float, kappa: int, a: float, s: float, r: float) -> RateValue:
    if p > 1:
        raise ParameterError("p must be <= 1 under global rule")
    if a > b:
        return RateValue(math.inf, detail="a > b: rule G caps attempts at b per slot")
    local = rate_l_ib(b * p, kappa, a, s, r)
    corr = rule_correction(b, p, a)
    return RateValue(local.value + corr, local=local.value, correction=corr, detail=local)


# --- Cramer form --------------------------------------------------------------


def _legendre(x: float, log_terms) -> tuple[float, float]:
    """sup_z (x z - log sum_i exp(z i + c_i)) for terms given by log_terms(z) -> (i, c)."""

    def mean(z):
        i, c = log_terms(z)
        w = z * i + c
        lse = logsumexp(w)
        return float(np.dot(i, np.exp(w - lse)))

    lo, hi = -1.0, 1.0
    while mean(lo) > x:
        lo *= 2.0
        if lo < -1e4:
            raise SolverError("Legendre bracket (low) not found")
    while mean(hi) < x:
        hi *= 2.0
        if hi > 1e3:
            raise SolverError("Legendre bracket (high) not found")
    z = optimize.brentq(lambda t: mean(t) - x, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    i, c = log_terms(z)
    return float(x * z - logsumexp(z * i + c)), z


def legendre_head(kappa: int, x: float) -> float:
    """I_{<=kappa}(x) = sup_z (x z - log sum_{i<=kappa} e^{z i} / i!)."""
    if x < -EDGE or x > kappa + EDGE:
        return math.inf
    if x <= EDGE:
        return 0.0
    if x >= kappa - EDGE:
        return float(gammaln(kappa + 1))
    i = np.arange(kappa + 1, dtype=float)
    c = -gammaln(i + 1)
    return _legendre(x, lambda z: (i, c))[0]


def legendre_tail(kappa: int, x: float) -> float:
    """I_{>kappa}(x) = sup_z (x z - log sum_{i>kappa} e^{z i} / i!)."""
    if x < kappa + 1 - EDGE:
        return math.inf
    if x <= kappa + 1 + EDGE:
        return float(gammaln(kappa + 2))

    def terms(z):
        top = max(2 * kappa + 40, poisson_cutoff(math.exp(min(z, 700.0))) + kappa + 1)
        i = np.arange(kappa + 1, top + 1, dtype=float)
        return i, -gammaln(i + 1)

    return _legendre(x, terms)[0]


def rate_l_ib_alternate(bp: float, kappa: int, a: float, s: float, r: float) -> RateValue:
    """Cramer-type form of I_{L,IB}:

    r I_{<=k}(s/r) + (1-r) I_{>k}((a-s)/(1-r)) + bp - a log bp + r log r + (1-r) log(1-r),

    with the term of a vanished part (r = 0 or r = 1) dropped.
    """
    _check_bp(bp, kappa)
    if feasibility_ib(kappa, a, s, r):
        return RateValue(math.inf)
    r = min(max(r, 0.0), 1.0)
    value = bp - a * math.log(bp) + float(xlogy(r, r) + xlogy(1 - r, 1 - r))
    if r > EDGE:
        value += r * legendre_head(kappa, s / r)
    if r < 1 - EDGE:
        value += (1 - r) * legendre_tail(kappa, (a - s) / (1 - r))
    return RateValue(value, local=value)
