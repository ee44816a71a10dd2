"""Exact finite-N laws for the local rule, where slots are i.i.d.

A slot's attempt count is Bin(floor(bN), p/N). Its success count is a
function of it (interference-based) or its conditional law given the
attempts comes from the uniform channel choice (multi-channel). Sums over
the N slots are formed by log-space convolution with repeated doubling, so
probabilities far below the float range are still represented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import BudgetError, ParameterError
from .prob_core import DEFAULT_POLICY, TruncationPolicy, binomial_pmf, trim_upper
from .simulator import AccessRule, ModelParams, Scenario

MAX_ENUM_ATTEMPTS = 200
MAX_ENUM_CHANNELS = 64
DEFAULT_BUDGET = 5_000_000  # cells touched by a single convolution


@dataclass(frozen=True)
class SlotLaw:
    """Joint law of (attempts, successes) for one slot.

    ``joint[a, s]`` holds the probability of a attempts and s successes for
    a <= amax; ``tail_mass`` is the probability of more than amax
    attempts. For the interference-based rule the slot succeeds iff
    a <= kappa, which fixes the success flag.
    """

    scenario: Scenario
    kappa: int
    joint: np.ndarray
    tail_mass: float

    @property
    def amax(self) -> int:
        return self.joint.shape[0] - 1

    @property
    def attempts(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def successes(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    @property
    def slot_success(self) -> float | None:
        if self.scenario is not Scenario.INTERFERENCE_BASED:
            return None
        return float(self.attempts[: self.kappa + 1].sum())

    def total_mass(self) -> float:
        return float(self.joint.sum() + self.tail_mass)


@lru_cache(maxsize=32)
def singleton_law(kappa: int, a: int) -> np.ndarray:
    """P(j singleton channels | a attempts over kappa uniform channels), j = 0..kappa.

    Counts the kappa^a labelled assignments exactly: a DP over channels
    choosing how many of the remaining attempts land on each.
    """
    if kappa > MAX_ENUM_CHANNELS or a > MAX_ENUM_ATTEMPTS:
        raise BudgetError(f"occupancy enumeration capped at kappa <= {MAX_ENUM_CHANNELS}, a <= {MAX_ENUM_ATTEMPTS}")
    # ways[m][j]: assignments of m labelled attempts to the channels so far with j singletons
    ways = [[0] * (kappa + 1) for _ in range(a + 1)]
    ways[0][0] = 1
    for _ in range(kappa):
        nxt = [[0] * (kappa + 1) for _ in range(a + 1)]
        for m in range(a + 1):
            for j in range(kappa + 1):
                w = ways[m][j]
                if not w:
                    continue
                left = a - m
                choose = 1
                for x in range(left + 1):
                    jj = j + (x == 1)
                    if jj <= kappa:
                        nxt[m + x][jj] += w * choose
                    choose = choose * (left - x) // (x + 1)
        ways = nxt
    # the product of binomials over channels is the multinomial count of each size vector
    total = kappa**a
    return np.array([float(Fraction(w, total)) for w in ways[a]])


def slot_law(
    params: ModelParams, scenario: Scenario, policy: TruncationPolicy = DEFAULT_POLICY, rule: AccessRule = AccessRule.LOCAL
) -> SlotLaw:
    if rule is not AccessRule.LOCAL:
        raise ParameterError("exact laws exist only for the local rule (slots are not independent under rule G)")
    params.validate(AccessRule.LOCAL)
    kappa = params.kappa
    full = binomial_pmf(params.participants, params.p / params.n_slots, policy)
    if scenario is Scenario.INTERFERENCE_BASED:
        probs = full.probs
        amax = probs.size - 1
        joint = np.zeros((amax + 1, kappa + 1))
        head = min(kappa, amax)
        joint[np.arange(head + 1), np.arange(head + 1)] = probs[: head + 1]
        joint[head + 1 :, 0] = probs[head + 1 :]
        return SlotLaw(scenario, kappa, joint, full.tail_mass)
    pmf = trim_upper(full, policy.tail_tol)
    amax = pmf.probs.size - 1
    if amax > MAX_ENUM_ATTEMPTS:
        raise BudgetError(f"slot attempts reach {amax} > {MAX_ENUM_ATTEMPTS}")
    joint = np.zeros((amax + 1, kappa + 1))
    for a in range(amax + 1):
        joint[a] = pmf.probs[a] * singleton_law(kappa, a)
    return SlotLaw(scenario, kappa, joint, pmf.tail_mass)


# --- log-space convolution ----------------------------------------------------


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def _trim(lp: np.ndarray) -> np.ndarray:
    finite = np.nonzero(np.isfinite(lp))[0]
    return lp[: finite[-1] + 1] if finite.size else lp[:1]


def log_convolve(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """log of (e^x * e^y), looping over the shorter vector."""
    if x.size < y.size:
        x, y = y, x
    out = np.full(x.size + y.size - 1, -np.inf)
    for i, v in enumerate(y):
        if v == -np.inf:
            continue
        seg = out[i : i + x.size]
        np.logaddexp(seg, x + v, out=seg)
    return out


def log_power(lp: np.ndarray, n: int, budget: int = DEFAULT_BUDGET, limit: int | None = None) -> np.ndarray:
    """n-fold self-convolution by repeated squaring.

    With ``limit`` only entries 0..limit are kept, which are still exact
    because all supports start at 0.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    lp = _trim(np.asarray(lp, dtype=float))
    width = (lp.size - 1) * n + 1
    if limit is not None:
        lp = lp[: limit + 1]
        width = min(width, limit + 1)
    if width > budget or lp.size * width > budget * 64:
        raise BudgetError(f"convolving {n} copies of a {lp.size}-point law exceeds the budget")

    def conv(x, y):
        z = log_convolve(x, y)
        return z if limit is None else z[: limit + 1]

    result = None
    base = lp
    while n:
        if n & 1:
            result = base if result is None else conv(result, base)
        n >>= 1
        if n:
            base = conv(base, base)
    return result


@dataclass(frozen=True)
class ExactLaw:
    """Exact log-pmfs of S_N and, when computed, A_N and R_N."""

    n_slots: int
    log_successes: np.ndarray
    log_attempts: np.ndarray | None = None
    log_successful_slots: np.ndarray | None = None
    slot_tail: float = 0.0

    def pmf(self, which: str = "successes") -> np.ndarray:
        return np.exp(getattr(self, f"log_{which}"))

    def mean(self, which: str = "successes") -> float:
        p = self.pmf(which)
        return float(np.arange(p.size) @ p / p.sum())

    def variance(self, which: str = "successes") -> float:
        p = self.pmf(which)
        p = p / p.sum()
        k = np.arange(p.size)
        m = k @ p
        return float(((k - m) ** 2) @ p)

    def log_cdf(self, k: int) -> float:
        """log P(S_N <= k)."""
        if k < 0:
            return -math.inf
        return float(logsumexp(self.log_successes[: k + 1]))


def convolve_n(
    law: SlotLaw, n_slots: int, budget: int = DEFAULT_BUDGET, marginals: bool = True, attempt_tol: float = 1e-14
) -> ExactLaw:
    """Exact law of S_N over N i.i.d. slots; A_N and R_N marginals when within budget.

    The per-slot attempt law is trimmed to upper mass ``attempt_tol``
    before forming A_N; the law of S_N is never truncated beyond the slot law.
    """
    if int(n_slots) != n_slots or n_slots < 1:
        raise ParameterError("n_slots must be a positive integer")
    log_s = log_power(_log(law.successes), n_slots, budget)
    log_a = log_r = None
    if marginals:
        att = law.attempts
        upper = np.cumsum(att[::-1])[::-1]
        keep = np.nonzero(upper >= attempt_tol)[0]
        trimmed = att[: int(keep[-1]) + 1] if keep.size else att[:1]
        try:
            log_a = log_power(_log(trimmed), n_slots, budget)
        except BudgetError:
            log_a = None
        if law.scenario is Scenario.INTERFERENCE_BASED:
            ok = float(att[: law.kappa + 1].sum())
            log_r = log_power(_log(np.array([1.0 - ok, ok])), n_slots, budget)
    return ExactLaw(n_slots, log_s, log_a, log_r, slot_tail=law.tail_mass)


def empirical_rate(law_n: ExactLaw, s: float) -> float:
    """-(1/N) log P(S_N <= floor(sN))."""
    k = int(math.floor(s * law_n.n_slots + 1e-9))
    lp = law_n.log_cdf(k)
    return math.inf if lp == -math.inf else -lp / law_n.n_slots


# --- point probabilities of (A_N, S_N, R_N), interference-based --------------


def point_log_prob(params: ModelParams, attempts: int, successes: int, successful_slots: int) -> float:
    """log P(A_N = A, S_N = S, R_N = R) for the interference-based local rule.

    The R successful slots carry all S successes and the other N - R slots
    carry A - S attempts, so the probability is
    C(N, R) h^{*R}(S) t^{*(N-R)}(A - S) with h, t the slot law restricted to
    a <= kappa and a > kappa.
    """
    law = slot_law(params, Scenario.INTERFERENCE_BASED)
    N, kappa = params.n_slots, params.kappa
    R, S, A = successful_slots, successes, attempts
    if not (0 <= R <= N and 0 <= S <= A):
        return -math.inf
    att = law.attempts
    head = _log(att[: kappa + 1])
    tail = _log(np.concatenate([np.zeros(kappa + 1), att[kappa + 1 :]]))
    log_choose = gammaln(N + 1) - gammaln(R + 1) - gammaln(N - R + 1)
    lh = 0.0 if R == 0 else None
    if R > 0:
        h = log_power(head, R, limit=S)
        lh = h[S] if S < h.size else -math.inf
    elif S != 0:
        return -math.inf
    if N - R > 0:
        t = log_power(tail, N - R, limit=A - S)
        lt = t[A - S] if A - S < t.size else -math.inf
    else:
        lt = 0.0 if A == S else -math.inf
    return float(log_choose + lh + lt)


def local_rate(params: ModelParams, a: float, s: float, r: float) -> float:
    """-(1/N) log P((A_N, S_N, R_N) = (aN, sN, rN)) at the nearest lattice point."""
    N = params.n_slots
    lp = point_log_prob(params, round(a * N), round(s * N), round(r * N))
    return math.inf if lp == -math.inf else -lp / N
