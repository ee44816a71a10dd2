"""Truncated discrete probability primitives.

Every law in the package is carried as a :class:`FinitePmf`: a probability
vector on ``support_offset, support_offset + 1, ...`` plus the mass that was
cut off by truncation. All pmf arithmetic is done in log space and only
exponentiated at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import ParameterError

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class TruncationPolicy:
    tail_tol: float = 1e-14
    max_support: int = 1_000_000

    def __post_init__(self):
        if not self.tail_tol > 0:
            raise ParameterError("tail_tol must be positive")
        if self.max_support < 2:
            raise ParameterError("max_support must be at least 2")

    def check_kappa(self, kappa: int) -> None:
        if self.max_support < kappa + 1:
            raise ParameterError(f"max_support={self.max_support} must be >= kappa + 1 = {kappa + 1}")


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True)
class FinitePmf:
    """Probability vector on ``support_offset + arange(len(probs))``.

    ``tail_mass`` is the probability that lies outside the stored support.
    """

    support_offset: int
    probs: np.ndarray
    tail_mass: float = 0.0
    _check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if not self._check:
            return
        if probs.ndim != 1:
            raise ParameterError("probs must be one-dimensional")
        if np.any(probs < 0) or self.tail_mass < 0:
            raise ParameterError("probabilities must be nonnegative")
        total = probs.sum() + self.tail_mass
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ParameterError(f"pmf mass {total!r} is not 1 within {NORMALIZATION_TOL}")

    @property
    def support(self) -> np.ndarray:
        return self.support_offset + np.arange(self.probs.size)

    @property
    def last(self) -> int:
        return self.support_offset + self.probs.size - 1

    def prob(self, k: int) -> float:
        i = k - self.support_offset
        if 0 <= i < self.probs.size:
            return float(self.probs[i])
        return 0.0

    def expect(self, values) -> float:
        """Expectation of ``values`` (array over the support, or a callable of it)."""
        if callable(values):
            values = values(self.support)
        return float(np.dot(self.probs, values))

    def mean(self) -> float:
        return self.expect(self.support)

    def variance(self) -> float:
        k = self.support
        m = self.mean()
        return float(np.dot(self.probs, (k - m) ** 2))


def poisson_logpmf(k, lam: float) -> np.ndarray:
    # scipy's saddle-point form keeps full precision for large lam, where
    # k log lam - lam - log k! cancels badly
    return stats.poisson.logpmf(np.asarray(k), lam)


def poisson_cutoff(lam: float, tail_tol: float = DEFAULT_POLICY.tail_tol) -> int:
    """Smallest K with P(Poi_lam > K) < tail_tol.

    The scan starts from ``ceil(lam + 10 sqrt(lam) + 20)`` and moves up or
    down from there.
    """
    k0 = int(math.ceil(lam + 10.0 * math.sqrt(lam) + 20.0))
    log_tol = math.log(tail_tol)
    ks = np.arange(k0 + 1)
    logsf = stats.poisson.logsf(ks, lam)
    while logsf[-1] >= log_tol:
        ks = np.arange(ks[-1] + 1, 2 * ks[-1] + 2)
        logsf = stats.poisson.logsf(ks, lam)
    ok = np.nonzero(logsf < log_tol)[0]
    return int(ks[ok[0]])


def poisson_pmf(lam: float, policy: TruncationPolicy = DEFAULT_POLICY) -> FinitePmf:
    if not lam > 0:
        raise ParameterError(f"Poisson parameter must be positive, got {lam}")
    K = poisson_cutoff(lam, policy.tail_tol)
    if K + 1 > policy.max_support:
        raise ParameterError(f"Poisson({lam}) needs {K + 1} support points, cap is {policy.max_support}")
    probs = np.exp(poisson_logpmf(np.arange(K + 1), lam))
    tail = float(stats.poisson.sf(K, lam))
    # for lam in the thousands each log-term carries ~1e-12 relative error;
    # spread the discrepancy proportionally so the mass closes exactly
    probs *= (1.0 - tail) / probs.sum()
    return FinitePmf(0, probs, tail)


def binomial_logpmf(k, n: int, q: float) -> np.ndarray:
    return stats.binom.logpmf(np.asarray(k), n, q)


def binomial_pmf(n: int, q: float, policy: TruncationPolicy = DEFAULT_POLICY) -> FinitePmf:
    if n < 0 or int(n) != n:
        raise ParameterError(f"binomial size must be a nonnegative integer, got {n}")
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"binomial probability must lie in [0, 1], got {q}")
    n = int(n)
    if q == 0.0:
        return FinitePmf(0, np.array([1.0]), 0.0)
    if q == 1.0:
        probs = np.zeros(n + 1)
        probs[-1] = 1.0
        return FinitePmf(0, probs, 0.0)
    K = n
    tail = 0.0
    if n + 1 > policy.max_support:
        ks = np.arange(policy.max_support)
        ok = np.nonzero(stats.binom.sf(ks, n, q) < policy.tail_tol)[0]
        if ok.size == 0:
            raise ParameterError(f"Bin({n}, {q}) does not fit in max_support={policy.max_support}")
        K = int(ks[ok[0]])
        tail = float(stats.binom.sf(K, n, q))
    # boost's binomial pmf stays accurate for n in the millions, unlike exp(logpmf)
    probs = stats.binom.pmf(np.arange(K + 1), n, q)
    return FinitePmf(0, probs, tail)


def kl_divergence(mu: FinitePmf, nu: FinitePmf) -> float:
    """Relative entropy H(mu | nu) with 0 log 0 = 0.

    Returns ``inf`` when ``mu`` puts more than 1e-12 of mass on points where
    ``nu`` vanishes; smaller amounts are treated as truncation noise.
    """
    lo = min(mu.support_offset, nu.support_offset)
    hi = max(mu.last, nu.last)
    m = np.zeros(hi - lo + 1)
    v = np.zeros(hi - lo + 1)
    m[mu.support_offset - lo : mu.last - lo + 1] = mu.probs
    v[nu.support_offset - lo : nu.last - lo + 1] = nu.probs
    bad = (v == 0) & (m > 0)
    if np.any(bad):
        if m[bad].sum() > NORMALIZATION_TOL:
            return math.inf
        m = np.where(bad, 0.0, m)
    pos = m > 0
    value = float(np.sum(m[pos] * (np.log(m[pos]) - np.log(v[pos]))))
    return max(value, 0.0)


def tilt(nu: FinitePmf, weights) -> tuple[FinitePmf, float]:
    """Exponentially tilt ``nu``: mu_k proportional to nu_k * exp(w_k).

    Returns the normalized tilted pmf (on ``nu``'s stored support, tail 0)
    and ``log sum_k nu_k exp(w_k)``.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != nu.probs.shape:
        raise ParameterError("weights must match the support of nu")
    if not np.all(np.isfinite(w)):
        raise ParameterError("tilt weights must be finite")
    with np.errstate(divide="ignore"):
        log_terms = np.log(nu.probs) + w
    log_z = float(logsumexp(log_terms))
    probs = np.exp(log_terms - log_z)
    probs /= probs.sum()
    return FinitePmf(nu.support_offset, probs, 0.0), log_z


def poisson_partial_sum(lam: float, n: int) -> float:
    """P(Poi_lam <= n) by the term recurrence t_{i+1} = t_i lam / (i+1).

    The running sum is rescaled whenever it grows large, so ``lam`` and
    ``n`` in the thousands do not overflow.
    """
    if n < 0:
        return 0.0
    term, total, log_scale = 1.0, 1.0, 0.0
    for i in range(n):
        term *= lam / (i + 1)
        total += term
        if total > 1e250:
            total *= 1e-250
            term *= 1e-250
            log_scale += 250.0 * math.log(10.0)
    return math.exp(math.log(total) + log_scale - lam)


def poisson_partial_mean(lam: float, n: int) -> float:
    """E[X 1{X <= n}] for X ~ Poi_lam, equal to lam * P(Poi_lam <= n - 1)."""
    return lam * poisson_partial_sum(lam, n - 1)


def trim_upper(pmf: FinitePmf, tail_tol: float) -> FinitePmf:
    """Drop the largest support points whose total mass is below ``tail_tol``."""
    cum_from_top = np.cumsum(pmf.probs[::-1])[::-1]
    # keep index i if mass strictly above i is >= tail_tol
    above = np.append(cum_from_top[1:], 0.0) + pmf.tail_mass
    keep = np.nonzero(above >= tail_tol)[0]
    last = int(keep[-1]) + 1 if keep.size else 0
    if last >= pmf.probs.size - 1:
        return pmf
    probs = pmf.probs[: last + 1].copy()
    return FinitePmf(pmf.support_offset, probs, 1.0 - probs.sum())
