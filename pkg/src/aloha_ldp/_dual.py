"""Newton solver for entropy minimization under linear moment constraints.

Minimizing H(mu | q) subject to <mu, F> = t over probability vectors is
dual to minimizing the strictly convex function

    g(theta) = log sum_k q_k exp(theta . F(k)) - theta . t,

whose gradient is E_theta[F] - t and whose Hessian is Cov_theta(F). The
minimizer is the tilted measure mu_k = q_k exp(theta . F(k) - g(theta) - theta . t)
and the optimal value is theta . t - log-partition.

References supply (log q, F) on a support that is adequate for the current
theta, so the support can grow as the tilt pushes mass outward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, stats
from scipy.special import logsumexp

from .prob_core import poisson_cutoff, poisson_logpmf

ARMIJO = 1e-4


@dataclass
class DualFit:
    theta: np.ndarray
    log_partition: float
    probs: np.ndarray
    points: np.ndarray
    features: np.ndarray
    log_q: np.ndarray
    residual: float
    iterations: int
    converged: bool

    @property
    def moments(self) -> np.ndarray:
        return self.probs @ self.features

    def value(self, targets) -> float:
        return float(np.dot(self.theta, targets) - self.log_partition)

    def entropy(self) -> float:
        """H(mu | q) evaluated directly from the tilted probabilities."""
        pos = self.probs > 0
        p = self.probs[pos]
        return float(np.sum(p * (np.log(p) - self.log_q[pos])))


class PoissonReference:
    """Poi_lam restricted to a subset of N_0, with features F(k).

    Beyond the largest index where a non-``k`` feature is supported, the
    tilt weight must be ``tail_slope(theta) * k``; this is what lets the
    truncation point be chosen from the tilted tail, which is again a
    (scaled) Poisson tail.
    """

    def __init__(
        self,
        lam: float,
        features: Callable[[np.ndarray], np.ndarray],
        tail_slope: Callable[[np.ndarray], float] | None = None,
        keep: Callable[[np.ndarray], np.ndarray] | None = None,
        kmax: int | None = None,
        kmin_support: int = 0,
        tail_tol: float = 1e-14,
        max_support: int = 200_000,
    ):
        self.lam = lam
        self.features = features
        self.tail_slope = tail_slope or (lambda theta: 0.0)
        self.keep = keep
        self.kmax = kmax
        self.kmin_support = kmin_support
        self.tail_tol = tail_tol
        self.max_support = max_support
        self._cache: dict[int, tuple] = {}

    def _arrays_for(self, K: int):
        hit = self._cache.get(K)
        if hit is None:
            k = np.arange(K + 1)
            if self.keep is not None:
                k = k[self.keep(k)]
            F = np.atleast_2d(np.asarray(self.features(k), dtype=float))
            if F.shape[0] != k.size:
                F = F.T
            hit = (poisson_logpmf(k, self.lam), F, k)
            self._cache[K] = hit
        return hit

    def arrays(self, theta: np.ndarray):
        if self.kmax is not None:
            return self._arrays_for(self.kmax)
        slope = float(self.tail_slope(theta))
        lam_t = self.lam * math.exp(min(slope, 700.0))
        if lam_t + 10.0 * math.sqrt(lam_t) + 20.0 > self.max_support:
            raise OverflowError(f"tilted support exceeds {self.max_support} points")
        K = max(self.kmin_support, poisson_cutoff(lam_t, self.tail_tol))
        log_tol = math.log(self.tail_tol)
        while True:
            if K + 1 > self.max_support:
                raise OverflowError(f"tilted support exceeds {self.max_support} points")
            log_q, F, k = self._arrays_for(K)
            log_z = logsumexp(log_q + F @ theta)
            log_tail = self.lam * math.expm1(slope) + stats.poisson.logsf(K, lam_t)
            if log_tail - log_z < log_tol:
                return log_q, F, k
            K *= 2


def _evaluate(ref, theta):
    log_q, F, pts = ref.arrays(theta)
    log_w = log_q + F @ theta
    log_z = float(logsumexp(log_w))
    probs = np.exp(log_w - log_z)
    return log_z, probs, F, pts, log_q


def _coordinate_sweep(ref, theta, targets):
    """One pass of 1-D minimizations; each partial derivative is increasing."""
    theta = theta.copy()
    for i in range(theta.size):

        def dgi(x, i=i):
            th = theta.copy()
            th[i] = x
            try:
                _, probs, F, _, _ = _evaluate(ref, th)
            except OverflowError:
                # only pushing a coordinate up can blow the support
                return math.inf if x > theta[i] else -math.inf
            return float(probs @ F[:, i] - targets[i])

        lo, hi = theta[i] - 1.0, theta[i] + 1.0
        width = 1.0
        while dgi(lo) > 0 and width < 1e3:
            width *= 2
            lo = theta[i] - width
        width = 1.0
        while dgi(hi) < 0 and width < 1e3:
            width *= 2
            hi = theta[i] + width
        if dgi(lo) <= 0 <= dgi(hi):
            theta[i] = optimize.brentq(dgi, lo, hi, xtol=1e-14, rtol=1e-15)
    return theta


def solve_dual(ref, targets, tol: float = 1e-10, max_iter: int = 200, theta0=None) -> DualFit:
    """Damped Newton on the dual; halving line search, coordinate fallback."""
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    theta = np.zeros(t.size) if theta0 is None else np.array(theta0, dtype=float)
    log_z, probs, F, pts, log_q = _evaluate(ref, theta)
    grad = probs @ F - t
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            it -= 1
            break
        mean = probs @ F
        cov = (F * probs[:, None]).T @ F - np.outer(mean, mean)
        try:
            step = np.linalg.solve(cov, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(cov, -grad, rcond=None)[0]
        g0 = log_z - theta @ t
        slope = float(grad @ step)
        alpha = 1.0
        accepted = False
        while alpha > 1e-12:
            trial = theta + alpha * step
            try:
                lz_t, pr_t, F_t, pts_t, lq_t = _evaluate(ref, trial)
            except OverflowError:
                alpha *= 0.5
                continue
            g_t = lz_t - trial @ t
            grad_t = pr_t @ F_t - t
            if np.all(np.isfinite(grad_t)) and (
                g_t <= g0 + ARMIJO * alpha * slope
                or (np.max(np.abs(grad_t)) < np.max(np.abs(grad)) and g_t <= g0 + 1e-13 * max(1.0, abs(g0)))
            ):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            new_theta = _coordinate_sweep(ref, theta, t)
            lz_t, pr_t, F_t, pts_t, lq_t = _evaluate(ref, new_theta)
            grad_t = pr_t @ F_t - t
            if np.max(np.abs(grad_t)) >= np.max(np.abs(grad)):
                break
            trial = new_theta
        theta = trial
        log_z, probs, F, pts, log_q = lz_t, pr_t, F_t, pts_t, lq_t
        grad = grad_t
    residual = float(np.max(np.abs(grad)))
    return DualFit(
        theta=theta,
        log_partition=log_z,
        probs=probs,
        points=pts,
        features=F,
        log_q=log_q,
        residual=residual,
        iterations=it,
        converged=residual < tol,
    )
