"""Importance sampling for rare throughput events, local rule, interference-based.

Slots are drawn i.i.d. from the binomial slot law tilted by the duals of the
rate function at the event's dominating point,

    g_k ∝ b_k exp(B k + C k 1{k <= kappa} + D 1{k <= kappa}),

and each replication is reweighted by the product likelihood ratio
prod_j Z / exp(w(A_j)). Replication r draws from SeedSequence([seed, r]).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .errors import ParameterError, SolverError
from .lln import typical_ib
from .prob_core import binomial_pmf
from .rate_ib import DualSolutionIB, contraction_rate_s, rate_l_ib
from .simulator import ModelParams, replication_rng


@dataclass(frozen=True)
class SuccessesAtMost:
    """{S_N <= floor(s N)}."""

    s: float

    def contains(self, attempts, successes, successful_slots, n_slots):
        return successes <= math.floor(self.s * n_slots + 1e-9)

    def is_full(self, kappa: int) -> bool:
        return self.s >= kappa

    def describe(self) -> str:
        return f"S_N <= {self.s:g} N"


@dataclass(frozen=True)
class Box:
    """Closed box on (A_N, S_N, R_N) / N."""

    a: tuple[float, float] = (0.0, math.inf)
    s: tuple[float, float] = (0.0, math.inf)
    r: tuple[float, float] = (0.0, 1.0)

    def contains(self, attempts, successes, successful_slots, n_slots):
        ok = np.ones(np.shape(attempts), dtype=bool)
        for (lo, hi), v in ((self.a, attempts), (self.s, successes), (self.r, successful_slots)):
            x = np.asarray(v) / n_slots
            ok &= (x >= lo - 1e-12) & (x <= hi + 1e-12)
        return ok

    def is_full(self, kappa: int) -> bool:
        a_all = self.a[0] <= 0 and self.a[1] == math.inf
        return a_all and self.s[0] <= 0 and self.s[1] >= kappa and self.r[0] <= 0 and self.r[1] >= 1

    def describe(self) -> str:
        return f"A/N in {list(self.a)}, S/N in {list(self.s)}, R/N in {list(self.r)}"


@dataclass(frozen=True)
class ISEstimate:
    event: str
    estimate: float
    relative_error: float
    implied_rate: float
    n_samples: int
    std_error: float
    tilted: bool = True
    hits: int = 0


def tilt_weights(duals: DualSolutionIB | None, kappa: int, k: np.ndarray) -> np.ndarray:
    """w(k) = B k + C k 1{k<=kappa} + D 1{k<=kappa}; absent duals count as 0."""
    if duals is None:
        return np.zeros(k.size)
    head = k <= kappa

    def val(x):
        return 0.0 if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)

    B, C, D = val(duals.B), val(duals.C), val(duals.D)
    with np.errstate(invalid="ignore"):
        ck = np.where(head & (k > 0), C * k, 0.0)
    return B * k + ck + np.where(head, D, 0.0)


def dominating_point(bp: float, kappa: int, event) -> DualSolutionIB | None:
    """Minimizer of the rate function over the event's closure, with its duals.

    ``None`` means the typical point lies in the event, so no tilt is needed.
    """
    typ = typical_ib(1.0, bp, kappa)
    if isinstance(event, SuccessesAtMost):
        if event.s >= typ.s:
            return None
        return contraction_rate_s(bp, kappa, max(event.s, 0.0))
    if isinstance(event, Box):
        if event.contains(typ.a, typ.s, typ.r, 1.0):
            return None
        lo = np.array([event.a[0], event.s[0], event.r[0]], dtype=float)
        hi = np.array([min(event.a[1], max(event.a[0], typ.a) * 4 + 4), min(event.s[1], kappa), event.r[1]], dtype=float)

        def rate(x):
            try:
                v = rate_l_ib(bp, kappa, *x).value
            except (SolverError, OverflowError):
                return 1e6
            return v if math.isfinite(v) else 1e6

        grid = [np.linspace(l, h, 9) for l, h in zip(lo, hi)]
        best = min(
            ((rate((a, s, r)), (a, s, r)) for a in grid[0] for s in grid[1] for r in grid[2]), key=lambda t: t[0]
        )
        res = optimize.minimize(rate, best[1], method="L-BFGS-B", bounds=list(zip(lo, hi)))
        x = res.x if res.fun <= best[0] else np.array(best[1])
        return rate_l_ib(bp, kappa, *x)
    raise ParameterError(f"unsupported event {event!r}")


def _slot_arrays(params: ModelParams, duals, kappa):
    base = binomial_pmf(params.participants, params.p / params.n_slots)
    k = base.support
    with np.errstate(divide="ignore"):
        log_b = np.log(base.probs)
    w = tilt_weights(duals, kappa, k)
    log_g = log_b + w
    log_z = float(logsumexp(log_g[np.isfinite(log_g)]))
    g = np.exp(log_g - log_z)
    g[~np.isfinite(g)] = 0.0
    return k, w, g / g.sum(), log_z


def _chunk(params, event, duals, seed, indices):
    kappa, N = params.kappa, params.n_slots
    k, w, g, log_z = _slot_arrays(params, duals, kappa)
    cdf = np.cumsum(g)
    cdf[-1] = 1.0
    out = np.empty((len(indices), 2))
    for row, rep in enumerate(indices):
        rng = replication_rng(seed, rep)
        idx = np.searchsorted(cdf, rng.random(N), side="right")
        a = k[idx]
        head = a <= kappa
        A, S, R = int(a.sum()), int(a[head].sum()), int(head.sum())
        out[row, 0] = float(event.contains(A, S, R, N))
        out[row, 1] = N * log_z - float(w[idx].sum())
    return out


def is_estimate(
    params: ModelParams,
    event,
    duals: DualSolutionIB | None = None,
    reps: int = 10_000,
    seed: int = 0,
    workers: int = 1,
    tilt: bool = True,
) -> ISEstimate:
    """Unbiased estimate of P(event) for the local rule, interference-based.

    Without duals the dominating point is located first; ``tilt=False`` (or
    a typical point inside the event) gives plain Monte Carlo.
    """
    params.validate()
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    N, kappa = params.n_slots, params.kappa
    if event.is_full(kappa):
        return ISEstimate(event.describe(), 1.0, 0.0, 0.0, reps, 0.0, tilted=False, hits=reps)
    if not tilt:
        warnings.warn("untilted sampling: variance grows exponentially in N for rare events", stacklevel=2)
        duals = None
    elif duals is None:
        try:
            duals = dominating_point(params.b * params.p, kappa, event)
        except SolverError as exc:
            warnings.warn(f"no dominating point ({exc}); sampling untilted", stacklevel=2)
    indices = list(range(reps))
    if workers <= 1:
        table = _chunk(params, event, duals, seed, indices)
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        table = np.empty((reps, 2))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_chunk, params, event, duals, seed, c) for c in chunks]
            for c, f in zip(chunks, futs):
                table[c] = f.result()
    hit = table[:, 0] > 0
    x = np.where(hit, np.exp(table[:, 1]), 0.0)
    est = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.inf
    rel = se / est if est > 0 else math.inf
    rate = -math.log(est) / N if est > 0 else math.inf
    return ISEstimate(event.describe(), est, rel, rate, reps, se, tilted=duals is not None, hits=int(hit.sum()))
