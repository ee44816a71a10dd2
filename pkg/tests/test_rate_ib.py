import math

import numpy as np
import pytest
from scipy import stats

from aloha_ldp.errors import ParameterError
from aloha_ldp.lln import typical_ib
from aloha_ldp.rate_ib import (
    attempts_rate,
    contraction_rate_s,
    feasibility_ib,
    legendre_head,
    legendre_tail,
    rate_g_ib,
    rate_l_ib,
    rate_l_ib_alternate,
    rate_l_ib_min_r,
    rule_correction,
)
from aloha_ldp.simulator import AccessRule

from oracles import brute_rate_ib, kl_min, poisson_weights

LIMIT_S0 = -math.log(1 - math.exp(-1))  # 0.458675...


def interior_point(kappa, r, x, y):
    """(a, s, r) from head mean x in (0, kappa) and tail mean y > kappa + 1."""
    s = r * x
    return s + (1 - r) * y, s, r


def random_points(n, seed, kappa_max=3):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        kappa = int(rng.integers(1, kappa_max + 1))
        r = rng.uniform(0.15, 0.85)
        x = rng.uniform(0.1, 0.9) * kappa
        y = kappa + 1 + rng.uniform(0.2, 2.5)
        out.append((kappa, *interior_point(kappa, r, x, y)))
    return out


# --- I_{L,IB} -------------------------------------------------------------------


@pytest.mark.parametrize("b, p, kappa", [(1, 1, 1), (1, 0.5, 2), (2, 1.5, 3), (0.7, 2, 2)])
def test_zero_at_typical(b, p, kappa):
    t = typical_ib(b, p, kappa)
    sol = rate_l_ib(b * p, kappa, t.a, t.s, t.r)
    assert sol.value < 1e-10
    assert max(abs(sol.B), abs(sol.C), abs(sol.D)) < 1e-6


def test_minimizer_is_reference_at_typical():
    t = typical_ib(1, 1, 2)
    mu = rate_l_ib(1.0, 2, t.a, t.s, t.r).minimizer
    k = mu.support
    np.testing.assert_allclose(mu.probs, stats.poisson.pmf(k, 1.0), atol=1e-9)


@pytest.mark.parametrize("kappa, a, s, r", random_points(8, seed=3))
def test_matches_brute_force(kappa, a, s, r):
    sol = rate_l_ib(1.0, kappa, a, s, r)
    assert abs(sol.value - brute_rate_ib(1.0, kappa, a, s, r)) < 1e-6


@pytest.mark.parametrize("kappa, a, s, r", random_points(10, seed=4))
def test_duality_gap_and_residuals(kappa, a, s, r):
    sol = rate_l_ib(1.5, kappa, a, s, r)
    mu = sol.minimizer
    k = mu.support
    head = k <= kappa
    assert abs(mu.probs @ k - a) < 1e-9
    assert abs(mu.probs[head] @ k[head] - s) < 1e-9
    assert abs(mu.probs[head].sum() - r) < 1e-9
    dual = sol.B * a + sol.C * s + sol.D * r + sol.A
    assert abs(sol.value - dual) < 1e-9
    assert abs(sol.value - sol.checks["entropy"]) < 1e-9


def test_boundary_s_equals_kappa_r():
    # head mass sits on k = kappa; compare with the solve over {kappa} u (kappa, inf)
    kappa, r = 2, 0.6
    a, s = kappa * r + (1 - r) * 4.0, kappa * r
    sol = rate_l_ib(1.0, kappa, a, s, r)
    assert sol.on_boundary
    mu = sol.minimizer
    assert mu.probs[:kappa].sum() < 1e-12
    q = poisson_weights(1.0)
    k = np.arange(q.size)
    keep = k >= kappa
    F = np.column_stack([k, (k == kappa).astype(float)])[keep]
    assert abs(sol.value - kl_min(q[keep], F, [a, r])) < 1e-6


def test_boundary_r_one():
    # r = 1 means Poi conditioned to the head with given mean
    sol = rate_l_ib(1.0, 2, 0.8, 0.8, 1.0)
    q = poisson_weights(1.0, 2)
    k = np.arange(3)
    ref = kl_min(np.append(q, 1e-300)[:3], k[:, None].astype(float), [0.8])
    assert abs(sol.value - ref) < 1e-6


def test_infeasible_is_inf():
    for point in [(1.0, 1.5, 1.0), (2.0, 0.9, 0.5), (1.0, 0.2, 0.5), (1.0, 0.5, 1.2)]:
        assert feasibility_ib(1, *point)
        sol = rate_l_ib(1.0, 1, *point)
        assert sol.value == math.inf and sol.diagnostic


def test_bad_bp():
    with pytest.raises(ParameterError):
        rate_l_ib(0.0, 1, 1.0, 0.3, 0.5)


def test_convexity():
    rng = np.random.default_rng(7)
    pts = random_points(24, seed=8, kappa_max=2)
    by_kappa = {}
    for kappa, *p in pts:
        by_kappa.setdefault(kappa, []).append(np.array(p))
    for kappa, group in by_kappa.items():
        for p1, p2 in zip(group[::2], group[1::2]):
            lam = rng.uniform(0.1, 0.9)
            mid = lam * p1 + (1 - lam) * p2
            lhs = rate_l_ib(1.0, kappa, *mid).value
            rhs = lam * rate_l_ib(1.0, kappa, *p1).value + (1 - lam) * rate_l_ib(1.0, kappa, *p2).value
            assert lhs <= rhs + 1e-8


def test_far_point_converges():
    sol = rate_l_ib(1.0, 1, 7.0, 0.03125, 0.75)
    assert math.isfinite(sol.value) and sol.residual < 1e-9


# --- min over r --------------------------------------------------------------------


def test_min_r_zero_at_lln():
    t = typical_ib(1, 1, 2)
    sol = rate_l_ib_min_r(1.0, 2, t.a, t.s)
    assert sol.value < 1e-10
    assert abs(sol.B) < 1e-6 and abs(sol.C) < 1e-6


@pytest.mark.parametrize("kappa, a, s", [(1, 1.5, 0.2), (2, 2.0, 0.5), (3, 3.0, 1.2), (2, 0.9, 0.6)])
def test_min_r_matches_r_grid(kappa, a, s):
    sol = rate_l_ib_min_r(1.0, kappa, a, s)
    grid = np.linspace(1e-4, 1 - 1e-4, 401)
    vals = [rate_l_ib(1.0, kappa, a, s, r).value for r in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    from scipy.optimize import minimize_scalar

    best = minimize_scalar(lambda r: rate_l_ib(1.0, kappa, a, s, r).value, bounds=(lo, hi), method="bounded",
                           options={"xatol": 1e-10})
    assert sol.value <= min(vals) + 1e-9
    assert abs(sol.value - best.fun) < 1e-6
    assert abs(sol.r - best.x) < 1e-3


def test_min_r_s_zero_then_min_over_a():
    from scipy.optimize import minimize_scalar

    best = minimize_scalar(lambda a: rate_l_ib_min_r(1.0, 1, a, 0.0).value, bounds=(0.5, 6.0), method="bounded",
                           options={"xatol": 1e-10})
    assert best.fun == pytest.approx(LIMIT_S0, abs=1e-8)


# --- contraction to S ------------------------------------------------------------


def test_contraction_zero_at_lln():
    t = typical_ib(1, 1, 1)
    assert contraction_rate_s(1.0, 1, t.s).value < 1e-10


def test_contraction_s_zero():
    assert contraction_rate_s(1.0, 1, 0.0).value == pytest.approx(LIMIT_S0, abs=1e-12)
    assert contraction_rate_s(1.0, 1, 1e-9).value == pytest.approx(LIMIT_S0, abs=1e-6)


@pytest.mark.parametrize("kappa, s", [(1, 0.25), (2, 0.4), (2, 1.2), (3, 0.9)])
def test_contraction_duals_vanish(kappa, s):
    sol = contraction_rate_s(1.0, kappa, s)
    c = sol.checks
    assert abs(c["B"]) < 1e-7 and abs(c["D"]) < 1e-7
    assert abs(c["C"] - sol.C) < 1e-7
    assert abs(c["value"] - sol.value) < 1e-9


@pytest.mark.parametrize("kappa, s", [(1, 0.25), (2, 0.4)])
def test_contraction_matches_grid(kappa, s):
    from scipy.optimize import minimize

    sol = contraction_rate_s(1.0, kappa, s)
    # coarse (a, r) grid, then polish
    best = (math.inf, None)
    for r in np.linspace(0.05, 0.95, 19):
        for y in np.linspace(kappa + 1.1, kappa + 5, 20):
            a = s + (1 - r) * y
            if feasibility_ib(kappa, a, s, r) or s / r >= kappa:
                continue
            v = rate_l_ib(1.0, kappa, a, s, r).value
            if v < best[0]:
                best = (v, (a, r))
    assert sol.value <= best[0] + 1e-9
    res = minimize(lambda x: rate_l_ib(1.0, kappa, x[0], s, x[1]).value, best[1], method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000})
    assert abs(res.fun - sol.value) < 1e-6


def test_contraction_at_kappa():
    sol = contraction_rate_s(1.0, 2, 2.0)
    assert sol.value == pytest.approx(-math.log(stats.poisson.pmf(2, 1.0)), abs=1e-12)
    assert contraction_rate_s(1.0, 2, 2.5).value == math.inf


# --- attempts rates and rule G -------------------------------------------------------


def test_attempts_rate_examples():
    assert attempts_rate(AccessRule.LOCAL, 1, 1, 1) == 0.0
    assert attempts_rate("g", 2, 0.5, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert attempts_rate("l", 1, 1, 2) == pytest.approx(2 * math.log(2) - 1, abs=1e-12)
    assert attempts_rate("l", 1, 1, 0) == pytest.approx(1.0)


def test_attempts_rate_local_below_global():
    b, p = 2.0, 0.4
    for a in [0.6, 0.7, 0.75, 0.85, 0.9, 1.0]:
        assert attempts_rate("l", b, p, a) < attempts_rate("g", b, p, a)


def test_attempts_rate_domain():
    with pytest.raises(ParameterError):
        attempts_rate("l", 1, 1, -0.1)
    with pytest.raises(ParameterError):
        attempts_rate("g", 1, 0.5, 1.5)
    with pytest.raises(ParameterError):
        attempts_rate("g", 1, 1.5, 0.5)


def test_correction_identity():
    rng = np.random.default_rng(2)
    for _ in range(50):
        b = rng.uniform(0.5, 3)
        p = rng.uniform(0.05, 0.95)
        a = rng.uniform(0.01, 0.99) * b
        diff = attempts_rate("g", b, p, a) - attempts_rate("l", b, p, a)
        assert abs(rule_correction(b, p, a) - diff) < 1e-12


def test_rate_g_ib():
    b, p, kappa = 2.0, 0.5, 1
    t = typical_ib(b, p, kappa)
    assert rate_g_ib(b, p, kappa, t.a, t.s, t.r).value < 1e-10
    a, s, r = interior_point(kappa, 0.5, 0.5, 2.5)
    g = rate_g_ib(b, p, kappa, a, s, r)
    l = rate_l_ib(b * p, kappa, a, s, r)
    assert abs((g.value - l.value) - (attempts_rate("g", b, p, a) - attempts_rate("l", b, p, a))) < 1e-12
    assert rate_g_ib(b, p, kappa, 2.5, 0.5, 0.5).value == math.inf


def test_correction_limit_at_b():
    b, p = 2.0, 0.5
    at_b = rule_correction(b, p, b)
    assert math.isfinite(at_b)
    assert rule_correction(b, p, b - 1e-9) == pytest.approx(at_b, abs=1e-7)


# --- Cramer form ----------------------------------------------------------------------


def test_legendre_head_kappa_one():
    # log(1 + e^z) has Legendre transform x log x + (1-x) log(1-x)
    assert legendre_head(1, 0.5) == pytest.approx(-math.log(2), abs=1e-12)
    for x in [0.1, 0.3, 0.9]:
        assert legendre_head(1, x) == pytest.approx(x * math.log(x) + (1 - x) * math.log(1 - x), abs=1e-12)


def test_legendre_domains():
    assert legendre_head(2, 2.5) == math.inf
    assert legendre_tail(2, 2.5) == math.inf
    assert math.isfinite(legendre_tail(2, 3.5))


@pytest.mark.parametrize("bp", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("kappa", [1, 2, 3])
def test_alternate_form_grid(bp, kappa):
    worst = 0.0
    for r in np.linspace(0.2, 0.8, 5):
        for x in np.linspace(0.15, 0.85, 5) * kappa:
            for y in kappa + 1 + np.linspace(0.3, 2.5, 5):
                a, s, rr = interior_point(kappa, r, x, y)
                alt = rate_l_ib_alternate(bp, kappa, a, s, rr).value
                worst = max(worst, abs(alt - rate_l_ib(bp, kappa, a, s, rr).value))
    assert worst < 1e-6


def test_alternate_boundary_r():
    # r = 1: only the head term survives
    alt = rate_l_ib_alternate(1.0, 2, 0.8, 0.8, 1.0).value
    assert alt == pytest.approx(rate_l_ib(1.0, 2, 0.8, 0.8, 1.0).value, abs=1e-8)
    assert rate_l_ib_alternate(1.0, 1, 1.0, 1.5, 1.0).value == math.inf
