"""End-to-end acceptance checks, one test per criterion (criterion 8 split by clause).

Each clause is recorded through the ``acceptance`` fixture; the terminal
summary prints one PASS/FAIL line per criterion with the clause details.
"""

import itertools
import math
import time

import numpy as np
import pytest

from aloha_ldp.conditional import Side, conditional_attempts, sign_diagnostic
from aloha_ldp.exact_oracle import convolve_n, empirical_rate, slot_law
from aloha_ldp.lln import throughput_sweep, typical_ib
from aloha_ldp.optimizer import lower_bound, optimal_a_star, sp_derivative
from aloha_ldp.rare_event import SuccessesAtMost, is_estimate
from aloha_ldp.rate_ib import contraction_rate_s, feasibility_ib, rate_l_ib, rate_l_ib_alternate
from aloha_ldp.rate_mc import rate_l_mc
from aloha_ldp.simulator import AccessRule, ModelParams, Scenario, run_batch

from oracles import brute_rate_ib, brute_rate_mc

IB, MC = Scenario.INTERFERENCE_BASED, Scenario.MULTI_CHANNEL
N_LLN, REPS_LLN = 10_000, 1_000


def finish(acceptance, crit, clauses):
    for clause, ok, detail in clauses:
        acceptance.record(crit, clause, ok, detail)
    failed = [c for c, ok, _ in clauses if not ok]
    assert not failed, f"criterion {crit}: failed clauses {failed}"


def _batch_mean(kappa, scenario, p=1.0, seed=2024):
    t0 = time.perf_counter()
    batch = run_batch(ModelParams(1.0, p, kappa, N_LLN), AccessRule.LOCAL, scenario, REPS_LLN, seed=seed, workers=1)
    dt = time.perf_counter() - t0
    x = batch.successes / N_LLN
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(REPS_LLN)), dt


def test_criterion_1_lln_ib(acceptance):
    clauses = []
    for kappa, target in [(1, math.exp(-1)), (2, 2 * math.exp(-1))]:
        mean, se, dt = _batch_mean(kappa, IB)
        z = abs(mean - target) / se
        clauses.append((f"kappa={kappa} mean within 3 SE", z < 3, f"mean={mean:.6f} target={target:.6f} z={z:.2f}"))
        clauses.append((f"kappa={kappa} runtime < 60 s", dt < 60, f"{dt:.2f} s"))
    finish(acceptance, "1", clauses)


def test_criterion_2_lln_mc(acceptance):
    target = math.exp(-0.5)
    mean, se, _ = _batch_mean(2, MC)
    z = abs(mean - target) / se
    clauses = [("kappa=2 mean within 3 SE of e^-1/2", z < 3, f"mean={mean:.6f} z={z:.2f}")]
    kappa, b = 2, 1.0
    grid = np.sort(np.append(np.linspace(0.2, 5.0, 481), kappa / b))
    rows = throughput_sweep(b, kappa, grid)
    i = int(np.argmax([r["s_mc"] for r in rows]))
    peak = rows[i]["s_mc"]
    clauses.append(("curve maximum at p = kappa/b", rows[i]["p"] == kappa / b, f"argmax p={rows[i]['p']:.4f}"))
    clauses.append(("curve maximum = kappa/e within 1%", abs(peak / (kappa / math.e) - 1) < 0.01, f"max={peak:.6f}"))
    mean_pk, se_pk, _ = _batch_mean(2, MC, p=kappa / b, seed=2025)
    clauses.append(
        (
            "simulated throughput at p = kappa/b within 1% of kappa/e",
            abs(mean_pk / (kappa / math.e) - 1) < 0.01,
            f"mean={mean_pk:.6f} se={se_pk:.2e}",
        )
    )
    finish(acceptance, "2", clauses)


COMBOS = [(1.0, p, kappa) for p in (0.5, 1.0, 1.5) for kappa in (1, 2, 3)]


def test_criterion_3_zero_and_positivity(acceptance):
    clauses = []
    for b, p, kappa in COMBOS:
        t = typical_ib(b, p, kappa)
        zero = rate_l_ib(b * p, kappa, t.a, t.s, t.r).value
        worst = math.inf
        for d in itertools.product((-0.05, 0.0, 0.05), repeat=3):
            if not any(d):
                continue
            x = (t.a + d[0], t.s + d[1], t.r + d[2])
            if feasibility_ib(kappa, *x):
                continue
            worst = min(worst, rate_l_ib(b * p, kappa, *x).value)
        clauses.append(
            (
                f"b={b:g} p={p:g} kappa={kappa}",
                zero < 1e-10 and worst > 1e-3,
                f"typical={zero:.1e} min perturbed={worst:.2e}",
            )
        )
    finish(acceptance, "3", clauses)


def _ib_points(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        kappa = int(rng.integers(1, 4))
        r = rng.uniform(0.15, 0.85)
        s = r * rng.uniform(0.1, 0.9) * kappa
        a = s + (1 - r) * (kappa + 1 + rng.uniform(0.2, 2.5))
        out.append((kappa, a, s, r))
    return out


def _mc_points(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        kappa = int(rng.integers(1, 4))
        s = rng.uniform(0.05, 0.9) * kappa
        out.append((kappa, s + rng.uniform(0.1, 2.0), s))
    return out


def test_criterion_4_brute_force(acceptance):
    ib_err = max(abs(rate_l_ib(1.0, k, a, s, r).value - brute_rate_ib(1.0, k, a, s, r)) for k, a, s, r in _ib_points(20, 101))
    mc_err = max(abs(rate_l_mc(1.0, k, a, s).value - brute_rate_mc(1.0, k, a, s)) for k, a, s in _mc_points(20, 102))
    finish(
        acceptance,
        "4",
        [
            ("rate_L_IB vs brute force, 20 points", ib_err < 1e-6, f"max err={ib_err:.1e}"),
            ("rate_L_MC vs brute force, 20 points", mc_err < 1e-6, f"max err={mc_err:.1e}"),
        ],
    )


def test_criterion_5_alternate_form(acceptance):
    clauses = []
    for kappa in (1, 2, 3):
        for bp in (0.5, 1.0, 2.0):
            worst, n = 0.0, 0
            for r in np.linspace(0.2, 0.8, 5):
                for x in np.linspace(0.15, 0.85, 5) * kappa:
                    for y in kappa + 1 + np.linspace(0.3, 2.5, 5):
                        s = r * x
                        a = s + (1 - r) * y
                        alt = rate_l_ib_alternate(bp, kappa, a, s, r).value
                        worst = max(worst, abs(alt - rate_l_ib(bp, kappa, a, s, r).value))
                        n += 1
            clauses.append((f"kappa={kappa} bp={bp:g}, {n} points", worst < 1e-6, f"max diff={worst:.1e}"))
    finish(acceptance, "5", clauses)


def test_criterion_6_optimal_p(acceptance):
    a1 = optimal_a_star(1).a_star
    a2 = optimal_a_star(2).a_star
    golden = (1 + math.sqrt(5)) / 2
    resid = max(abs(sp_derivative(1.0, optimal_a_star(k).p_star, k)) for k in range(1, 51))
    margins = [optimal_a_star(k).a_star - lower_bound(k) for k in range(2, 51)]
    finish(
        acceptance,
        "6",
        [
            ("a*(1) = 1 to 1e-10", abs(a1 - 1) < 1e-10, f"{a1!r}"),
            ("a*(2) = golden ratio to 1e-9", abs(a2 - golden) < 1e-9, f"{a2!r}"),
            ("sp_derivative(p*) residual < 1e-9, kappa <= 50", resid < 1e-9, f"max={resid:.1e}"),
            ("lower bound holds, kappa 2..50", min(margins) >= 0, f"min margin={min(margins):.3f}"),
        ],
    )


def test_criterion_7_conditioning_signs(acceptance):
    kappa = 2
    opt = optimal_a_star(kappa)
    clauses = []
    for factor, expected in [(0.5, Side.SAME_SIDE), (1.5, Side.OPPOSITE_SIDE)]:
        p = factor * opt.p_star
        s_p = typical_ib(1.0, p, kappa).s
        for ds in (-0.02, 0.02):
            got = sign_diagnostic(1.0, p, kappa, (1 + ds) * s_p)
            clauses.append((f"p={factor:g}p*, s=(1{ds:+g})s_p", got is expected, got.value))
    s_star = typical_ib(1.0, opt.p_star, kappa).s
    for f in (0.8, 0.9, 1.05):
        s = f * s_star
        if not 0 < s < kappa:
            continue
        a = conditional_attempts(opt.a_star, kappa, s).a_p_s
        clauses.append((f"p=p*, s={f:g}s_p*: a_p(s) > bp*", a > opt.a_star, f"a={a:.6f} bp*={opt.a_star:.6f}"))
    finish(acceptance, "7", clauses)


# criterion 8 ------------------------------------------------------------------

EVENT_S = 0.25
N_RARE = 200


@pytest.fixture(scope="module")
def rare_case():
    params = ModelParams(1.0, 1.0, 1, N_RARE)
    ex = convolve_n(slot_law(params, IB), N_RARE, marginals=False)
    exact = math.exp(ex.log_cdf(math.floor(EVENT_S * N_RARE)))
    est = is_estimate(params, SuccessesAtMost(EVENT_S), reps=10_000, seed=1)
    limit = contraction_rate_s(1.0, 1, EVENT_S).value
    return exact, est, limit


def test_criterion_8_is_vs_exact(acceptance, rare_case):
    exact, est, _ = rare_case
    z = abs(est.estimate - exact) / est.std_error
    finish(
        acceptance,
        "8",
        [("IS within 4 SE of exact P(S_200 <= 50)", z < 4, f"IS={est.estimate:.4e} exact={exact:.4e} z={z:.2f}")],
    )


def test_criterion_8_implied_rate(acceptance, rare_case):
    _, est, limit = rare_case
    rel = abs(est.implied_rate - limit) / limit
    finish(
        acceptance,
        "8",
        [
            (
                "implied rate within 15% of contraction_rate_s(0.25)",
                rel < 0.15,
                f"implied={est.implied_rate:.5f} limit={limit:.5f} off by {100 * rel:.1f}%",
            )
        ],
    )


def test_criterion_8_gap_shrinks(acceptance, rare_case):
    _, _, limit = rare_case
    gaps = []
    for n in (50, 100, 200):
        ex = convolve_n(slot_law(ModelParams(1.0, 1.0, 1, n), IB), n, marginals=False)
        gaps.append(abs(empirical_rate(ex, EVENT_S) - limit))
    ok = gaps[0] > gaps[1] > gaps[2]
    finish(
        acceptance,
        "8",
        [("gap to limit rate shrinks over N = 50, 100, 200", ok, ", ".join(f"{g:.5f}" for g in gaps))],
    )
