"""Command-line entry point: ``aloha-ldp <subcommand> [flags]``.

Every subcommand produces a table. CSV output has a header row and uses 12
significant digits; JSON output is one object with ``schema_version``,
``command``, ``columns`` and ``rows``. Non-finite numbers are written as
the strings "inf", "-inf" and "nan" in JSON.

Exit codes: 0 on success, 2 on invalid arguments or parameters, 1 on
runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import enum
import io
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .conditional import conditional_attempts, sign_diagnostic
from .errors import ParameterError
from .exact_oracle import convolve_n, empirical_rate, slot_law
from .lln import throughput_sweep, typical_ib, typical_mc
from .optimizer import optimal_a_star
from .rare_event import SuccessesAtMost, is_estimate
from .rate_ib import contraction_rate_s, rate_g_ib, rate_l_ib, rate_l_ib_min_r
from .rate_mc import rate_g_mc, rate_l_mc, reference_measure_m
from .simulator import AccessRule, ModelParams, Scenario, run_batch

SCHEMA_VERSION = "1"
THREADS_ENV = "ALOHA_LDP_THREADS"


class Table:
    def __init__(self, columns):
        self.columns = list(columns)
        self.rows = []

    def add(self, **values):
        self.rows.append([values.get(c) for c in self.columns])


# --- formatting ----------------------------------------------------------------


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.12g" % v
    if isinstance(v, enum.Enum):
        return str(v.value)
    return str(v)


def _json_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, enum.Enum):
        return v.value
    return v


def render(table: Table, fmt: str, command: str) -> str:
    if fmt == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "columns": table.columns,
            "rows": [dict(zip(table.columns, map(_json_cell, row))) for row in table.rows],
        }
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


# --- argument helpers ----------------------------------------------------------


def grid(text: str) -> list[float]:
    """'0.1,0.2,0.5' or 'start:stop:num' (inclusive linspace)."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            n = int(num)
            if n < 1:
                raise ValueError
            return [float(x) for x in np.linspace(float(start), float(stop), n)]
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use a,b,c or start:stop:num") from None
    if not values:
        raise argparse.ArgumentTypeError("empty grid")
    return values


def int_grid(text: str) -> list[int]:
    vals = grid(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"integers required, got {text!r}")
    return [int(v) for v in vals]


def _rule(text: str) -> AccessRule:
    return AccessRule(text)


def _scenario(text: str) -> Scenario:
    return Scenario(text)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        return n
    return 1


def _params(args) -> ModelParams:
    return ModelParams(args.b, args.p, args.kappa, args.slots)


# --- subcommands -----------------------------------------------------------------


def cmd_simulate(args) -> Table:
    params = _params(args).validate(args.rule)
    workers = _threads(args)
    stats = run_batch(params, args.rule, args.scenario, args.reps, args.seed, workers=max(1, workers))
    if args.raw:
        t = Table(["replication", "attempts", "successes", "successful_slots"])
        for rep, a, s, r in stats.raw_rows():
            t.add(replication=rep, attempts=a, successes=s, successful_slots=r)
        return t
    summary = stats.summary()
    typ = (typical_ib if args.scenario is Scenario.INTERFERENCE_BASED else typical_mc)(args.b, args.p, args.kappa)
    summary["s_typical"] = typ.s
    cols = ["rule", "scenario", "b", "p", "kappa", "n_slots", "seed"] + [k for k in summary if k != "n_slots"]
    t = Table(cols)
    t.add(rule=args.rule, scenario=args.scenario, b=args.b, p=args.p, kappa=args.kappa, seed=args.seed, **summary)
    return t


def cmd_lln(args) -> Table:
    ib = typical_ib(args.b, args.p, args.kappa)
    mc = typical_mc(args.b, args.p, args.kappa)
    t = Table(["b", "p", "kappa", "a", "s_ib", "s_mc", "r"])
    t.add(b=args.b, p=args.p, kappa=args.kappa, a=ib.a, s_ib=ib.s, s_mc=mc.s, r=ib.r)
    return t


def cmd_sweep(args) -> Table:
    t = Table(["p", "s_ib", "s_mc", "a", "r"])
    for row in throughput_sweep(args.b, args.kappa, args.p_grid):
        t.add(**row)
    return t


def cmd_rate_ib(args) -> Table:
    bp = args.b * args.p
    t = Table(["a", "s", "r", "value", "B", "C", "D"])
    if args.contraction:
        for s in args.s:
            sol = contraction_rate_s(bp, args.kappa, s)
            t.add(a=sol.a, s=s, r=sol.r, value=sol.value, B=sol.B, C=sol.C, D=sol.D)
        return t
    for a in args.a:
        for s in args.s:
            for r in args.r or [None]:
                if r is None:
                    sol = rate_l_ib_min_r(bp, args.kappa, a, s)
                    r_out = sol.r
                else:
                    sol = rate_l_ib(bp, args.kappa, a, s, r)
                    r_out = r
                value = sol.value
                if args.rule is AccessRule.GLOBAL and math.isfinite(value):
                    value = rate_g_ib(args.b, args.p, args.kappa, a, s, r_out).value
                t.add(a=a, s=s, r=r_out, value=value, B=sol.B, C=sol.C, D=sol.D)
    return t


def cmd_rate_mc(args) -> Table:
    bp = args.b * args.p
    if args.dump_m:
        m = reference_measure_m(bp, args.kappa)
        t = Table(["i", "j", "mass"])
        for i, j, w in m.rows():
            t.add(i=i, j=j, mass=w)
        return t
    t = Table(["a", "s", "value", "beta", "gamma"])
    for a in args.a:
        for s in args.s:
            if args.rule is AccessRule.GLOBAL:
                res = rate_g_mc(args.b, args.p, args.kappa, a, s)
                inner = res.detail
                beta = getattr(inner, "beta", math.nan)
                gamma = getattr(inner, "gamma", math.nan)
                t.add(a=a, s=s, value=res.value, beta=beta, gamma=gamma)
            else:
                sol = rate_l_mc(bp, args.kappa, a, s)
                t.add(a=a, s=s, value=sol.value, beta=sol.beta, gamma=sol.gamma)
    return t


def cmd_optimize(args) -> Table:
    t = Table(["kappa", "a_star", "p_star", "s_star", "residual"])
    for k in args.kappa:
        o = optimal_a_star(k, b=args.b)
        t.add(kappa=k, a_star=o.a_star, p_star=o.p_star, s_star=o.s_star, residual=o.residual)
    return t


def cmd_conditional(args) -> Table:
    bp = args.b * args.p
    s_p = typical_ib(args.b, args.p, args.kappa).s
    s_values = args.s if args.s else [f * s_p for f in (0.9, 0.95, 0.98, 1.02, 1.05)]
    t = Table(["s", "a_p_s", "C", "position", "sign"])
    for s in s_values:
        sol = conditional_attempts(bp, args.kappa, s)
        sign = None
        if s != s_p:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sign = sign_diagnostic(args.b, args.p, args.kappa, s, radius=args.radius)
        t.add(s=s, a_p_s=sol.a_p_s, C=sol.C, position=sol.side, sign=sign)
    return t


def cmd_oracle(args) -> Table:
    params = _params(args).validate(AccessRule.LOCAL)
    law = convolve_n(slot_law(params, args.scenario), args.slots, marginals=False)
    if args.s is None:
        t = Table(["k", "prob", "log_prob"])
        for k, lp in enumerate(law.log_successes):
            t.add(k=k, prob=math.exp(lp), log_prob=lp)
        return t
    t = Table(["n_slots", "s", "log_prob", "empirical_rate", "limit_rate"])
    for s in args.s:
        limit = math.nan
        if args.scenario is Scenario.INTERFERENCE_BASED:
            limit = contraction_rate_s(args.b * args.p, args.kappa, s, verify=False).value
        k = int(math.floor(s * args.slots + 1e-9))
        t.add(n_slots=args.slots, s=s, log_prob=law.log_cdf(k), empirical_rate=empirical_rate(law, s), limit_rate=limit)
    return t


def cmd_rare(args) -> Table:
    params = _params(args).validate(AccessRule.LOCAL)
    event = SuccessesAtMost(args.s)
    est = is_estimate(params, event, reps=args.reps, seed=args.seed, workers=max(1, _threads(args)), tilt=not args.naive)
    cols = ["event", "estimate", "std_error", "relative_error", "implied_rate", "n_samples", "hits", "tilted"]
    t = Table(cols)
    t.add(**{c: getattr(est, c) for c in cols})
    return t


COMMANDS = {
    "simulate": cmd_simulate,
    "lln": cmd_lln,
    "sweep": cmd_sweep,
    "rate-ib": cmd_rate_ib,
    "rate-mc": cmd_rate_mc,
    "optimize": cmd_optimize,
    "conditional": cmd_conditional,
    "oracle": cmd_oracle,
    "rare": cmd_rare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--out", help="write to this file instead of stdout")
    common.add_argument("--threads", type=int, default=None, help=f"worker processes (default ${THREADS_ENV} or 1)")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--b", type=float, default=1.0)
    model.add_argument("--p", type=float, default=1.0)
    model.add_argument("--kappa", type=int, default=1)
    model.add_argument("--rule", type=_rule, choices=list(AccessRule), default=AccessRule.LOCAL)
    model.add_argument("--scenario", type=_scenario, choices=list(Scenario), default=Scenario.INTERFERENCE_BASED)

    runs = argparse.ArgumentParser(add_help=False)
    runs.add_argument("--slots", type=int, default=1000)
    runs.add_argument("--reps", type=int, default=100)
    runs.add_argument("--seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog="aloha-ldp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, model, runs], help="Monte Carlo batch")
    p.add_argument("--raw", action="store_true", help="one row per replication")
    sub.add_parser("lln", parents=[common, model], help="typical values")
    p = sub.add_parser("sweep", parents=[common, model], help="throughput over a p grid")
    p.add_argument("--p-grid", type=grid, default=grid("0.05:3:60"))
    p = sub.add_parser("rate-ib", parents=[common, model], help="interference-based rate function")
    p.add_argument("--a", type=grid, default=[1.0])
    p.add_argument("--s", type=grid, default=[0.3])
    p.add_argument("--r", type=grid, default=None, help="omit to minimize over r")
    p.add_argument("--contraction", action="store_true", help="rate of S_N / N alone at each --s")
    p = sub.add_parser("rate-mc", parents=[common, model], help="multi-channel rate function")
    p.add_argument("--a", type=grid, default=[1.0])
    p.add_argument("--s", type=grid, default=[0.3])
    p.add_argument("--dump-m", action="store_true", help="emit the reference measure M instead")
    p = sub.add_parser("optimize", parents=[common], help="optimal access probability")
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--kappa", type=int_grid, default=[1])
    p = sub.add_parser("conditional", parents=[common, model], help="conditional attempt rate")
    p.add_argument("--s", type=grid, default=None)
    p.add_argument("--radius", type=float, default=0.02)
    p = sub.add_parser("oracle", parents=[common, model], help="exact finite-N law of S_N")
    p.add_argument("--slots", type=int, default=100)
    p.add_argument("--s", type=grid, default=None, help="report P(S_N <= sN) instead of the pmf")
    p = sub.add_parser("rare", parents=[common, model, runs], help="importance-sampling estimate")
    p.add_argument("--s", type=float, default=0.25)
    p.add_argument("--naive", action="store_true", help="plain Monte Carlo")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        table = COMMANDS[args.command](args)
        text = render(table, args.format, args.command)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures of the numerics or I/O
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0
