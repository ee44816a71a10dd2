"""Monte Carlo engine for slotted ALOHA over one reference interval.

Replication ``r`` of a batch seeded with ``seed`` always draws from the
stream ``SeedSequence([seed, r])``, so batches are bit-identical no matter
how replications are split across worker processes.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


class AccessRule(enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"


class Scenario(enum.Enum):
    MULTI_CHANNEL = "mc"
    INTERFERENCE_BASED = "ib"


@dataclass(frozen=True)
class ModelParams:
    """b participants per slot, access probability p, threshold/channels kappa, N slots."""

    b: float
    p: float
    kappa: int
    n_slots: int

    @property
    def participants(self) -> int:
        # floor(bN); the small offset absorbs representation error such as 0.1 * 30
        return int(math.floor(self.b * self.n_slots + 1e-9))

    def validate(self, rule: AccessRule | None = None) -> "ModelParams":
        if not self.b > 0:
            raise ParameterError("b must be positive")
        if not self.p > 0:
            raise ParameterError("p must be positive")
        if int(self.kappa) != self.kappa or self.kappa < 1:
            raise ParameterError("kappa must be a positive integer")
        if int(self.n_slots) != self.n_slots or self.n_slots < 1:
            raise ParameterError("n_slots must be a positive integer")
        if rule is AccessRule.GLOBAL and self.p > 1:
            raise ParameterError("p must be <= 1 under global rule")
        if rule is AccessRule.LOCAL and self.p / self.n_slots > 1:
            raise ParameterError("p / n_slots must be <= 1 under local rule")
        return self


@dataclass(frozen=True)
class RunSummary:
    attempts: int
    successes: int
    successful_slots: int | None = None


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(replication)])))


def simulate_slots(params: ModelParams, rule: AccessRule, scenario: Scenario, rng: np.random.Generator):
    """Per-slot attempt and success counts, arrays of length N.

    For the interference-based rule the slot succeeds iff its attempt count
    is at most kappa; for the multi-channel rule each attempt picks a
    channel uniformly and succeeds iff it is alone there.
    """
    N, kappa = params.n_slots, params.kappa
    n = params.participants
    if rule is AccessRule.LOCAL:
        attempts = rng.binomial(n, params.p / N, size=N)
        if scenario is Scenario.MULTI_CHANNEL:
            slot_of = np.repeat(np.arange(N), attempts)
            channel = rng.integers(kappa, size=slot_of.size)
            cells = np.bincount(slot_of * kappa + channel, minlength=N * kappa)
    else:
        total = int(rng.binomial(n, params.p))
        if scenario is Scenario.MULTI_CHANNEL:
            # uniform over the N * kappa slot-channel cells
            cells = np.bincount(rng.integers(N * kappa, size=total), minlength=N * kappa)
            attempts = cells.reshape(N, kappa).sum(axis=1)
        else:
            attempts = np.bincount(rng.integers(N, size=total), minlength=N)
    if scenario is Scenario.INTERFERENCE_BASED:
        successes = np.where(attempts <= kappa, attempts, 0)
    else:
        successes = (cells == 1).reshape(N, kappa).sum(axis=1)
    return attempts, successes


def simulate_run(params: ModelParams, rule: AccessRule, scenario: Scenario, rng: np.random.Generator) -> RunSummary:
    params.validate(rule)
    attempts, successes = simulate_slots(params, rule, scenario, rng)
    r = None
    if scenario is Scenario.INTERFERENCE_BASED:
        r = int(np.count_nonzero(attempts <= params.kappa))
    return RunSummary(int(attempts.sum()), int(successes.sum()), r)


@dataclass
class BatchStats:
    params: ModelParams
    rule: AccessRule
    scenario: Scenario
    seed: int
    attempts: np.ndarray
    successes: np.ndarray
    successful_slots: np.ndarray | None

    @property
    def replications(self) -> int:
        return int(self.attempts.size)

    def _per_slot(self, values: np.ndarray) -> tuple[float, float, float]:
        x = values / self.params.n_slots
        mean = float(x.mean())
        var = float(x.var(ddof=1)) if x.size > 1 else 0.0
        return mean, var, math.sqrt(var / x.size)

    @property
    def throughput(self) -> tuple[float, float]:
        """Mean of S_N / N and its standard error."""
        mean, _, se = self._per_slot(self.successes)
        return mean, se

    def summary(self) -> dict:
        out = {"replications": self.replications, "n_slots": self.params.n_slots}
        fields = [("attempts", self.attempts), ("successes", self.successes)]
        if self.successful_slots is not None:
            fields.append(("successful_slots", self.successful_slots))
        for name, arr in fields:
            mean, var, se = self._per_slot(arr)
            out[f"{name}_mean"] = mean
            out[f"{name}_var"] = var
            out[f"{name}_stderr"] = se
        return out

    def raw_rows(self) -> list[tuple]:
        r = self.successful_slots
        return [
            (i, int(self.attempts[i]), int(self.successes[i]), None if r is None else int(r[i]))
            for i in range(self.replications)
        ]


def _run_chunk(params, rule, scenario, seed, indices):
    out = np.empty((len(indices), 3), dtype=np.int64)
    for row, rep in enumerate(indices):
        s = simulate_run(params, rule, scenario, replication_rng(seed, rep))
        out[row] = (s.attempts, s.successes, -1 if s.successful_slots is None else s.successful_slots)
    return out


def run_batch(
    params: ModelParams,
    rule: AccessRule,
    scenario: Scenario,
    replications: int,
    seed: int,
    workers: int = 1,
) -> BatchStats:
    params.validate(rule)
    if replications < 1:
        raise ParameterError("replications must be >= 1")
    indices = list(range(replications))
    if workers <= 1 or replications == 1:
        table = _run_chunk(params, rule, scenario, seed, indices)
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        table = np.empty((replications, 3), dtype=np.int64)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, params, rule, scenario, seed, c) for c in chunks]
            for chunk, fut in zip(chunks, futures):
                table[chunk] = fut.result()
    r = table[:, 2] if scenario is Scenario.INTERFERENCE_BASED else None
    return BatchStats(params, rule, scenario, seed, table[:, 0], table[:, 1], r)
