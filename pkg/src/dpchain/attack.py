"""Executable threat model and empirical privacy verification.

The adversary knows every purchase record except the target's and observes the
pipeline's noisy per-owner sums. linking_attack turns an observation into an
estimate of the target's true sum; attack_success_rate measures how often that
estimate lands within a tolerance. empirical_dp_check tests the e^epsilon
output-ratio bound on adjacent datasets by histogram comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from .chaincode import ChaincodeContext, QuerySpec, execute_query
from .errors import DivisionByZeroTrueValue, InsufficientSamples, InvalidParams
from .ledger import PurchaseRecord, RecordRules, WorldState
from .privacy import (
    Aggregate,
    NoiseSource,
    PrivacyParams,
    QueryBatch,
    QueryDescriptor,
    sample_laplace_block,
)


@dataclass(frozen=True)
class AdversaryKnowledge:
    """Everything the attacker knows: all records except the target's."""

    known_records: tuple[PurchaseRecord, ...]
    target_owner: str

    def __post_init__(self) -> None:
        if any(r.owner == self.target_owner for r in self.known_records):
            raise ValueError("known records must exclude the target's records")

    def known_quantity_total(self) -> int:
        return sum(r.quantity for r in self.known_records)


@dataclass(frozen=True)
class AttackOutcome:
    """One linking-attack trial, judged against a tolerance."""

    estimate: float
    true_value: float
    absolute_error: float
    success: bool

    @classmethod
    def judge(cls, estimate: float, true_value: float, tolerance: float) -> AttackOutcome:
        err = abs(estimate - true_value)
        return cls(
            estimate=estimate,
            true_value=true_value,
            absolute_error=err,
            success=err <= tolerance,
        )


def linking_attack(
    observed: float, knowledge: AdversaryKnowledge, total_query: bool = False
) -> float:
    """Infer the target's sum from an observed query answer.

    A per-owner sum attributes directly; an all-owners total is reduced by the
    attacker's known quantities.
    """
    if total_query:
        return observed - knowledge.known_quantity_total()
    return observed


@dataclass(frozen=True)
class AttackPipeline:
    """Query path under attack: ledger records plus the peer's privacy settings."""

    records: tuple[PurchaseRecord, ...]
    rules: RecordRules
    epsilon: float
    sensitivity: float
    noise_enabled: bool = True
    seed: int = 0

    def context(self) -> ChaincodeContext:
        state = WorldState(self.rules)
        for record in self.records:
            state.put_record(record)
        return ChaincodeContext(
            channel_id="attack",
            state=state,
            params=PrivacyParams(epsilon=self.epsilon, sensitivity=self.sensitivity),
            noise=NoiseSource(self.seed),
            noise_enabled=self.noise_enabled,
        )


def attack_success_rate(
    pipeline: AttackPipeline,
    target_owner: str,
    trials: int,
    tolerance: float,
) -> float:
    """Fraction of independent trials where the linking attack lands within tolerance."""
    if trials < 1:
        raise InvalidParams("trials must be >= 1")
    ctx = pipeline.context()
    knowledge = AdversaryKnowledge(
        known_records=tuple(r for r in pipeline.records if r.owner != target_owner),
        target_owner=target_owner,
    )
    true_value = float(ctx.state.sum_quantity_by_owner(target_owner))
    spec = QuerySpec(
        batch=QueryBatch(queries=(QueryDescriptor(aggregate=Aggregate.SUM, owner=target_owner),))
    )
    successes = 0
    for _ in range(trials):
        observed = execute_query(ctx, spec).values[0]
        estimate = linking_attack(observed, knowledge)
        if AttackOutcome.judge(estimate, true_value, tolerance).success:
            successes += 1
    return successes / trials


def analytic_success_probability(tolerance: float, lam: float) -> float:
    """P(|Laplace(lam)| <= tolerance) = 1 - exp(-tolerance / lam)."""
    return 1.0 - math.exp(-tolerance / lam)


@dataclass(frozen=True)
class DpCheckResult:
    """Histogram ratio test of the differential-privacy bound."""

    epsilon: float
    trials: int
    bins: int
    occupied_bins: int
    max_ratio: float
    bound: float
    pass_fraction: float
    passed: bool


def empirical_dp_check(
    params: PrivacyParams,
    dataset_pair: tuple[Sequence[float], Sequence[float]],
    trials: int,
    bins: int,
    seed: int = 0,
    min_bin_count: int = 100,
    ratio_bound: float | None = None,
) -> DpCheckResult:
    """Sample the mechanism on two adjacent datasets and compare histograms.

    Occupied bins (both counts >= min_bin_count) must keep their probability
    ratio under e^epsilon times a statistical slack; the slack comes from a
    99% two-sided normal bound on the bin counts, Bonferroni-corrected across
    occupied bins. Passing requires 99% of occupied bins under the bound.
    ratio_bound replaces e^epsilon for pairs with a tighter analytic bound.
    """
    d1, d2 = dataset_pair
    sum1, sum2 = float(sum(d1)), float(sum(d2))
    if abs(sum1 - sum2) > params.sensitivity + 1e-9:
        raise InvalidParams(
            f"datasets differ by {abs(sum1 - sum2)}, more than sensitivity {params.sensitivity}"
        )
    lam = params.sensitivity / params.epsilon
    src = NoiseSource(seed)
    out1 = sum1 + sample_laplace_block(src, params.mu, lam, trials)
    out2 = sum2 + sample_laplace_block(src, params.mu, lam, trials)
    edges = np.histogram_bin_edges(np.concatenate([out1, out2]), bins=bins)
    h1, _ = np.histogram(out1, bins=edges)
    h2, _ = np.histogram(out2, bins=edges)
    occupied = (h1 >= min_bin_count) & (h2 >= min_bin_count)
    n_occupied = int(occupied.sum())
    if n_occupied == 0:
        raise InsufficientSamples(
            f"no bin holds {min_bin_count} samples on both sides; increase trials"
        )
    c1 = h1[occupied].astype(float)
    c2 = h2[occupied].astype(float)
    ratios = np.maximum(c1 / c2, c2 / c1)
    z = NormalDist().inv_cdf(1.0 - 0.01 / (2.0 * n_occupied))
    slack = z * np.sqrt(1.0 / c1 + 1.0 / c2)
    bound = math.exp(params.epsilon) if ratio_bound is None else ratio_bound
    passing = int((ratios <= bound * (1.0 + slack)).sum())
    return DpCheckResult(
        epsilon=params.epsilon,
        trials=trials,
        bins=bins,
        occupied_bins=n_occupied,
        max_ratio=float(ratios.max()),
        bound=bound,
        pass_fraction=passing / n_occupied,
        passed=passing / n_occupied >= 0.99,
    )


def relative_error(a: float, a_noisy: float) -> float:
    """Percentage relative error |a - a'| / a * 100; undefined at a = 0."""
    if a == 0:
        raise DivisionByZeroTrueValue("relative error undefined for true value 0")
    return abs(a - a_noisy) / a * 100.0


@dataclass(frozen=True)
class PrivacySeries:
    """Aligned actual/noisy series for plotting privacy comparisons."""

    epsilon: float
    actual: tuple[float, ...]
    noisy: tuple[float, ...]

    def mean_abs_deviation(self) -> float:
        return sum(abs(n - a) for a, n in zip(self.actual, self.noisy)) / len(self.actual)


def privacy_series(
    ctx: ChaincodeContext,
    spec: QuerySpec,
    repetitions: int,
    truth: Mapping[str, float],
) -> PrivacySeries:
    """Query the same spec repeatedly, pairing each noisy answer with the
    harness ground truth (never with pipeline output)."""
    if repetitions < 1:
        raise InvalidParams("repetitions must be >= 1")
    actual: list[float] = []
    noisy: list[float] = []
    for _ in range(repetitions):
        response = execute_query(ctx, spec)
        for q, value in zip(spec.batch.queries, response.values):
            actual.append(float(truth[q.owner]))
            noisy.append(value)
    return PrivacySeries(
        epsilon=ctx.effective_epsilon(spec), actual=tuple(actual), noisy=tuple(noisy)
    )
