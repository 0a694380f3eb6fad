"""Laplace-mechanism core: noise scale, density, seeded sampling, batch perturbation.

A query answer released under epsilon-differential privacy gets additive noise
drawn from Laplace(mu, lambda) with lambda = sensitivity / epsilon. Sampling is
inverse-CDF from a single uniform draw per value, so a fixed seed reproduces the
exact noise stream on any platform.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams
from .serial import encode_float, encode_int


class Aggregate:
    """Aggregate kinds a query descriptor may request. Sum is the only one
    implemented; a count is a sum with sensitivity 1."""

    SUM = "sum"


@dataclass(frozen=True)
class QueryDescriptor:
    """One statistical query: an aggregate over the records of one owner."""

    aggregate: str
    owner: str


@dataclass(frozen=True)
class QueryBatch:
    """Ordered, non-empty list of query descriptors evaluated in one transaction."""

    queries: tuple[QueryDescriptor, ...]

    def __post_init__(self) -> None:
        if len(self.queries) < 1:
            raise InvalidParams("query batch must contain at least one query")
        for q in self.queries:
            if not q.owner:
                raise InvalidParams("query owner must be non-empty")

    def __len__(self) -> int:
        return len(self.queries)


@dataclass(frozen=True)
class PerturbedResponse:
    """Noisy answers to a query batch, in query order.

    Carries only the perturbed values and the epsilon that produced them;
    true answers never enter this type.
    """

    values: tuple[float, ...]
    epsilon_used: float

    def canonical_bytes(self) -> bytes:
        parts = [encode_int(len(self.values))]
        parts.extend(encode_float(v) for v in self.values)
        parts.append(encode_float(self.epsilon_used))
        return b"".join(parts)


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget epsilon, query sensitivity, and Laplace mean.

    Attributes:
        epsilon: privacy budget; smaller means stronger privacy, more noise.
        sensitivity: maximum change one record can cause in the query output.
        mu: Laplace mean, zero for unbiased perturbation.
    """

    epsilon: float
    sensitivity: float
    mu: float = 0.0

    def __post_init__(self) -> None:
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidParams(f"epsilon must be positive, got {self.epsilon}")
        if not (self.sensitivity > 0 and math.isfinite(self.sensitivity)):
            raise InvalidParams(f"sensitivity must be positive, got {self.sensitivity}")


def laplace_scale(params: PrivacyParams) -> float:
    """Noise scale lambda = sensitivity / epsilon."""
    return params.sensitivity / params.epsilon


def laplace_pdf(x: float, mu: float, lam: float) -> float:
    """Laplace density (1 / 2*lambda) * exp(-|x - mu| / lambda)."""
    if lam <= 0:
        raise InvalidParams(f"lambda must be positive, got {lam}")
    return math.exp(-abs(x - mu) / lam) / (2.0 * lam)


def laplace_inverse_cdf(u: float, mu: float, lam: float) -> float:
    """Map a uniform draw u in (-1/2, 1/2) to a Laplace(mu, lam) variate.

    Returns mu - lam * sgn(u) * ln(1 - 2|u|); u = 0 maps to the median mu.
    """
    if lam <= 0:
        raise InvalidParams(f"lambda must be positive, got {lam}")
    if not -0.5 < u < 0.5:
        raise InvalidParams(f"u must lie in the open interval (-1/2, 1/2), got {u}")
    sign = 1.0 if u > 0 else (-1.0 if u < 0 else 0.0)
    return mu - lam * sign * math.log1p(-2.0 * abs(u))


class NoiseSource:
    """Seeded generator of Laplace noise.

    Identical seeds yield identical sample streams. A source is single-owner:
    concurrent callers must each hold an independently seeded source. Drawing a
    block of n samples consumes the stream exactly as n sequential draws would.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform_symmetric(self) -> float:
        """One uniform draw on the open interval (-1/2, 1/2)."""
        while True:
            u = self._gen.random() - 0.5
            if -0.5 < u < 0.5:
                return u

    def uniform_symmetric_block(self, n: int) -> np.ndarray:
        """n uniform draws on (-1/2, 1/2), stream-equivalent to n single draws."""
        u = self._gen.random(n) - 0.5
        # Boundary hits (probability 2**-53 per draw) are redrawn in place.
        bad = ~((-0.5 < u) & (u < 0.5))
        while bad.any():
            u[bad] = self._gen.random(int(bad.sum())) - 0.5
            bad = ~((-0.5 < u) & (u < 0.5))
        return u


def sample_laplace(src: NoiseSource, mu: float, lam: float) -> float:
    """One Laplace(mu, lam) draw from the source's stream."""
    return laplace_inverse_cdf(src.uniform_symmetric(), mu, lam)


def sample_laplace_block(src: NoiseSource, mu: float, lam: float, n: int) -> np.ndarray:
    """n Laplace(mu, lam) draws, bit-identical to n sequential sample_laplace calls.

    Uniforms come out of the stream in one block; the transform stays scalar
    because vectorized log1p rounds differently in the last ulp.
    """
    if lam <= 0:
        raise InvalidParams(f"lambda must be positive, got {lam}")
    u = src.uniform_symmetric_block(n)
    return np.fromiter(
        (laplace_inverse_cdf(x, mu, lam) for x in u), dtype=np.float64, count=n
    )


def perturb_batch(
    true_values: list[float],
    params: PrivacyParams,
    src: NoiseSource,
) -> PerturbedResponse:
    """Perturb a batch of true query answers with independent Laplace noise.

    Each output value is true_values[i] plus one draw from Laplace(mu, lambda)
    with lambda = sensitivity / epsilon; order is preserved and no rounding or
    clamping is applied, so noisy sums may go negative.
    """
    if len(true_values) < 1:
        raise InvalidParams("perturb_batch requires at least one value")
    lam = laplace_scale(params)
    noisy = []
    for v in true_values:
        noisy.append(float(v) + sample_laplace(src, params.mu, lam))
    return PerturbedResponse(values=tuple(noisy), epsilon_used=params.epsilon)


def sum_sensitivity(max_quantity: int) -> float:
    """Record-level sensitivity of the per-owner quantity sum.

    Removing one purchase record changes the sum by at most the maximum
    quantity a single record may carry.
    """
    if max_quantity < 1:
        raise InvalidParams(f"max_quantity must be >= 1, got {max_quantity}")
    return float(max_quantity)


def derive_seed(master: int, *labels: object) -> int:
    """Derive a stable 64-bit child seed from a master seed and labels.

    Hash-based so that child streams are independent of each other and of
    label ordering conventions elsewhere in the run.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "big")


@dataclass
class EpsilonSpendLog:
    """Cumulative epsilon spent per client. Observability only, never enforced."""

    spent: dict[str, float] = field(default_factory=dict)

    def add(self, client_id: str, epsilon: float) -> None:
        self.spent[client_id] = self.spent.get(client_id, 0.0) + epsilon

    def total(self) -> float:
        return sum(self.spent.values())
