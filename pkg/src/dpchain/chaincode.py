"""Smart-contract layer executed by each endorsing peer.

Writes produce read-write sets without touching state; queries are evaluated
against the peer's committed world state and perturbed before anything leaves
the peer. True query answers exist only inside execute_query's local frame and
are never serialized into transactions, blocks, or logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import InvalidParams, UnknownAggregate, UnknownType
from .ledger import (
    PurchaseRecord,
    QueryLogEntry,
    Transaction,
    TxType,
    WorldState,
    WriteItem,
    sha256,
)
from .privacy import (
    Aggregate,
    EpsilonSpendLog,
    NoiseSource,
    PerturbedResponse,
    PrivacyParams,
    QueryBatch,
    perturb_batch,
)
from .serial import encode_float, encode_str


@dataclass(frozen=True)
class QuerySpec:
    """A client's statistical query: descriptors plus an optional epsilon request.

    The requested epsilon may only tighten the peer's configured maximum; the
    peer owns the privacy guarantee.
    """

    batch: QueryBatch
    requested_epsilon: float | None = None

    def canonical_bytes(self) -> bytes:
        parts = []
        for q in self.batch.queries:
            parts.append(encode_str(q.aggregate))
            parts.append(encode_str(q.owner))
        parts.append(encode_float(self.requested_epsilon) if self.requested_epsilon is not None else encode_str(""))
        return b"".join(parts)


def spec_digest(spec: QuerySpec, epsilon: float) -> bytes:
    """Reuse key for a query: covers the descriptors and the epsilon applied."""
    parts = []
    for q in spec.batch.queries:
        parts.append(encode_str(q.aggregate))
        parts.append(encode_str(q.owner))
    parts.append(encode_float(epsilon))
    return sha256(b"".join(parts))


class TxCategory(Enum):
    FINANCIAL = "financial"
    QUERY = "query"


def classify(tx: Transaction) -> TxCategory:
    """Route a transaction: Init/Write go down the plain financial path,
    queries through the privacy-preserving path."""
    if tx.tx_type in (TxType.INIT, TxType.WRITE):
        if isinstance(tx.payload, PurchaseRecord):
            return TxCategory.FINANCIAL
        raise UnknownType(f"{tx.tx_type.value} transaction with {type(tx.payload).__name__} payload")
    if tx.tx_type is TxType.QUERY:
        if isinstance(tx.payload, (QuerySpec, QueryLogEntry)):
            return TxCategory.QUERY
        raise UnknownType(f"Query transaction with {type(tx.payload).__name__} payload")
    raise UnknownType(f"unrecognized transaction type {tx.tx_type!r}")


@dataclass
class ChaincodeContext:
    """Per-peer execution context: state handle, privacy policy, noise source.

    noise_enabled=False gives the non-private baseline chaincode that returns
    raw answers (used for comparison runs only). reuse_enabled caches responses
    by spec digest so an identical query spends no additional epsilon.
    """

    channel_id: str
    state: WorldState
    params: PrivacyParams
    noise: NoiseSource
    epsilon_max: float | None = None
    noise_enabled: bool = True
    reuse_enabled: bool = False
    response_cache: dict[bytes, PerturbedResponse] = field(default_factory=dict)
    epsilon_spent: EpsilonSpendLog = field(default_factory=EpsilonSpendLog)

    def effective_epsilon(self, spec: QuerySpec) -> float:
        if spec.requested_epsilon is None:
            return self.params.epsilon
        if spec.requested_epsilon <= 0:
            raise InvalidParams(f"requested epsilon must be positive, got {spec.requested_epsilon}")
        cap = self.epsilon_max if self.epsilon_max is not None else self.params.epsilon
        return min(spec.requested_epsilon, cap)


def execute_write(ctx: ChaincodeContext, record: PurchaseRecord) -> tuple[WriteItem, ...]:
    """Produce the write set for a record without mutating state.

    The write commits at the key's next version; conflicting writers of the
    same version get invalidated later, at block validation.
    """
    ctx.state.rules.validate(record)
    version = ctx.state.version(record.key) + 1
    return (WriteItem(key=record.key, record=record, version=version),)


def execute_query(
    ctx: ChaincodeContext, spec: QuerySpec, client_id: str | None = None
) -> PerturbedResponse:
    """Evaluate each query on committed state and perturb the answers.

    Answers come back in query order, one noisy value per descriptor. With
    reuse enabled, an exact spec-digest match returns the cached response and
    spends no additional epsilon.
    """
    epsilon = ctx.effective_epsilon(spec)
    if not ctx.noise_enabled:
        epsilon = math.inf
    key = spec_digest(spec, epsilon) if ctx.reuse_enabled else None
    if key is not None and key in ctx.response_cache:
        return ctx.response_cache[key]

    true_values = []
    for q in spec.batch.queries:
        if q.aggregate != Aggregate.SUM:
            raise UnknownAggregate(f"aggregate {q.aggregate!r} is not supported")
        true_values.append(float(ctx.state.sum_quantity_by_owner(q.owner)))

    if ctx.noise_enabled:
        params = ctx.params
        if epsilon != params.epsilon:
            params = PrivacyParams(
                epsilon=epsilon, sensitivity=params.sensitivity, mu=params.mu
            )
        response = perturb_batch(true_values, params, ctx.noise)
        if client_id is not None:
            ctx.epsilon_spent.add(client_id, epsilon)
    else:
        response = PerturbedResponse(values=tuple(true_values), epsilon_used=epsilon)

    if key is not None:
        ctx.response_cache[key] = response
    return response


def record_response(
    ctx: ChaincodeContext,
    spec: QuerySpec,
    response: PerturbedResponse,
    timestamp: int,
) -> QueryLogEntry:
    """Build the ledger log entry for a perturbed response.

    The entry (spec digest, noisy values, epsilon used, timestamp) becomes the
    committed payload of the query transaction and feeds the reuse cache.
    """
    key = spec_digest(spec, response.epsilon_used)
    entry = QueryLogEntry(spec_digest=key, response=response, timestamp=timestamp)
    if ctx.reuse_enabled:
        ctx.response_cache[key] = entry.response
    return entry
