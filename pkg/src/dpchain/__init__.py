"""Desk-scale permissioned-blockchain simulator with a differential-privacy
query layer in the chaincode endorsement path."""

from .attack import (
    AdversaryKnowledge,
    AttackOutcome,
    AttackPipeline,
    DpCheckResult,
    PrivacySeries,
    attack_success_rate,
    empirical_dp_check,
    linking_attack,
    privacy_series,
    relative_error,
)
from .bench import (
    BenchConfig,
    BenchRun,
    RoundMetrics,
    SweepPoint,
    build_run,
    generate_write_workload,
    load_config,
    run_init_round,
    run_query_round,
    sweep_epsilon,
)
from .chaincode import (
    ChaincodeContext,
    QuerySpec,
    TxCategory,
    classify,
    execute_query,
    execute_write,
    record_response,
    spec_digest,
)
from .clock import FifoServer, Scheduler, VirtualClock, WallClock
from .errors import (
    ChainMismatch,
    DivisionByZeroTrueValue,
    DpChainError,
    InsufficientSamples,
    InvalidParams,
    InvalidRecord,
    IoFailure,
    KeyAbsent,
    LedgerEmpty,
    NoSuchPeer,
    PolicyUnsatisfied,
    UnknownAggregate,
    UnknownType,
)
from .ledger import (
    Block,
    Endorsement,
    Ledger,
    PrivateDataCollection,
    PurchaseRecord,
    QueryLogEntry,
    RecordRules,
    Transaction,
    TxType,
    WorldState,
    WriteItem,
    ZERO_DIGEST,
    hash_block,
    make_block,
    read_private,
    read_snapshot,
    record_digest,
    write_snapshot,
)
from .network import (
    EndorsementPolicy,
    Network,
    Orderer,
    OrdererConfig,
    Peer,
    PipelineDelays,
    PipelineSimulator,
    ProposalResponse,
    check_policy,
    submit_to_orderer,
)
from .privacy import (
    Aggregate,
    NoiseSource,
    PerturbedResponse,
    PrivacyParams,
    QueryBatch,
    QueryDescriptor,
    derive_seed,
    laplace_inverse_cdf,
    laplace_pdf,
    laplace_scale,
    perturb_batch,
    sample_laplace,
    sample_laplace_block,
    sum_sensitivity,
)

__all__ = [name for name in dir() if not name.startswith("_")]
