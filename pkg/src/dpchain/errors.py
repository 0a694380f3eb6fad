"""Exception types shared across the simulator."""


class DpChainError(Exception):
    """Base class for all domain errors."""


class InvalidRecord(DpChainError):
    """Purchase record violates quantity bounds or the configured owner/color sets."""


class ChainMismatch(DpChainError):
    """Block number or prev_hash does not extend the current chain tip."""


class KeyAbsent(DpChainError):
    """Requested key does not exist in the collection."""


class InvalidParams(DpChainError):
    """Privacy parameters out of domain (epsilon or sensitivity not positive)."""


class UnknownType(DpChainError):
    """Transaction payload does not match any known transaction type."""


class UnknownAggregate(DpChainError):
    """Query descriptor requests an aggregate the chaincode does not implement."""


class PolicyUnsatisfied(DpChainError):
    """Transaction submitted to the orderer without a satisfying endorsement set."""


class NoSuchPeer(DpChainError):
    """Proposal targeted a peer id that is not part of the network."""


class LedgerEmpty(DpChainError):
    """Query round started against an uninitialized ledger."""


class InsufficientSamples(DpChainError):
    """Histogram check has no bin above the minimum occupancy threshold."""


class DivisionByZeroTrueValue(DpChainError):
    """Relative error is undefined when the true value is zero."""


class IoFailure(DpChainError):
    """Report files could not be written."""
