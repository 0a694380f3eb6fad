"""Append-only hash-chained block store with a derived key-value world state.

One ledger exists per (peer, channel). Blocks chain by digest: prev_hash of
block n equals the hash of block n-1, genesis uses the all-zero digest. World
state is the deterministic replay of all valid committed transactions, held in
memory; an optional snapshot file serializes the chain one hex-encoded block
per line.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .errors import ChainMismatch, InvalidRecord, KeyAbsent
from .privacy import PerturbedResponse
from .serial import FieldReader, encode_field, encode_int, encode_str

DIGEST_SIZE = 32
ZERO_DIGEST = b"\x00" * DIGEST_SIZE


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class PurchaseRecord:
    """One supply-chain write: who bought how many of what, in which color."""

    key: str
    product: str
    owner: str
    quantity: int
    color: str

    def canonical_bytes(self) -> bytes:
        return b"".join(
            (
                encode_str(self.key),
                encode_str(self.product),
                encode_str(self.owner),
                encode_int(self.quantity),
                encode_str(self.color),
            )
        )


def record_digest(record: PurchaseRecord) -> bytes:
    return sha256(record.canonical_bytes())


@dataclass(frozen=True)
class RecordRules:
    """Channel-configured validity sets for purchase records."""

    customers: frozenset[str]
    colors: frozenset[str]
    quantity_range: tuple[int, int] = (1, 100)

    def validate(self, record: PurchaseRecord) -> None:
        lo, hi = self.quantity_range
        if not lo <= record.quantity <= hi:
            raise InvalidRecord(
                f"quantity {record.quantity} outside [{lo}, {hi}] for key {record.key!r}"
            )
        if record.owner not in self.customers:
            raise InvalidRecord(f"unknown owner {record.owner!r}")
        if record.color not in self.colors:
            raise InvalidRecord(f"unknown color {record.color!r}")


class WorldState:
    """Key-value view of committed records plus per-key commit versions."""

    def __init__(self, rules: RecordRules):
        self.rules = rules
        self.entries: dict[str, PurchaseRecord] = {}
        self.versions: dict[str, int] = {}

    def put_record(self, record: PurchaseRecord) -> str:
        """Validate and store a record, bumping its key's version. Returns the key."""
        self.rules.validate(record)
        self.entries[record.key] = record
        self.versions[record.key] = self.versions.get(record.key, 0) + 1
        return record.key

    def get(self, key: str) -> PurchaseRecord:
        if key not in self.entries:
            raise KeyAbsent(f"no record under key {key!r}")
        return self.entries[key]

    def version(self, key: str) -> int:
        return self.versions.get(key, 0)

    def sum_quantity_by_owner(self, owner: str) -> int:
        """Total quantity across all records of one owner; 0 if the owner is absent."""
        return sum(r.quantity for r in self.entries.values() if r.owner == owner)

    def __len__(self) -> int:
        return len(self.entries)

    def equals(self, other: WorldState) -> bool:
        return self.entries == other.entries and self.versions == other.versions


class TxType(Enum):
    INIT = "Init"
    WRITE = "Write"
    QUERY = "Query"


@dataclass(frozen=True)
class QueryLogEntry:
    """Committed form of a query transaction: spec digest, noisy values, timestamp.

    True answers are never part of this entry; reuse matches on the exact
    spec digest (which covers the requested epsilon).
    """

    spec_digest: bytes
    response: PerturbedResponse
    timestamp: int

    def canonical_bytes(self) -> bytes:
        return b"".join(
            (
                encode_field(self.spec_digest),
                encode_field(self.response.canonical_bytes()),
                encode_int(self.timestamp),
            )
        )


@dataclass(frozen=True)
class WriteItem:
    """One entry of a write set: key, record, and the version it will commit at."""

    key: str
    record: PurchaseRecord
    version: int

    def canonical_bytes(self) -> bytes:
        return b"".join(
            (
                encode_str(self.key),
                encode_field(self.record.canonical_bytes()),
                encode_int(self.version),
            )
        )


@dataclass(frozen=True)
class Endorsement:
    """A peer's signed response to a proposal.

    content_digest covers (proposal digest, response payload, write set) and is
    identical across peers that executed the same proposal identically; the
    signature is the peer-id-salted digest standing in for a real PKI signature.
    """

    peer_id: str
    proposal_digest: bytes
    response: PerturbedResponse | None
    rw_set: tuple[WriteItem, ...]
    content_digest: bytes
    signature: bytes

    @staticmethod
    def compute_content_digest(
        proposal_digest: bytes,
        response: PerturbedResponse | None,
        rw_set: tuple[WriteItem, ...],
    ) -> bytes:
        parts = [encode_field(proposal_digest)]
        parts.append(encode_field(response.canonical_bytes() if response else b""))
        parts.append(encode_int(len(rw_set)))
        parts.extend(encode_field(item.canonical_bytes()) for item in rw_set)
        return sha256(b"".join(parts))

    @staticmethod
    def sign(peer_id: str, content_digest: bytes) -> bytes:
        return sha256(encode_str(peer_id) + encode_field(content_digest))

    @classmethod
    def create(
        cls,
        peer_id: str,
        proposal_digest: bytes,
        response: PerturbedResponse | None,
        rw_set: tuple[WriteItem, ...],
    ) -> Endorsement:
        digest = cls.compute_content_digest(proposal_digest, response, rw_set)
        return cls(
            peer_id=peer_id,
            proposal_digest=proposal_digest,
            response=response,
            rw_set=rw_set,
            content_digest=digest,
            signature=cls.sign(peer_id, digest),
        )

    def verify(self) -> bool:
        digest = self.compute_content_digest(self.proposal_digest, self.response, self.rw_set)
        return digest == self.content_digest and self.signature == self.sign(
            self.peer_id, digest
        )

    def canonical_bytes(self) -> bytes:
        return b"".join(
            (
                encode_str(self.peer_id),
                encode_field(self.proposal_digest),
                encode_field(self.response.canonical_bytes() if self.response else b""),
                encode_int(len(self.rw_set)),
                *(encode_field(item.canonical_bytes()) for item in self.rw_set),
                encode_field(self.content_digest),
                encode_field(self.signature),
            )
        )


_PAYLOAD_RECORD = b"R"
_PAYLOAD_QUERY_LOG = b"L"


@dataclass(frozen=True)
class Transaction:
    """Endorsed unit of work ordered into blocks.

    payload is a PurchaseRecord for Init/Write and, once endorsed, a
    QueryLogEntry for Query (the in-flight proposal carries the raw query spec
    instead). submit_time is nanoseconds on the run's clock.
    """

    tx_id: str
    tx_type: TxType
    payload: object
    client_id: str
    submit_time: int
    endorsements: tuple[Endorsement, ...] = ()

    def proposal_digest(self) -> bytes:
        """Digest over the proposal content, before endorsements attach."""
        return sha256(
            b"".join(
                (
                    encode_str(self.tx_id),
                    encode_str(self.tx_type.value),
                    encode_field(self.payload.canonical_bytes()),
                    encode_str(self.client_id),
                    encode_int(self.submit_time),
                )
            )
        )

    def canonical_bytes(self) -> bytes:
        if isinstance(self.payload, PurchaseRecord):
            tag = _PAYLOAD_RECORD
        elif isinstance(self.payload, QueryLogEntry):
            tag = _PAYLOAD_QUERY_LOG
        else:
            raise ValueError(
                f"payload of type {type(self.payload).__name__} is not a committed form"
            )
        return b"".join(
            (
                encode_str(self.tx_id),
                encode_str(self.tx_type.value),
                encode_field(tag),
                encode_field(self.payload.canonical_bytes()),
                encode_str(self.client_id),
                encode_int(self.submit_time),
                encode_int(len(self.endorsements)),
                *(encode_field(e.canonical_bytes()) for e in self.endorsements),
            )
        )

    def write_set(self) -> tuple[WriteItem, ...]:
        """Write set agreed at endorsement; empty for queries and unendorsed txs."""
        if not self.endorsements:
            return ()
        return self.endorsements[0].rw_set


@dataclass(frozen=True)
class Block:
    """Ordered batch of transactions, hash-chained to its predecessor.

    validity_flags are set at commit; invalid transactions stay in the block
    but never touch world state. block_hash covers (number, prev_hash, tx_list)
    only, so flags do not alter chain identity.
    """

    number: int
    prev_hash: bytes
    tx_list: tuple[Transaction, ...]
    block_hash: bytes
    validity_flags: tuple[bool, ...] | None = None

    def with_flags(self, flags: tuple[bool, ...]) -> Block:
        return replace(self, validity_flags=flags)


def block_core_bytes(number: int, prev_hash: bytes, tx_list: tuple[Transaction, ...]) -> bytes:
    return b"".join(
        (
            encode_int(number),
            encode_field(prev_hash),
            encode_int(len(tx_list)),
            *(encode_field(tx.canonical_bytes()) for tx in tx_list),
        )
    )


def hash_block(block: Block) -> bytes:
    """Digest over (number, prev_hash, tx_list) in canonical form."""
    return sha256(block_core_bytes(block.number, block.prev_hash, block.tx_list))


def make_block(number: int, prev_hash: bytes, tx_list: tuple[Transaction, ...]) -> Block:
    digest = sha256(block_core_bytes(number, prev_hash, tx_list))
    return Block(number=number, prev_hash=prev_hash, tx_list=tx_list, block_hash=digest)


class Ledger:
    """Per-channel chain plus the world state derived from it."""

    def __init__(self, rules: RecordRules):
        self.rules = rules
        self.blocks: list[Block] = []
        self.state = WorldState(rules)

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def tip_hash(self) -> bytes:
        return self.blocks[-1].block_hash if self.blocks else ZERO_DIGEST

    def append_block(self, block: Block) -> int:
        """Extend the chain and apply valid writes to world state.

        Blocks without validity flags are treated as all-valid. Raises
        ChainMismatch when the block does not extend the current tip.
        """
        if block.number != self.height:
            raise ChainMismatch(
                f"block number {block.number} does not extend height {self.height}"
            )
        if block.prev_hash != self.tip_hash:
            raise ChainMismatch(f"prev_hash mismatch at block {block.number}")
        flags = block.validity_flags or tuple(True for _ in block.tx_list)
        for tx, valid in zip(block.tx_list, flags):
            if not valid:
                continue
            self._apply(tx)
        self.blocks.append(block)
        return self.height

    def _apply(self, tx: Transaction) -> None:
        if tx.tx_type is TxType.QUERY:
            return  # query transactions are log-only
        for item in tx.write_set():
            self.state.put_record(item.record)

    def replay_state(self) -> WorldState:
        """Rebuild world state from block 0; must equal the live state exactly."""
        state = WorldState(self.rules)
        for block in self.blocks:
            flags = block.validity_flags or tuple(True for _ in block.tx_list)
            for tx, valid in zip(block.tx_list, flags):
                if not valid or tx.tx_type is TxType.QUERY:
                    continue
                for item in tx.write_set():
                    state.put_record(item.record)
        return state

    def verify_chain(self) -> bool:
        """Full-chain scan: recompute every hash and check every prev link."""
        prev = ZERO_DIGEST
        for i, block in enumerate(self.blocks):
            if block.number != i or block.prev_hash != prev:
                return False
            if hash_block(block) != block.block_hash:
                return False
            prev = block.block_hash
        return True


@dataclass
class PrivateDataCollection:
    """Per-channel dataset visible in cleartext only to member peers.

    Non-members can retrieve digests only; each digest is the hash of the
    stored record's canonical serialization.
    """

    members: frozenset[str]
    data: dict[str, PurchaseRecord] = field(default_factory=dict)
    digests: dict[str, bytes] = field(default_factory=dict)

    def put(self, record: PurchaseRecord) -> None:
        self.data[record.key] = record
        self.digests[record.key] = record_digest(record)


def read_private(
    collection: PrivateDataCollection, peer_id: str, key: str
) -> PurchaseRecord | bytes:
    """Member peers get the record, others the digest. Raises KeyAbsent."""
    if key not in collection.data:
        raise KeyAbsent(f"no private data under key {key!r}")
    if peer_id in collection.members:
        return collection.data[key]
    return collection.digests[key]


# --- snapshot encoding -------------------------------------------------------


def encode_block(block: Block) -> bytes:
    flags = block.validity_flags or ()
    return b"".join(
        (
            encode_field(block_core_bytes(block.number, block.prev_hash, block.tx_list)),
            encode_int(len(flags)),
            *(encode_int(1 if f else 0) for f in flags),
            encode_field(block.block_hash),
        )
    )


def decode_block(data: bytes) -> Block:
    outer = FieldReader(data)
    core = FieldReader(outer.read_bytes())
    number = core.read_int()
    prev_hash = core.read_bytes()
    n_tx = core.read_int()
    txs = tuple(_decode_tx(core.read_bytes()) for _ in range(n_tx))
    n_flags = outer.read_int()
    flags = tuple(bool(outer.read_int()) for _ in range(n_flags)) or None
    block_hash = outer.read_bytes()
    return Block(
        number=number,
        prev_hash=prev_hash,
        tx_list=txs,
        block_hash=block_hash,
        validity_flags=flags,
    )


def _decode_record(data: bytes) -> PurchaseRecord:
    r = FieldReader(data)
    return PurchaseRecord(
        key=r.read_str(),
        product=r.read_str(),
        owner=r.read_str(),
        quantity=r.read_int(),
        color=r.read_str(),
    )


def _decode_response(data: bytes) -> PerturbedResponse:
    r = FieldReader(data)
    n = r.read_int()
    values = tuple(r.read_float() for _ in range(n))
    return PerturbedResponse(values=values, epsilon_used=r.read_float())


def _decode_query_log(data: bytes) -> QueryLogEntry:
    r = FieldReader(data)
    return QueryLogEntry(
        spec_digest=r.read_bytes(),
        response=_decode_response(r.read_bytes()),
        timestamp=r.read_int(),
    )


def _decode_write_item(data: bytes) -> WriteItem:
    r = FieldReader(data)
    return WriteItem(key=r.read_str(), record=_decode_record(r.read_bytes()), version=r.read_int())


def _decode_endorsement(data: bytes) -> Endorsement:
    r = FieldReader(data)
    peer_id = r.read_str()
    proposal_digest = r.read_bytes()
    response_raw = r.read_bytes()
    response = _decode_response(response_raw) if response_raw else None
    n = r.read_int()
    rw_set = tuple(_decode_write_item(r.read_bytes()) for _ in range(n))
    return Endorsement(
        peer_id=peer_id,
        proposal_digest=proposal_digest,
        response=response,
        rw_set=rw_set,
        content_digest=r.read_bytes(),
        signature=r.read_bytes(),
    )


def _decode_tx(data: bytes) -> Transaction:
    r = FieldReader(data)
    tx_id = r.read_str()
    tx_type = TxType(r.read_str())
    tag = r.read_bytes()
    payload_raw = r.read_bytes()
    if tag == _PAYLOAD_RECORD:
        payload: object = _decode_record(payload_raw)
    elif tag == _PAYLOAD_QUERY_LOG:
        payload = _decode_query_log(payload_raw)
    else:
        raise ValueError(f"unknown payload tag {tag!r}")
    client_id = r.read_str()
    submit_time = r.read_int()
    n = r.read_int()
    endorsements = tuple(_decode_endorsement(r.read_bytes()) for _ in range(n))
    return Transaction(
        tx_id=tx_id,
        tx_type=tx_type,
        payload=payload,
        client_id=client_id,
        submit_time=submit_time,
        endorsements=endorsements,
    )


def decode_transaction(data: bytes) -> Transaction:
    """Parse a transaction from its canonical wire bytes."""
    return _decode_tx(data)


def write_snapshot(ledger: Ledger, path: str | Path) -> None:
    """Write the chain as newline-delimited hex-encoded canonical blocks."""
    with open(path, "w", encoding="ascii") as fh:
        for block in ledger.blocks:
            fh.write(encode_block(block).hex())
            fh.write("\n")


def read_snapshot(path: str | Path, rules: RecordRules) -> Ledger:
    """Rebuild a ledger from a snapshot, re-running chain checks on every block."""
    ledger = Ledger(rules)
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            ledger.append_block(decode_block(bytes.fromhex(line)))
    return ledger
