"""Execute-order-validate pipeline over an in-process simulated network.

Phases: proposal fan-out to endorsing peers, endorsement against policy, solo
ordering into blocks, validate-and-commit on every peer. State mutates only at
commit. The PipelineSimulator wires these phases into an event schedule with
configurable per-stage processing delays, which is what produces throughput
saturation and the latency knee.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

from .chaincode import (
    ChaincodeContext,
    QuerySpec,
    TxCategory,
    classify,
    execute_query,
    execute_write,
    record_response,
)
from .clock import Clock, FifoServer, Scheduler, VirtualClock
from .errors import ChainMismatch, NoSuchPeer, PolicyUnsatisfied
from .ledger import (
    Block,
    Endorsement,
    Ledger,
    QueryLogEntry,
    RecordRules,
    Transaction,
    TxType,
    ZERO_DIGEST,
    make_block,
)
from .privacy import NoiseSource, PerturbedResponse, PrivacyParams


@dataclass(frozen=True)
class EndorsementPolicy:
    """Threshold rule over organizations, e.g. at least 1 of {org1, org2}."""

    threshold: int
    organizations: frozenset[str]

    def __post_init__(self) -> None:
        if not 1 <= self.threshold <= len(self.organizations):
            raise ValueError(
                f"threshold {self.threshold} incompatible with {len(self.organizations)} orgs"
            )


def check_policy(
    policy: EndorsementPolicy,
    endorsements: tuple[Endorsement, ...],
    peer_orgs: Mapping[str, str],
) -> bool:
    """True iff endorsements from enough organizations agree on one content digest."""
    if not endorsements:
        return False
    digests = {e.content_digest for e in endorsements}
    if len(digests) != 1:
        return False
    if not all(e.verify() for e in endorsements):
        return False
    orgs = {peer_orgs[e.peer_id] for e in endorsements if e.peer_id in peer_orgs}
    if not orgs.issubset(policy.organizations):
        return False
    return len(orgs) >= policy.threshold


@dataclass(frozen=True)
class ProposalResponse:
    """What an endorsing peer hands back to the client."""

    peer_id: str
    endorsement: Endorsement
    query_log: QueryLogEntry | None = None


class Peer:
    """One endorsing/committing peer with its own ledger and chaincode context."""

    def __init__(
        self,
        peer_id: str,
        org_id: str,
        channel_id: str,
        rules: RecordRules,
        params: PrivacyParams,
        noise: NoiseSource,
        epsilon_max: float | None = None,
        noise_enabled: bool = True,
        reuse_enabled: bool = False,
    ):
        self.peer_id = peer_id
        self.org_id = org_id
        self.ledger = Ledger(rules)
        self.ctx = ChaincodeContext(
            channel_id=channel_id,
            state=self.ledger.state,
            params=params,
            noise=noise,
            epsilon_max=epsilon_max,
            noise_enabled=noise_enabled,
            reuse_enabled=reuse_enabled,
        )

    def endorse(self, proposal: Transaction, timestamp: int) -> ProposalResponse:
        """Execute the chaincode on a proposal. Ledger state is not altered here."""
        category = classify(proposal)
        digest = proposal.proposal_digest()
        if category is TxCategory.FINANCIAL:
            rw_set = execute_write(self.ctx, proposal.payload)
            endorsement = Endorsement.create(self.peer_id, digest, None, rw_set)
            return ProposalResponse(peer_id=self.peer_id, endorsement=endorsement)
        spec = proposal.payload
        response = execute_query(self.ctx, spec, client_id=proposal.client_id)
        entry = record_response(self.ctx, spec, response, timestamp)
        endorsement = Endorsement.create(self.peer_id, digest, response, ())
        return ProposalResponse(
            peer_id=self.peer_id, endorsement=endorsement, query_log=entry
        )

    def validate_and_commit(
        self,
        block: Block,
        policy: EndorsementPolicy,
        peer_orgs: Mapping[str, str],
    ) -> tuple[bool, ...]:
        """Check policy and write-conflicts per transaction, then commit.

        First writer of a key version within a block wins; later writers of
        the same version are flagged invalid but stay in the block. Raises
        ChainMismatch when the block does not extend this peer's chain.
        """
        if block.number != self.ledger.height or block.prev_hash != self.ledger.tip_hash:
            raise ChainMismatch(
                f"peer {self.peer_id}: block {block.number} does not extend height "
                f"{self.ledger.height}"
            )
        flags = []
        staged: dict[str, int] = {}
        for tx in block.tx_list:
            ok = check_policy(policy, tx.endorsements, peer_orgs)
            if ok and tx.tx_type is not TxType.QUERY:
                for item in tx.write_set():
                    current = staged.get(item.key, self.ledger.state.version(item.key))
                    if item.version != current + 1:
                        ok = False
                        break
                if ok:
                    for item in tx.write_set():
                        staged[item.key] = item.version
            flags.append(ok)
        flagged = block.with_flags(tuple(flags))
        self.ledger.append_block(flagged)
        return tuple(flags)


@dataclass(frozen=True)
class OrdererConfig:
    mode: str = "solo"
    batch_size: int = 10
    batch_timeout: float = 0.5

    def __post_init__(self) -> None:
        if self.mode != "solo":
            raise ValueError(f"only solo ordering is supported, got {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.batch_timeout <= 0:
            raise ValueError("batch_timeout must be positive")


class Orderer:
    """Single ordering node: FIFO sequencing and block cutting.

    The orderer sees only endorsed transactions; query payloads reaching it
    already carry perturbed values.
    """

    def __init__(self, config: OrdererConfig):
        self.config = config
        self.queue: list[Transaction] = []
        self.height = 0
        self.tip_hash = ZERO_DIGEST
        self.cut_count = 0

    def submit(self, tx: Transaction) -> int:
        """Enqueue a transaction FIFO; returns its queue position."""
        self.queue.append(tx)
        return len(self.queue) - 1

    def batch_ready(self) -> bool:
        return len(self.queue) >= self.config.batch_size

    def cut_block(self) -> Block:
        """Package up to batch_size queued transactions into the next block."""
        if not self.queue:
            raise ValueError("cut_block requires a non-empty queue")
        batch = tuple(self.queue[: self.config.batch_size])
        del self.queue[: len(batch)]
        block = make_block(self.height, self.tip_hash, batch)
        self.height += 1
        self.tip_hash = block.block_hash
        self.cut_count += 1
        return block


def submit_to_orderer(
    orderer: Orderer,
    tx: Transaction,
    policy: EndorsementPolicy,
    peer_orgs: Mapping[str, str],
) -> int:
    """Policy-gate a transaction into the ordering queue."""
    if not check_policy(policy, tx.endorsements, peer_orgs):
        raise PolicyUnsatisfied(f"transaction {tx.tx_id} lacks a satisfying endorsement set")
    return orderer.submit(tx)


class Network:
    """A channel's peers, policy, and solo orderer, driven synchronously.

    Timing belongs to PipelineSimulator; these methods perform the phase logic
    immediately, which also makes them directly testable.
    """

    def __init__(
        self,
        channel_id: str,
        rules: RecordRules,
        policy: EndorsementPolicy,
        orderer_config: OrdererConfig,
        peer_specs: list[tuple[str, str]],
        params: PrivacyParams,
        noise_seeds: Mapping[str, int],
        epsilon_max: float | None = None,
        noise_enabled: bool = True,
        reuse_enabled: bool = False,
    ):
        self.channel_id = channel_id
        self.rules = rules
        self.policy = policy
        self.orderer = Orderer(orderer_config)
        self.peers: dict[str, Peer] = {}
        for peer_id, org_id in peer_specs:
            self.peers[peer_id] = Peer(
                peer_id=peer_id,
                org_id=org_id,
                channel_id=channel_id,
                rules=rules,
                params=params,
                noise=NoiseSource(noise_seeds[peer_id]),
                epsilon_max=epsilon_max,
                noise_enabled=noise_enabled,
                reuse_enabled=reuse_enabled,
            )
        self.peer_orgs = {p.peer_id: p.org_id for p in self.peers.values()}
        self._bootstrap_genesis()

    def _bootstrap_genesis(self) -> None:
        genesis = make_block(0, ZERO_DIGEST, ()).with_flags(())
        for peer in self.peers.values():
            peer.ledger.append_block(genesis)
        self.orderer.height = 1
        self.orderer.tip_hash = genesis.block_hash

    def propose(
        self, client_id: str, tx: Transaction, targets: list[str], timestamp: int = 0
    ) -> list[ProposalResponse]:
        """Fan a proposal out to target peers; each executes independently."""
        if not targets:
            raise NoSuchPeer("proposal requires at least one target peer")
        for t in targets:
            if t not in self.peers:
                raise NoSuchPeer(f"unknown peer {t!r}")
        return [self.peers[t].endorse(tx, timestamp) for t in targets]

    def assemble(
        self, proposal: Transaction, responses: list[ProposalResponse]
    ) -> Transaction:
        """Attach endorsements (and, for queries, the perturbed payload)."""
        endorsements = tuple(r.endorsement for r in responses)
        payload = proposal.payload
        for r in responses:
            if r.query_log is not None:
                payload = r.query_log
                break
        return replace(proposal, payload=payload, endorsements=endorsements)

    def submit_to_orderer(self, tx: Transaction) -> int:
        return submit_to_orderer(self.orderer, tx, self.policy, self.peer_orgs)

    def deliver_block(self, block: Block) -> dict[str, tuple[bool, ...]]:
        """Commit a cut block on every peer; flags must agree across peers."""
        return {
            peer_id: peer.validate_and_commit(block, self.policy, self.peer_orgs)
            for peer_id, peer in self.peers.items()
        }

    def converged(self) -> bool:
        """All peers hold identical chains (hashes, heights, and world state)."""
        peers = list(self.peers.values())
        first = peers[0].ledger
        for other in peers[1:]:
            if other.ledger.height != first.height:
                return False
            if [b.block_hash for b in other.ledger.blocks] != [
                b.block_hash for b in first.blocks
            ]:
                return False
            if not other.ledger.state.equals(first.state):
                return False
        return True


@dataclass(frozen=True)
class PipelineDelays:
    """Per-stage processing costs; zero everywhere means an ideal network."""

    endorse: float = 0.0
    query_processing: float = 0.0
    order: float = 0.0
    validate: float = 0.0
    hop: float = 0.0


@dataclass
class TxTimeline:
    """Lifecycle trace of one transaction through the pipeline."""

    tx_id: str
    kind: TxType
    owners: tuple[str, ...]
    submit_time: float
    commit_time: float | None = None
    failed: bool = False
    response: PerturbedResponse | None = None

    @property
    def latency(self) -> float | None:
        if self.commit_time is None:
            return None
        return self.commit_time - self.submit_time


class PipelineSimulator:
    """Drives the four pipeline phases through an event schedule.

    Every cross-stage handoff is an event; single-server FIFO stages model
    endorsement, ordering, and validation capacity. The orderer-visible
    serialization of every endorsed transaction is retained for auditing.
    """

    def __init__(
        self,
        network: Network,
        delays: PipelineDelays = PipelineDelays(),
        clock: Clock | None = None,
    ):
        self.network = network
        self.delays = delays
        self.clock = clock if clock is not None else VirtualClock()
        self.scheduler = Scheduler(self.clock)
        self.endorse_servers = {pid: FifoServer(self.scheduler) for pid in network.peers}
        self.order_server = FifoServer(self.scheduler)
        self.validate_servers = {pid: FifoServer(self.scheduler) for pid in network.peers}
        self.timelines: dict[str, TxTimeline] = {}
        self.orderer_messages: list[bytes] = []
        self.committed_blocks: list[Block] = []
        self._batch_epoch = 0
        self._block_waits: dict[int, set[str]] = {}

    # -- submission ------------------------------------------------------

    def submit_at(
        self,
        t: float,
        client_id: str,
        tx_type: TxType,
        payload: object,
        targets: list[str],
        tx_id: str,
    ) -> None:
        """Schedule a client submission at time t."""
        for target in targets:
            if target not in self.network.peers:
                raise NoSuchPeer(f"unknown peer {target!r}")
        self.scheduler.call_at(
            t, lambda: self._start(client_id, tx_type, payload, list(targets), tx_id)
        )

    def _start(
        self,
        client_id: str,
        tx_type: TxType,
        payload: object,
        targets: list[str],
        tx_id: str,
    ) -> None:
        now = self.clock.now()
        proposal = Transaction(
            tx_id=tx_id,
            tx_type=tx_type,
            payload=payload,
            client_id=client_id,
            submit_time=int(now * 1e9),
        )
        owners: tuple[str, ...] = ()
        if isinstance(payload, QuerySpec):
            owners = tuple(q.owner for q in payload.batch.queries)
        timeline = TxTimeline(tx_id=tx_id, kind=tx_type, owners=owners, submit_time=now)
        self.timelines[tx_id] = timeline
        pending = {"remaining": len(targets), "responses": []}

        def endorse_on(peer_id: str) -> None:
            service = self.delays.endorse
            if tx_type is TxType.QUERY:
                service += self.delays.query_processing

            def run_endorse() -> None:
                response = self.network.peers[peer_id].endorse(
                    proposal, int(self.clock.now() * 1e9)
                )
                pending["responses"].append(response)
                pending["remaining"] -= 1
                if pending["remaining"] == 0:
                    self.scheduler.call_after(
                        self.delays.hop,
                        lambda: self._to_orderer(proposal, pending["responses"], timeline),
                    )

            self.endorse_servers[peer_id].submit(service, run_endorse)

        for peer_id in targets:
            self.scheduler.call_after(self.delays.hop, lambda p=peer_id: endorse_on(p))

    # -- ordering ----------------------------------------------------------

    def _to_orderer(
        self,
        proposal: Transaction,
        responses: list[ProposalResponse],
        timeline: TxTimeline,
    ) -> None:
        endorsed = self.network.assemble(proposal, responses)
        if isinstance(endorsed.payload, QueryLogEntry):
            timeline.response = endorsed.payload.response

        def run_order() -> None:
            try:
                self.network.submit_to_orderer(endorsed)
            except PolicyUnsatisfied:
                timeline.failed = True
                return
            self.orderer_messages.append(endorsed.canonical_bytes())
            orderer = self.network.orderer
            if orderer.batch_ready():
                self._cut()
            elif len(orderer.queue) == 1:
                epoch = self._batch_epoch
                self.scheduler.call_after(
                    orderer.config.batch_timeout, lambda: self._timeout_cut(epoch)
                )

        self.order_server.submit(self.delays.order, run_order)

    def _timeout_cut(self, epoch: int) -> None:
        if epoch == self._batch_epoch and self.network.orderer.queue:
            self._cut()

    def _cut(self) -> None:
        self._batch_epoch += 1
        block = self.network.orderer.cut_block()
        self._block_waits[block.number] = set(self.network.peers)
        for peer_id in self.network.peers:
            self.scheduler.call_after(
                self.delays.hop, lambda p=peer_id, b=block: self._validate_on(p, b)
            )
        if self.network.orderer.batch_ready():
            self._cut()
        elif self.network.orderer.queue:
            epoch = self._batch_epoch
            self.scheduler.call_after(
                self.network.orderer.config.batch_timeout,
                lambda: self._timeout_cut(epoch),
            )

    # -- validation and commit ----------------------------------------------

    def _validate_on(self, peer_id: str, block: Block) -> None:
        service = self.delays.validate * len(block.tx_list)

        def run_commit() -> None:
            flags = self.network.peers[peer_id].validate_and_commit(
                block, self.network.policy, self.network.peer_orgs
            )
            waits = self._block_waits[block.number]
            waits.discard(peer_id)
            if not waits:
                now = self.clock.now()
                for tx, ok in zip(block.tx_list, flags):
                    timeline = self.timelines.get(tx.tx_id)
                    if timeline is None:
                        continue
                    timeline.commit_time = now
                    timeline.failed = not ok
                self.committed_blocks.append(block)

        self.validate_servers[peer_id].submit(service, run_commit)

    # -- running -------------------------------------------------------------

    def run(self) -> None:
        """Process events until the pipeline fully drains."""
        self.scheduler.run()
