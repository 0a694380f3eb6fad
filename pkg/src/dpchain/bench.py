"""Benchmark harness: workload generation, init/query rounds, epsilon sweeps.

Two round kinds mirror the evaluation setup: an init round pushes a fixed
number of write transactions at a fixed rate, a query round issues per-customer
sum queries for a fixed duration. Relative error is computed against the
harness's own ground-truth tally, which is kept beside the pipeline and never
flows through it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attack import relative_error
from .clock import Clock, VirtualClock, WallClock
from .errors import LedgerEmpty
from .ledger import PurchaseRecord, RecordRules, TxType
from .network import (
    EndorsementPolicy,
    Network,
    OrdererConfig,
    PipelineDelays,
    PipelineSimulator,
)
from .chaincode import QuerySpec
from .privacy import (
    Aggregate,
    PrivacyParams,
    QueryBatch,
    QueryDescriptor,
    derive_seed,
)

DEFAULT_CUSTOMERS = ("Bob", "Claire", "David", "Ali", "Alice")
DEFAULT_COLORS = ("red", "blue", "green", "black", "white", "pink", "rainbow")
DEFAULT_PRODUCTS = ("bolt", "gear", "valve", "panel", "sensor")


@dataclass(frozen=True)
class BenchConfig:
    """Run parameters for the benchmark CLI; mirrors the key-value config file."""

    workers: int = 5
    init_tx_total: int = 500
    rates: tuple[float, ...] = (10.0, 20.0, 30.0, 40.0, 50.0)
    query_round_duration: float = 15.0
    epsilon_sweep: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5)
    epsilon: float = 0.5
    sensitivity: float = 100.0
    customers: tuple[str, ...] = DEFAULT_CUSTOMERS
    colors: tuple[str, ...] = DEFAULT_COLORS
    products: tuple[str, ...] = DEFAULT_PRODUCTS
    quantity_range: tuple[int, int] = (1, 100)
    master_seed: int = 42
    batch_size: int = 10
    batch_timeout: float = 0.5
    endorse_delay: float = 0.022
    query_processing_delay: float = 0.018
    order_delay: float = 0.005
    validate_delay: float = 0.002
    hop_latency: float = 0.0
    noise_enabled: bool = True
    reuse_enabled: bool = False
    sweep_repetitions: int = 10
    epsilon_max: float = 2.5
    wall_clock: bool = False

    def __post_init__(self) -> None:
        if self.workers < 1 or self.init_tx_total < 0:
            raise ValueError("workers must be >= 1 and init_tx_total >= 0")
        if not self.rates or list(self.rates) != sorted(self.rates):
            raise ValueError("rates must be non-empty and ascending")
        if any(r <= 0 for r in self.rates):
            raise ValueError("rates must be positive")
        lo, hi = self.quantity_range
        if not (1 <= lo <= hi <= 100):
            raise ValueError("quantity_range must lie within [1, 100]")
        if self.query_round_duration <= 0 or self.sweep_repetitions < 1:
            raise ValueError("query_round_duration and sweep_repetitions must be positive")
        if not self.customers or not self.colors:
            raise ValueError("customers and colors must be non-empty")

    def rules(self) -> RecordRules:
        return RecordRules(
            customers=frozenset(self.customers),
            colors=frozenset(self.colors),
            quantity_range=self.quantity_range,
        )

    def delays(self) -> PipelineDelays:
        return PipelineDelays(
            endorse=self.endorse_delay,
            query_processing=self.query_processing_delay,
            order=self.order_delay,
            validate=self.validate_delay,
            hop=self.hop_latency,
        )

    def make_clock(self) -> Clock:
        return WallClock() if self.wall_clock else VirtualClock()


_LIST_FIELDS = {"rates", "epsilon_sweep", "customers", "colors", "products", "quantity_range"}
_BOOL_FIELDS = {"noise_enabled", "reuse_enabled", "wall_clock"}
_INT_FIELDS = {"workers", "init_tx_total", "master_seed", "batch_size", "sweep_repetitions"}


def load_config(path: str | Path, **overrides: object) -> BenchConfig:
    """Parse a `key = value` config file; lists are comma-separated."""
    values: dict[str, object] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        text = text.strip()
        if key in _LIST_FIELDS:
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if key == "rates" or key == "epsilon_sweep":
                values[key] = tuple(float(p) for p in parts)
            elif key == "quantity_range":
                values[key] = tuple(int(p) for p in parts)
            else:
                values[key] = tuple(parts)
        elif key in _BOOL_FIELDS:
            values[key] = text.lower() in ("1", "true", "yes", "on")
        elif key in _INT_FIELDS:
            values[key] = int(text)
        else:
            values[key] = float(text)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return BenchConfig(**values)  # type: ignore[arg-type]


@dataclass(frozen=True)
class WorkloadWrite:
    """One generated write: the submitting worker and its record."""

    client_id: str
    record: PurchaseRecord


def generate_write_workload(config: BenchConfig, seed: int) -> list[WorkloadWrite]:
    """Deterministic stream of write transactions.

    Owners, quantities, and colors are uniform over their configured sets;
    workers take turns round-robin. Record keys are tx-<counter>.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    lo, hi = config.quantity_range
    writes = []
    for i in range(config.init_tx_total):
        record = PurchaseRecord(
            key=f"tx-{i}",
            product=config.products[int(rng.integers(0, len(config.products)))],
            owner=config.customers[int(rng.integers(0, len(config.customers)))],
            quantity=int(rng.integers(lo, hi + 1)),
            color=config.colors[int(rng.integers(0, len(config.colors)))],
        )
        writes.append(WorkloadWrite(client_id=f"worker-{i % config.workers}", record=record))
    return writes


def ground_truth(writes: list[WorkloadWrite]) -> dict[str, int]:
    """Per-owner true sums tallied directly from the workload (harness-side)."""
    truth: dict[str, int] = {}
    for w in writes:
        truth[w.record.owner] = truth.get(w.record.owner, 0) + w.record.quantity
    return truth


@dataclass
class RoundMetrics:
    """Counts, timing, and (for query rounds) relative-error samples of one round."""

    kind: str
    rate: float
    epsilon: float | None
    submitted: int
    committed: int
    failed: int
    elapsed: float
    latencies_ms: list[float] = field(default_factory=list)
    rel_errors_pct: list[float] = field(default_factory=list)

    @property
    def in_flight(self) -> int:
        return self.submitted - self.committed - self.failed

    @property
    def throughput(self) -> float:
        return self.committed / self.elapsed if self.elapsed > 0 else 0.0

    @property
    def lat_min_ms(self) -> float:
        return min(self.latencies_ms) if self.latencies_ms else 0.0

    @property
    def lat_avg_ms(self) -> float:
        return sum(self.latencies_ms) / len(self.latencies_ms) if self.latencies_ms else 0.0

    @property
    def lat_max_ms(self) -> float:
        return max(self.latencies_ms) if self.latencies_ms else 0.0

    @property
    def mean_rel_err_pct(self) -> float:
        if not self.rel_errors_pct:
            return 0.0
        return sum(self.rel_errors_pct) / len(self.rel_errors_pct)

    @property
    def std_rel_err_pct(self) -> float:
        n = len(self.rel_errors_pct)
        if n < 2:
            return 0.0
        mean = self.mean_rel_err_pct
        return math.sqrt(sum((x - mean) ** 2 for x in self.rel_errors_pct) / (n - 1))


@dataclass
class BenchRun:
    """A live network plus everything the harness tracks beside it."""

    config: BenchConfig
    network: Network
    sim: PipelineSimulator
    truth: dict[str, int]
    tx_counter: int = 0

    def next_tx_id(self, prefix: str) -> str:
        self.tx_counter += 1
        return f"{prefix}-{self.tx_counter}"


def build_run(
    config: BenchConfig,
    epsilon: float | None = None,
    seed_label: object = "run",
    noise_enabled: bool | None = None,
    clock: Clock | None = None,
) -> BenchRun:
    """Assemble the two-org, one-peer-each network behind a fresh simulator."""
    eps = config.epsilon if epsilon is None else epsilon
    peer_specs = [("org1-peer0", "org1"), ("org2-peer0", "org2")]
    noise_seeds = {
        pid: derive_seed(config.master_seed, seed_label, "noise", pid) for pid, _ in peer_specs
    }
    network = Network(
        channel_id="supply",
        rules=config.rules(),
        policy=EndorsementPolicy(threshold=1, organizations=frozenset({"org1", "org2"})),
        orderer_config=OrdererConfig(
            batch_size=config.batch_size, batch_timeout=config.batch_timeout
        ),
        peer_specs=peer_specs,
        params=PrivacyParams(epsilon=eps, sensitivity=config.sensitivity),
        noise_seeds=noise_seeds,
        epsilon_max=config.epsilon_max,
        noise_enabled=config.noise_enabled if noise_enabled is None else noise_enabled,
        reuse_enabled=config.reuse_enabled,
    )
    sim = PipelineSimulator(
        network, config.delays(), clock if clock is not None else config.make_clock()
    )
    return BenchRun(config=config, network=network, sim=sim, truth={})


def run_init_round(
    config: BenchConfig,
    rate: float | None = None,
    run: BenchRun | None = None,
    epsilon: float | None = None,
) -> tuple[RoundMetrics, BenchRun]:
    """Drive the write workload through the full pipeline at a fixed rate."""
    rate = rate if rate is not None else config.rates[0]
    if run is None:
        run = build_run(config, epsilon=epsilon, seed_label=("init", rate))
    writes = generate_write_workload(config, derive_seed(config.master_seed, "workload"))
    run.truth = ground_truth(writes)
    start = run.sim.clock.now()
    tx_ids = []
    for i, w in enumerate(writes, start=1):
        tx_id = w.record.key
        tx_ids.append(tx_id)
        run.sim.submit_at(
            start + i / rate,
            w.client_id,
            TxType.WRITE,
            w.record,
            targets=list(run.network.peers),
            tx_id=tx_id,
        )
    run.sim.run()
    return _collect(run, "init", rate, None, tx_ids, start), run


def run_query_round(
    config: BenchConfig,
    epsilon: float,
    run: BenchRun,
    rate: float | None = None,
    duration: float | None = None,
    target_peer: str | None = None,
) -> RoundMetrics:
    """Issue per-customer sum queries at a fixed rate for the round duration.

    Each response's relative error is computed against the harness ground
    truth. Raises LedgerEmpty when no records have been committed.
    """
    if not any(len(p.ledger.state) for p in run.network.peers.values()):
        raise LedgerEmpty("query round requires an initialized ledger")
    rate = rate if rate is not None else config.rates[0]
    duration = duration if duration is not None else config.query_round_duration
    target = target_peer or next(iter(run.network.peers))
    for peer in run.network.peers.values():
        peer.ctx.params = replace(peer.ctx.params, epsilon=epsilon)
    n_queries = int(rate * duration)
    start = run.sim.clock.now()
    tx_ids = []
    for i in range(1, n_queries + 1):
        owner = config.customers[(i - 1) % len(config.customers)]
        spec = QuerySpec(
            batch=QueryBatch(queries=(QueryDescriptor(aggregate=Aggregate.SUM, owner=owner),))
        )
        tx_id = run.next_tx_id("q")
        tx_ids.append(tx_id)
        run.sim.submit_at(
            start + i / rate,
            f"worker-{(i - 1) % config.workers}",
            TxType.QUERY,
            spec,
            targets=[target],
            tx_id=tx_id,
        )
    run.sim.run()
    return _collect(run, "query", rate, epsilon, tx_ids, start)


def _collect(
    run: BenchRun,
    kind: str,
    rate: float,
    epsilon: float | None,
    tx_ids: list[str],
    start: float,
) -> RoundMetrics:
    committed = failed = 0
    latencies = []
    rel_errors = []
    last_commit = start
    for tx_id in tx_ids:
        tl = run.sim.timelines.get(tx_id)
        if tl is None:
            continue
        if tl.failed:
            failed += 1
            continue
        if tl.commit_time is None:
            continue
        committed += 1
        last_commit = max(last_commit, tl.commit_time)
        latencies.append((tl.commit_time - tl.submit_time) * 1000.0)
        if tl.response is not None:
            for owner, noisy in zip(tl.owners, tl.response.values):
                true_value = run.truth.get(owner, 0)
                if true_value != 0:
                    rel_errors.append(relative_error(true_value, noisy))
    return RoundMetrics(
        kind=kind,
        rate=rate,
        epsilon=epsilon,
        submitted=len(tx_ids),
        committed=committed,
        failed=failed,
        elapsed=last_commit - start,
        latencies_ms=latencies,
        rel_errors_pct=rel_errors,
    )


@dataclass(frozen=True)
class SweepPoint:
    """One row of the epsilon sweep table."""

    epsilon: float
    mean_rel_err_pct: float
    accuracy_pct: float
    trials: int


@dataclass
class SweepResult:
    points: list[SweepPoint]
    samples: list[tuple[float, int, float, float, float]]
    """Per-query rows (epsilon, trial, actual, noisy, relative_error)."""


def sweep_epsilon(
    config: BenchConfig,
    repetitions: int | None = None,
    rate: float | None = None,
) -> SweepResult:
    """Run repeated query rounds per epsilon over identical ledger data.

    The workload seed is fixed across epsilons so every sweep point queries the
    same true sums; accuracy is 100 minus the mean relative error.
    """
    repetitions = repetitions if repetitions is not None else config.sweep_repetitions
    rate = rate if rate is not None else config.rates[0]
    points = []
    samples: list[tuple[float, int, float, float, float]] = []
    for eps in config.epsilon_sweep:
        _, run = run_init_round(
            config,
            rate=max(config.rates),
            run=build_run(config, epsilon=eps, seed_label=("sweep", eps)),
        )
        errors: list[float] = []
        for _ in range(repetitions):
            metrics = run_query_round(config, eps, run, rate=rate)
            errors.extend(metrics.rel_errors_pct)
        trial = 0
        for tl in run.sim.timelines.values():
            if tl.kind is not TxType.QUERY or tl.response is None or tl.failed:
                continue
            for owner, noisy in zip(tl.owners, tl.response.values):
                actual = run.truth.get(owner, 0)
                if actual == 0:
                    continue
                trial += 1
                samples.append(
                    (eps, trial, float(actual), noisy, relative_error(actual, noisy))
                )
        mean_err = sum(errors) / len(errors) if errors else 0.0
        points.append(
            SweepPoint(
                epsilon=eps,
                mean_rel_err_pct=mean_err,
                accuracy_pct=100.0 - mean_err,
                trials=len(errors),
            )
        )
    return SweepResult(points=points, samples=samples)
