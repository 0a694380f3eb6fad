"""Command-line harness: init, bench, sweep, attack, report."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .attack import AttackPipeline, attack_success_rate, privacy_series
from .bench import (
    BenchConfig,
    generate_write_workload,
    load_config,
    run_init_round,
    run_query_round,
    sweep_epsilon,
)
from .chaincode import QuerySpec
from .ledger import write_snapshot
from .privacy import Aggregate, QueryBatch, QueryDescriptor, derive_seed
from . import report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpchain",
        description=(
            "Permissioned-blockchain simulator with differential-privacy query "
            "perturbation in the endorsement path."
        ),
    )
    parser.add_argument("--config", type=Path, help="key-value config file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--epsilon", type=float, help="privacy budget override")
    parser.add_argument("--rate", type=float, help="single input rate (tx/s) override")
    clock = parser.add_mutually_exclusive_group()
    clock.add_argument(
        "--virtual-clock", action="store_true", help="run on the virtual clock (default)"
    )
    clock.add_argument("--wall-clock", action="store_true", help="run in real time")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("init", help="build the network and initialize the ledger")
    sub.add_parser("bench", help="init and query rounds across the configured rates")
    sub.add_parser("sweep", help="epsilon sweep of query-round relative error")
    attack = sub.add_parser("attack", help="linking-attack trials per epsilon")
    attack.add_argument("--trials", type=int, default=100_000)
    attack.add_argument("--tolerance", type=float, default=10.0)
    sub.add_parser("report", help="re-render figures and summary from CSVs in --out")
    return parser


def _make_config(args: argparse.Namespace) -> BenchConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = BenchConfig()
    updates: dict[str, object] = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.epsilon is not None:
        updates["epsilon"] = args.epsilon
    if args.rate is not None:
        updates["rates"] = (args.rate,)
    if args.wall_clock:
        updates["wall_clock"] = True
    if args.virtual_clock:
        updates["wall_clock"] = False
    return replace(config, **updates) if updates else config


def cmd_init(config: BenchConfig, out: Path) -> int:
    metrics, run = run_init_round(config, rate=config.rates[0])
    out.mkdir(parents=True, exist_ok=True)
    peer = next(iter(run.network.peers.values()))
    snapshot = out / "ledger.snapshot"
    write_snapshot(peer.ledger, snapshot)
    lines = [
        "ledger initialization",
        f"  rate: {metrics.rate:g} tx/s",
        f"  submitted/committed/failed: {metrics.submitted}/{metrics.committed}/{metrics.failed}",
        f"  throughput: {metrics.throughput:.3f} tx/s",
        f"  chain height: {peer.ledger.height} blocks",
        f"  converged: {run.network.converged()}",
        f"  snapshot: {snapshot}",
    ]
    report.write_summary(lines, out / "summary.txt")
    print("\n".join(lines))
    return 0


def cmd_bench(config: BenchConfig, out: Path) -> int:
    all_metrics = []
    for rate in config.rates:
        init_metrics, run = run_init_round(config, rate=rate)
        all_metrics.append(init_metrics)
        query_metrics = run_query_round(config, config.epsilon, run, rate=rate)
        all_metrics.append(query_metrics)
        print(
            f"rate {rate:g}: init {init_metrics.throughput:.2f} tx/s "
            f"(lat {init_metrics.lat_avg_ms:.1f} ms), "
            f"query {query_metrics.throughput:.2f} tx/s "
            f"(lat {query_metrics.lat_avg_ms:.1f} ms)"
        )
    report.write_bench_csv(all_metrics, out / "bench.csv")
    report.render_bench_figures(all_metrics, out)
    lines = ["benchmark rounds"]
    for m in all_metrics:
        lines.append(
            f"  {m.kind} rate={m.rate:g} committed={m.committed}/{m.submitted} "
            f"throughput={m.throughput:.3f} lat_avg_ms={m.lat_avg_ms:.2f}"
        )
    report.write_summary(lines, out / "summary.txt")
    print(f"wrote {out / 'bench.csv'}")
    return 0


def cmd_sweep(config: BenchConfig, out: Path) -> int:
    result = sweep_epsilon(config)
    report.write_sweep_csv(result.points, out / "sweep.csv")
    report.write_series_csv(result.samples, out / "series.csv")
    report.render_sweep_figure(result.points, out)
    series_list = _series_for_plot(config)
    report.render_series_figure(series_list, out)
    lines = ["epsilon sweep (query-response relative error)"]
    for p in result.points:
        line = (
            f"  epsilon={p.epsilon:g}: mean_rel_err={p.mean_rel_err_pct:.3f}% "
            f"accuracy={p.accuracy_pct:.3f}% trials={p.trials}"
        )
        lines.append(line)
        print(line)
    report.write_summary(lines, out / "summary.txt")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def _series_for_plot(config: BenchConfig, repetitions: int = 100) -> list:
    """Short actual-vs-noisy traces for the two tightest budgets in the sweep."""
    writes = generate_write_workload(config, derive_seed(config.master_seed, "workload"))
    records = tuple(w.record for w in writes)
    truth: dict[str, float] = {}
    for w in writes:
        truth[w.record.owner] = truth.get(w.record.owner, 0) + w.record.quantity
    owner = config.customers[0]
    spec = QuerySpec(
        batch=QueryBatch(queries=(QueryDescriptor(aggregate=Aggregate.SUM, owner=owner),))
    )
    series_list = []
    for eps in config.epsilon_sweep[:2]:
        pipeline = AttackPipeline(
            records=records,
            rules=config.rules(),
            epsilon=eps,
            sensitivity=config.sensitivity,
            seed=derive_seed(config.master_seed, "series", eps),
        )
        series_list.append(privacy_series(pipeline.context(), spec, repetitions, truth))
    return series_list


def cmd_attack(config: BenchConfig, out: Path, trials: int, tolerance: float) -> int:
    writes = generate_write_workload(config, derive_seed(config.master_seed, "workload"))
    records = tuple(w.record for w in writes)
    target = config.customers[0]
    rows = []
    for eps in config.epsilon_sweep:
        pipeline = AttackPipeline(
            records=records,
            rules=config.rules(),
            epsilon=eps,
            sensitivity=config.sensitivity,
            noise_enabled=config.noise_enabled,
            seed=derive_seed(config.master_seed, "attack", eps),
        )
        rate = attack_success_rate(pipeline, target, trials, tolerance)
        rows.append((eps, tolerance, rate, trials))
        print(f"epsilon={eps:g} tolerance={tolerance:g}: success_rate={rate:.4f}")
    report.write_attack_csv(rows, out / "attack.csv")
    report.render_attack_figure(rows, out)
    lines = [f"linking attack on {target!r} ({trials} trials, tolerance {tolerance:g})"]
    lines += [f"  epsilon={e:g}: success_rate={r:.4f}" for e, _, r, _ in rows]
    report.write_summary(lines, out / "summary.txt")
    print(f"wrote {out / 'attack.csv'}")
    return 0


def cmd_report(out: Path) -> int:
    rendered = report.render_from_directory(out)
    if not rendered:
        print(f"no delimited files found under {out}")
        return 1
    for path in rendered:
        print(f"rendered {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    config = _make_config(args)
    out: Path = args.out
    if args.command == "init":
        return cmd_init(config, out)
    if args.command == "bench":
        return cmd_bench(config, out)
    if args.command == "sweep":
        return cmd_sweep(config, out)
    if args.command == "attack":
        return cmd_attack(config, out, args.trials, args.tolerance)
    if args.command == "report":
        return cmd_report(out)
    return 2


if __name__ == "__main__":
    sys.exit(main())
