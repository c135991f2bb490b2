"""Command-line entry point: ``hashgraph {simulate,attack,check,probe}``.

Exit codes: 0 success, 1 rejected configuration, 2 consistency violation,
attack invariant failure or trace mismatch, 3 stalled run.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from hashgraph.attack import (
    PreconditionViolated,
    attack_simulation,
    exact_supermajority_prob,
    expected_coin_rounds,
    genesis_of,
    hoeffding_bound,
    one_sided_tail,
    quorum,
    run_delay_attack,
)
from hashgraph.consensus import DEFAULT_COIN_PERIOD
from hashgraph.export import metrics_row, read_trace, write_dot, write_metrics, write_trace
from hashgraph.oracle import check_trace
from hashgraph.simnet import (
    DEFAULT_MAX_STEPS,
    ConfigError,
    ConsistencyViolation,
    FairScheduler,
    RandomScheduler,
    SimConfig,
    Simulation,
    Stalled,
    default_transactions,
)

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_STALLED = 0, 1, 2, 3

DEFAULTS = {
    "n": 4,
    "t": 0,
    "corrupted": None,
    "coin_period": DEFAULT_COIN_PERIOD,
    "seed": 0,
    "seeds": None,
    "max_steps": DEFAULT_MAX_STEPS,
    "steps": 1000,
    "fork_probability": 0.3,
    "tx_file": None,
    "out": "out",
    "dot": False,
    "scheduler": "fair",
    "target_witness": 0,
    "max_rounds": 200,
}


@dataclass
class RunSpec:
    command: str
    config: SimConfig
    output_dir: Path
    export_dot: bool = False
    seeds: list[int] = field(default_factory=list)
    options: dict = field(default_factory=dict)


def parse_seeds(text: str) -> list[int]:
    """``"5"``, ``"0-199"`` or ``"1,4,9"``."""
    seeds: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def parse_corrupted(text) -> frozenset[int]:
    if isinstance(text, (list, tuple)):
        return frozenset(int(p) for p in text)
    return frozenset(int(p) for p in str(text).split(",") if p.strip())


def read_tx_file(path: Path) -> tuple[tuple[int, int, bytes], ...]:
    """CSV with a ``step,party,tx`` header."""
    with open(path, encoding="utf-8", newline="") as fh:
        return tuple((int(r["step"]), int(r["party"]), r["tx"].encode()) for r in csv.DictReader(fh))


def merged_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        opts.update(loaded)
    opts.update({k: v for k, v in vars(args).items() if v is not None and k in DEFAULTS})
    return opts


def build_spec(command: str, opts: dict) -> RunSpec:
    n = int(opts["n"])
    if opts["corrupted"] is not None:
        corrupted = parse_corrupted(opts["corrupted"])
    else:
        corrupted = frozenset(range(n - int(opts["t"]), n))
    seeds = parse_seeds(opts["seeds"]) if opts["seeds"] is not None else [int(opts["seed"])]
    config = SimConfig(
        n=n, corrupted=corrupted, coin_period=int(opts["coin_period"]), seed=seeds[0],
        max_steps=int(opts["max_steps"]), steps=int(opts["steps"]),
        tx_injection=read_tx_file(Path(opts["tx_file"])) if opts["tx_file"] else (),
        fork_probability=float(opts["fork_probability"]),
    )
    return RunSpec(command, config, Path(opts["out"]), bool(opts["dot"]), seeds, opts)


def _seed_dir(spec: RunSpec, seed: int) -> Path:
    path = spec.output_dir if len(spec.seeds) == 1 else spec.output_dir / f"seed_{seed}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _with_seed(config: SimConfig, seed: int, default_tx: bool) -> SimConfig:
    tx = config.tx_injection
    if default_tx:
        tx = default_transactions(config.n, seed, corrupted=config.corrupted)
    return SimConfig(config.n, config.corrupted, config.coin_period, seed, config.max_steps,
                     config.steps, tx, config.fork_probability)


def cmd_simulate(spec: RunSpec) -> int:
    rows = []
    code = EXIT_OK
    for seed in spec.seeds:
        config = _with_seed(spec.config, seed, not spec.options["tx_file"])
        sim = Simulation(config)
        scheduler = RandomScheduler(seed) if spec.options["scheduler"] == "random" else FairScheduler(seed)
        out = _seed_dir(spec, seed)
        try:
            result = sim.run(scheduler)
        except ConsistencyViolation as exc:
            v = exc.violation
            print(f"seed={seed} violation: parties {v.i} and {v.j} diverge at log index {v.index}")
            code = max(code, EXIT_VIOLATION)
            result = sim.result()
        except Stalled as exc:
            print(f"seed={seed} stalled: {exc}")
            code = max(code, EXIT_STALLED)
            result = sim.result()
        write_trace(out / "trace.jsonl", sim.trace)
        if spec.export_dot:
            write_dot(out / "graphs", ((p.id, p.graph) for p in sim.parties))
        if result.violation is not None and code == EXIT_OK:
            v = result.violation
            print(f"seed={seed} violation: parties {v.i} and {v.j} diverge at log index {v.index}")
            code = EXIT_VIOLATION
        rows.append(metrics_row(result))
        print(f"seed={seed} n={result.n} t={result.t} steps={result.steps} "
              f"committedTx={result.committed_tx} maxRound={result.max_round} "
              f"allCommitted={result.all_committed}")
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    write_metrics(spec.output_dir / "metrics.csv", rows)
    return code


def cmd_attack(spec: RunSpec) -> int:
    cfg = spec.config
    if cfg.corrupted:
        print("the delay attack runs with honest parties only; drop --t/--corrupted")
        return EXIT_CONFIG
    rows, all_stats = [], []
    code = EXIT_OK
    for seed in spec.seeds:
        try:
            sim = attack_simulation(cfg.n, seed, cfg.coin_period)
            target = genesis_of(sim, int(spec.options["target_witness"]))
            stats = run_delay_attack(sim, target, int(spec.options["max_rounds"]))
        except PreconditionViolated as exc:
            print(f"refused: {exc}")
            return EXIT_CONFIG
        except Stalled as exc:
            print(f"seed={seed} stalled: {exc}")
            code = max(code, EXIT_STALLED)
            continue
        out = _seed_dir(spec, seed)
        write_trace(out / "trace.jsonl", sim.trace)
        if spec.export_dot:
            write_dot(out / "graphs", ((p.id, p.graph) for p in sim.parties))
        for v in stats.violations:
            print(f"seed={seed} invariant failed: {v}")
            code = max(code, EXIT_VIOLATION)
        all_stats.append(stats)
        result = sim.result()
        rows.append(metrics_row(result, stats))
        print(f"seed={seed} n={cfg.n} roundsElapsed={stats.rounds_elapsed} "
              f"coinRoundsElapsed={stats.coin_rounds_elapsed} decidedAt={stats.decided_at} "
              f"fame={stats.fame.value} yesCounts={stats.per_coin_round_yes_counts}")
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    write_metrics(spec.output_dir / "metrics.csv", rows)
    if len(all_stats) > 1:
        summary = attack_summary(all_stats, cfg.n, cfg.coin_period)
        with open(spec.output_dir / "attack_summary.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(summary)
            writer.writerow(summary.values())
        for k, v in summary.items():
            print(f"{k}={v}")
    print("after a supermajority coin round the fair scheduler takes over until the decision lands")
    return code


def attack_summary(all_stats, n: int, coin_period: int) -> dict:
    q = quorum(n)
    coin = [y for s in all_stats for y in s.per_coin_round_yes_counts]
    hits = sum(1 for y in coin if y >= q or n - y >= q)
    overheads = [s.overhead for s in all_stats if s.overhead is not None]
    rounds = [s.rounds_elapsed for s in all_stats if s.decided_at is not None]
    overhead = statistics.mean(overheads) if overheads else 0.0
    return {
        "runs": len(all_stats),
        "coinRounds": len(coin),
        "empiricalSupermajorityFreq": round(hits / len(coin), 6) if coin else "",
        "exactSupermajorityProb": str(exact_supermajority_prob(n)),
        "meanRoundsToDecision": round(statistics.mean(rounds), 4) if rounds else "",
        "meanOverhead": round(overhead, 4),
        "predictedRounds": round(coin_period * expected_coin_rounds(n) + overhead, 4),
    }


def cmd_check(path: Path) -> int:
    records = read_trace(path) if path.stat().st_size else []
    mismatch = check_trace(records)
    if mismatch is None:
        print(f"{path}: {len(records)} records consistent")
        return EXIT_OK
    print(f"{path}:{mismatch.line}: {mismatch.kind} mismatch: {mismatch.detail}")
    return EXIT_VIOLATION


def cmd_probe(ns: list[int], out=None) -> int:
    out = out or sys.stdout
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["n", "exactProb", "exactProbFloat", "expectedCoinRounds", "hoeffdingBound",
                     "oneSidedTail", "tailWithinBound"])
    for n in ns:
        p = exact_supermajority_prob(n)
        tail = one_sided_tail(n)
        bound = hoeffding_bound(n)
        writer.writerow([n, f"{p.numerator * (2 ** n // p.denominator)}/{2 ** n}", f"{float(p):.6f}",
                         f"{expected_coin_rounds(n):.6f}", f"{bound:.6f}", f"{float(tail):.6f}",
                         float(tail) <= bound])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hashgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", help="JSON file with SimConfig-named keys; flags win")
        p.add_argument("--n", type=int)
        p.add_argument("--t", type=int, help="corrupt the last t parties")
        p.add_argument("--corrupted", help="comma list of corrupted party ids")
        p.add_argument("--coin-period", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--seeds", help="seed range such as 0-199 or a comma list")
        p.add_argument("--max-steps", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--dot", action="store_true", default=None, help="write graphs/party_<i>.dot")

    sim = sub.add_parser("simulate", help="seeded simulation with optional forking parties")
    run_flags(sim)
    sim.add_argument("--steps", type=int, help="scheduler steps before the final drain")
    sim.add_argument("--tx-file", help="CSV of step,party,tx injections")
    sim.add_argument("--scheduler", choices=("fair", "random"))
    sim.add_argument("--fork-probability", type=float)

    att = sub.add_parser("attack", help="delay one witness's fame decision")
    run_flags(att)
    att.add_argument("--target-witness", type=int, help="party whose genesis witness is targeted")
    att.add_argument("--max-rounds", type=int)

    chk = sub.add_parser("check", help="replay a trace through the reference oracle")
    chk.add_argument("trace", type=Path)

    probe = sub.add_parser("probe", help="coin-round supermajority probabilities")
    probe.add_argument("--n", default="7-60", help="party counts, e.g. 7-60 or 7,13")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "check":
        return cmd_check(args.trace)
    if args.command == "probe":
        return cmd_probe(parse_seeds(args.n))
    try:
        spec = build_spec(args.command, merged_options(args))
    except ConfigError as exc:
        print(f"rejected: {exc}")
        return EXIT_CONFIG
    if spec.command == "simulate":
        return cmd_simulate(spec)
    return cmd_attack(spec)


if __name__ == "__main__":
    sys.exit(main())
