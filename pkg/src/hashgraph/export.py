"""Trace, metrics and graph files.

All writers produce byte-identical output for identical inputs: JSON keys keep
insertion order, CSV rows are sorted by seed, and DOT nodes follow each
replica's insertion order.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Optional

from hashgraph.core import Fame, Hashgraph

METRICS_HEADER = (
    "seed", "n", "t", "steps", "committedTx", "maxRound",
    "target", "roundsElapsed", "coinRoundsElapsed", "decidedAt", "perCoinRoundYesCounts",
)


def write_trace(path: Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def read_trace(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def metrics_row(sim_result=None, stats=None, *, seed: Optional[int] = None, n: Optional[int] = None,
                t: int = 0, steps: int = 0, committed_tx: int = 0, max_round: int = 0) -> dict:
    row = dict.fromkeys(METRICS_HEADER, "")
    if sim_result is not None:
        seed, n, t = sim_result.seed, sim_result.n, sim_result.t
        steps, committed_tx, max_round = sim_result.steps, sim_result.committed_tx, sim_result.max_round
    row.update(seed=seed, n=n, t=t, steps=steps, committedTx=committed_tx, maxRound=max_round)
    if stats is not None:
        row.update(
            target=stats.target.hex(),
            roundsElapsed=stats.rounds_elapsed,
            coinRoundsElapsed=stats.coin_rounds_elapsed,
            decidedAt="" if stats.decided_at is None else stats.decided_at,
            perCoinRoundYesCounts=" ".join(map(str, stats.per_coin_round_yes_counts)),
        )
    return row


def metrics_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=METRICS_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in sorted(rows, key=lambda r: r["seed"]):
        writer.writerow(row)
    return buf.getvalue()


def write_metrics(path: Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv(rows))


def read_metrics(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def to_dot(g: Hashgraph, name: str = "hashgraph") -> str:
    """Nodes are labelled ``creator:round``; witnesses are boxes, famous ones filled."""
    lines = [f"digraph {name} {{", "  rankdir=BT;", "  node [fontname=monospace];"]
    for i, event in enumerate(g.events):
        attrs = [f'label="{g.creator[i]}:{g.round[i]}"']
        if g.witness[i]:
            attrs.append("shape=box")
            fame = g.fame.get(i, Fame.UNDECIDED)
            if fame is Fame.FAMOUS:
                attrs.append('style=filled fillcolor="#9ecae1"')
            elif fame is Fame.NOT_FAMOUS:
                attrs.append("style=dashed")
        lines.append(f'  "{event.short()}" [{" ".join(attrs)}];')
    for i, event in enumerate(g.events):
        if g.self_parent[i] >= 0:
            lines.append(f'  "{event.short()}" -> "{g.events[g.self_parent[i]].short()}";')
            lines.append(f'  "{event.short()}" -> "{g.events[g.other_parent[i]].short()}" [style=dotted];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_dot(directory: Path, graphs: Iterable[tuple[int, Hashgraph]]) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for party, g in graphs:
        path = directory / f"party_{party}.dot"
        path.write_text(to_dot(g, f"party_{party}"), encoding="utf-8")
        paths.append(path)
    return paths
