from hashgraph.core import Fame
from hashgraph.export import (
    METRICS_HEADER,
    metrics_csv,
    metrics_row,
    read_metrics,
    read_trace,
    to_dot,
    write_dot,
    write_metrics,
    write_trace,
)
from hashgraph.simnet import FairScheduler, SimConfig, Simulation


def run():
    sim = Simulation(SimConfig(4, seed=1, steps=200))
    return sim, sim.run(FairScheduler(1))


def test_metrics_header():
    assert METRICS_HEADER[:6] == ("seed", "n", "t", "steps", "committedTx", "maxRound")
    _, result = run()
    text = metrics_csv([metrics_row(result)])
    assert text.splitlines()[0] == ",".join(METRICS_HEADER)


def test_metrics_sorted_and_roundtrip(tmp_path):
    rows = [metrics_row(seed=s, n=4) for s in (3, 1, 2)]
    write_metrics(tmp_path / "m.csv", rows)
    back = read_metrics(tmp_path / "m.csv")
    assert [r["seed"] for r in back] == ["1", "2", "3"]
    assert back[0]["target"] == ""


def test_trace_roundtrip(tmp_path):
    sim, _ = run()
    write_trace(tmp_path / "t.jsonl", sim.trace)
    assert read_trace(tmp_path / "t.jsonl") == sim.trace
    assert sim.trace[0]["kind"] == "Config"


def test_dot_marks_witnesses(tmp_path):
    sim, _ = run()
    g = sim.parties[0].graph
    text = to_dot(g, "party_0")
    assert text.startswith("digraph party_0 {")
    assert text.count("shape=box") == sum(g.witness)
    famous = sum(1 for i in range(len(g.events)) if g.witness[i] and g.fame[i] is Fame.FAMOUS)
    assert text.count("style=filled") == famous > 0
    assert 'label="0:1"' in text
    paths = write_dot(tmp_path / "graphs", [(p.id, p.graph) for p in sim.parties])
    assert [p.name for p in paths] == [f"party_{i}.dot" for i in range(4)]
