import math
from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, strategies as st

from hashgraph.attack import (
    Adversary,
    Phase,
    PreconditionViolated,
    attack_simulation,
    exact_supermajority_prob,
    expected_coin_rounds,
    genesis_of,
    hoeffding_bound,
    one_sided_tail,
    quorum,
    run_base_case,
    run_delay_attack,
    run_inductive_step,
)
from hashgraph.consensus import vote
from hashgraph.core import Fame


def adversary(n, seed=0, coin_period=10):
    sim = attack_simulation(n, seed, coin_period, record_trace=False)
    return Adversary(sim, genesis_of(sim, 0))


def test_refuses_small_n():
    sim = attack_simulation(6, 0)
    with pytest.raises(PreconditionViolated, match="n >= 7"):
        Adversary(sim, genesis_of(sim, 0))


def test_base_case_n7():
    adv = adversary(7)
    phase = run_base_case(adv)
    assert (phase.yes, phase.no) == (3, 4)
    assert not phase.violations
    lab = phase.labeling
    assert lab.party(1) == 0
    assert sorted(p for p, v in phase.votes.items() if v) == [lab.party(i) for i in (1, 2, 3)]
    g = adv.view
    strongly = {}
    for name in ("A", "B"):
        i = g.local(phase.anchors[name])
        assert not g.witness[i] and g.round[i] == 1
        strongly[name] = {lab.label(g.creator[w]) for w in g.strongly_seen(i, adv.witnesses(1))}
    assert strongly == {"A": {6, 7}, "B": {7}}


@pytest.mark.parametrize("n", [7, 9, 10, 12])
def test_base_case_split(n):
    adv = adversary(n, seed=n)
    phase = run_base_case(adv)
    assert phase.yes == n // 2 and phase.no == n - n // 2
    assert max(phase.yes, phase.no) < quorum(n)
    assert not phase.violations
    assert adv.target_undecided()


@pytest.mark.parametrize("n", [7, 10])
def test_inductive_step_preserves_votes(n):
    adv = adversary(n, seed=1)
    phase = run_base_case(adv)
    for _ in range(3):
        nxt = run_inductive_step(adv, phase)
        assert nxt.votes == phase.votes
        assert not nxt.violations
        for name in "ABCD":
            i = adv.view.local(nxt.anchors[name])
            assert adv.view.round[i] == phase.round
        phase = nxt
    assert adv.target_undecided()


def test_replicas_agree_with_adversary_votes():
    adv = adversary(7, seed=2)
    phase = run_inductive_step(adv, run_base_case(adv))
    target = adv.id_of(adv.target)
    for party in adv.sim.parties:
        g = party.graph
        x = g.local(target)
        for w in g.witnesses.get(phase.round, []):
            assert vote(g, x, w, 10)[0] == phase.votes[g.creator[w]]


def test_inductive_step_needs_hypothesis():
    adv = adversary(7)
    phase = run_base_case(adv)
    phase.votes = dict.fromkeys(phase.votes, True)
    with pytest.raises(PreconditionViolated):
        run_inductive_step(adv, phase)


def test_delay_attack_reaches_a_coin_round():
    sim = attack_simulation(7, 3, record_trace=True)
    stats = run_delay_attack(sim, genesis_of(sim, 0))
    assert stats.coin_rounds_elapsed >= 1
    assert stats.decided_at is not None and stats.fame is not Fame.UNDECIDED
    assert stats.supermajority_round % 10 == 1
    assert 1 <= stats.overhead <= 3
    assert not stats.violations
    assert all(not p.graph.forks_by(c) for p in sim.parties for c in range(7))
    tallies = [r for r in sim.trace if r["kind"] == "VoteTally"]
    assert [r["round"] for r in tallies] == list(range(2, stats.supermajority_round + 1))


def test_capped_attack_leaves_fame_undecided():
    sim = attack_simulation(7, 0)
    stats = run_delay_attack(sim, genesis_of(sim, 0), max_rounds=9)
    assert stats.decided_at is None and stats.coin_rounds_elapsed == 0
    assert all(p.graph.fame[p.graph.local(stats.target)] is Fame.UNDECIDED for p in sim.parties)


def enumerate_supermajority(n):
    hits = sum(1 for flips in product((0, 1), repeat=n) if 3 * sum(flips) > 2 * n or 3 * sum(flips) < n)
    return Fraction(hits, 2 ** n)


@pytest.mark.parametrize("n", range(1, 13))
def test_exact_probability_matches_enumeration(n):
    assert exact_supermajority_prob(n) == enumerate_supermajority(n)


def test_probability_examples():
    assert exact_supermajority_prob(7) == Fraction(58, 128)
    assert exact_supermajority_prob(13) == Fraction(2186, 8192)
    assert exact_supermajority_prob(3) == Fraction(2, 8)
    assert expected_coin_rounds(7) == pytest.approx(128 / 58)
    assert expected_coin_rounds(13) == pytest.approx(8192 / 2186)
    assert hoeffding_bound(18) == pytest.approx(math.exp(-1))
    assert one_sided_tail(7) == Fraction(29, 128)


def test_expected_rounds_grow():
    values = [expected_coin_rounds(n) for n in (7, 10, 13, 16, 19, 22)]
    assert values == sorted(values)
    assert all(expected_coin_rounds(n) >= math.exp(n / 18) / 2 for n in range(7, 61))


@given(st.integers(7, 60))
def test_tail_within_hoeffding(n):
    assert one_sided_tail(n) <= hoeffding_bound(n)
    assert exact_supermajority_prob(n) / 2 <= hoeffding_bound(n)


def test_phase_names():
    assert Phase.LOWER_ZAG.value == "Zag(lower)"
