"""An adversarial scheduler that keeps one witness's fame undecided.

The adversary controls delivery order only; every event is created by an
honest party reacting to a sync. Round by round it induces diagonal chains of
events (a *zig* running right to left over the labels, then one or two *zags*
running back) whose endpoints let it choose which previous-round witnesses
each party's next witness strongly sees. That choice keeps both vote counts
below the quorum in every normal round, so only a coin round can produce a
supermajority.

To pick deliveries the adversary keeps its own hashgraph holding every event
created so far. Replicas are graph-consistent with it, so rounds and votes
computed there are the ones every replica will compute.

Probability helpers at the bottom give the exact chance that a coin round
ends the attack.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from hashgraph.consensus import vote
from hashgraph.core import Fame, Hashgraph
from hashgraph.simnet import FairScheduler, SimConfig, Simulation, Stalled, fame_of

log = logging.getLogger(__name__)

MIN_PARTIES = 7


class PreconditionViolated(ValueError):
    pass


class AttackError(RuntimeError):
    """A delivery the construction relies on did not produce an event."""


def quorum(n: int) -> int:
    return 2 * n // 3 + 1


class Phase(enum.Enum):
    ZIG = "Zig"
    LOWER_ZAG = "Zag(lower)"
    UPPER_ZAG = "Zag(upper)"
    FIX_VOTES = "FixVotes"
    MAKE_WITNESSES = "MakeWitnesses"
    COIN_ROUND = "CoinRound"
    DECIDED = "Decided"


@dataclass(frozen=True)
class AttackLabeling:
    """``perm[k]`` is the party carrying label ``k + 1``."""

    perm: tuple[int, ...]
    cv: int
    v: bool

    def party(self, label: int) -> int:
        return self.perm[label - 1]

    def label(self, party: int) -> int:
        return self.perm.index(party) + 1


@dataclass
class AttackPhase:
    phase: Phase
    round: int
    labeling: AttackLabeling
    anchors: dict[str, bytes] = field(default_factory=dict)
    # party -> vote on the target cast by its witness of ``round``
    votes: dict[int, bool] = field(default_factory=dict)
    # invariant name -> description, for every invariant that failed
    violations: dict[str, str] = field(default_factory=dict)

    @property
    def yes(self) -> int:
        return sum(self.votes.values())

    @property
    def no(self) -> int:
        return len(self.votes) - self.yes


@dataclass
class DelayStats:
    target: bytes
    rounds_elapsed: int
    coin_rounds_elapsed: int
    decided_at: Optional[int]
    per_coin_round_yes_counts: list[int]
    # round of the coin round whose votes formed a supermajority
    supermajority_round: Optional[int] = None
    fame: Fame = Fame.UNDECIDED
    violations: list[str] = field(default_factory=list)

    @property
    def overhead(self) -> Optional[int]:
        if self.decided_at is None or self.supermajority_round is None:
            return None
        return self.decided_at - self.supermajority_round


class Adversary:
    """Delivery control plus an omniscient view of one simulation."""

    def __init__(self, sim: Simulation, target: bytes):
        if sim.n < MIN_PARTIES:
            raise PreconditionViolated(f"the delay attack needs n >= {MIN_PARTIES}, got n = {sim.n}")
        if sim.config.corrupted:
            raise PreconditionViolated("the delay attack runs with honest parties only")
        self.sim = sim
        self.n = sim.n
        self.q = quorum(sim.n)
        self.coin_period = sim.config.coin_period
        self.view = Hashgraph(sim.n)
        self._seen = 0
        self.refresh()
        if target not in self.view:
            raise PreconditionViolated("unknown target event")
        self.target = self.view.local(target)
        if not self.view.witness[self.target]:
            raise PreconditionViolated("target is not a witness")
        self.r = self.view.round[self.target]
        if not self.isolated(self.r):
            raise PreconditionViolated(f"round-{self.r} witnesses see each other")

    def refresh(self) -> None:
        created = self.sim.created
        while self._seen < len(created):
            self.view.insert(created[self._seen])
            self._seen += 1

    def receive(self, party: int, event: bytes) -> Optional[bytes]:
        """Let ``party`` receive ``event``; return the event it creates in response."""
        made = self.sim.deliver_event(event, party)
        self.refresh()
        return made[-1].id if made else None

    def receive_creating(self, party: int, event: bytes) -> bytes:
        made = self.receive(party, event)
        if made is None:
            raise AttackError(f"party {party} learned nothing from {event.hex()[:8]}")
        return made

    # -- queries on the omniscient view --------------------------------------

    def witnesses(self, r: int) -> list[int]:
        return self.view.witnesses.get(r, [])

    def witness_by(self, party: int, r: int) -> int:
        mine = [w for w in self.witnesses(r) if self.view.creator[w] == party]
        if len(mine) != 1:
            raise AttackError(f"party {party} has {len(mine)} round-{r} witnesses")
        return mine[0]

    def votes(self, r: int) -> dict[int, bool]:
        g = self.view
        return {g.creator[w]: vote(g, self.target, w, self.coin_period)[0] for w in self.witnesses(r)}

    def tallies(self, r: int) -> dict[int, int]:
        g = self.view
        return {g.creator[w]: vote(g, self.target, w, self.coin_period)[1] for w in self.witnesses(r)}

    def isolated(self, r: int) -> bool:
        ws = self.witnesses(r)
        return not any(self.view._sees(a, b) for a in ws for b in ws if a != b)

    def is_coin_round(self, r: int) -> bool:
        return (r - self.r) % self.coin_period == 0

    def id_of(self, local: int) -> bytes:
        return self.view.events[local].id

    # -- invariants ----------------------------------------------------------

    def check_round(self, phase: AttackPhase) -> None:
        g, r = self.view, phase.round
        ws = self.witnesses(r)
        creators = sorted(g.creator[w] for w in ws)
        if creators != list(range(self.n)):
            phase.violations["witnesses"] = f"round-{r} witness creators {creators}"
        if not self.isolated(r):
            phase.violations["isolation"] = f"round-{r} witnesses see each other"
        for name, eid in phase.anchors.items():
            i = g.local(eid)
            if g.witness[i] and g.round[i] == r:
                phase.violations[f"anchor-{name}"] = f"{name} is a round-{r} witness"
        if any(g.forks_by(c) for c in range(self.n)):
            phase.violations["honesty"] = "fork in the constructed graph"

    def target_undecided(self) -> bool:
        tid = self.id_of(self.target)
        return all(fame_of(p, tid) is Fame.UNDECIDED for p in self.sim.parties)


def base_labeling(n: int, first: int) -> AttackLabeling:
    rest = [p for p in range(n) if p != first]
    return AttackLabeling((first, *rest), n // 2, True)


def vote_labeling(votes: dict[int, bool]) -> AttackLabeling:
    yes = sorted(p for p, b in votes.items() if b)
    no = sorted(p for p, b in votes.items() if not b)
    if len(yes) >= len(no):
        return AttackLabeling(tuple(yes + no), len(yes), True)
    return AttackLabeling(tuple(no + yes), len(no), False)


def run_base_case(adv: Adversary) -> AttackPhase:
    """Build round ``r + 1`` so that exactly ``n // 2`` witnesses see the target."""
    n, q = adv.n, adv.q
    r = adv.r
    lab = base_labeling(n, adv.view.creator[adv.target])
    p = lab.party
    x = adv.id_of(adv.target)
    phase = AttackPhase(Phase.ZIG, r + 1, lab)

    zig_end = n - q + 1
    e = adv.id_of(adv.witness_by(p(n), r))
    for i in range(n - 1, zig_end - 1, -1):
        e = adv.receive_creating(p(i), e)

    phase.phase = Phase.LOWER_ZAG
    zag_start = zig_end
    for i in range(zag_start + 1, n - 1):
        e = adv.receive_creating(p(i), e)
    c = e
    b = adv.receive_creating(p(n - 1), c)
    a = adv.receive_creating(p(n), c)
    phase.anchors.update(A=a, B=b)

    phase.phase = Phase.FIX_VOTES
    adv.receive(p(n - 1), a)
    adv.receive(p(n), b)
    for i in range(n // 2 + 1, n - 1):
        adv.receive(p(i), a)
        adv.receive(p(i), b)
    phase.phase = Phase.MAKE_WITNESSES
    for i in range(2, zag_start):
        adv.receive(p(i), x)
        adv.receive(p(i), a)
    for i in range(zag_start, n // 2 + 1):
        adv.receive(p(i), x)
        adv.receive(p(i), a)
        adv.receive(p(i), b)
    adv.receive(p(1), a)

    phase.votes = adv.votes(r + 1)
    adv.check_round(phase)
    if phase.yes != n // 2:
        phase.violations["split"] = f"{phase.yes} yes votes, expected {n // 2}"
    return phase


def run_inductive_step(adv: Adversary, prev: AttackPhase) -> AttackPhase:
    """Build round ``prev.round + 1`` so every party's witness repeats its previous vote.

    The same construction runs in coin rounds, where it only keeps the new
    witnesses from seeing each other.
    """
    n, q = adv.n, adv.q
    rp = prev.round + 1
    if max(prev.yes, prev.no) >= q:
        raise PreconditionViolated(f"round {prev.round} already has a supermajority")
    if not adv.isolated(prev.round):
        raise PreconditionViolated(f"round-{prev.round} witnesses see each other")
    lab = vote_labeling(prev.votes)
    p = lab.party
    phase = AttackPhase(Phase.ZIG, rp, lab)
    created: dict[tuple[str, int], bytes] = {}

    e = adv.id_of(adv.witness_by(p(n), prev.round))
    for i in range(n - 1, 1, -1):
        e = created["zig", i] = adv.receive_creating(p(i), e)
    # the zig's forked end skips p2
    fork_end = adv.receive_creating(p(1), created["zig", 3])

    phase.phase = Phase.LOWER_ZAG
    lower_start = n - q + 1
    e = created["zig", lower_start]
    for i in range(lower_start + 1, n):
        made = created["lower", i] = adv.receive_creating(p(i), e)
        if i != q - 1:
            e = made
    e = created["lower", n - 2]
    adv.receive_creating(p(n), e)
    a = created["lower", n - 1]
    b = adv.receive_creating(p(n), created["lower", q - 1])

    phase.phase = Phase.UPPER_ZAG
    # the upper zag grows from the zig's forked end, mirroring how the lower
    # zag grows from the zig
    e = fork_end
    c = None
    for i in range(2, q):
        made = adv.receive_creating(p(i), e)
        if i != q - 1:
            e = made
        else:
            c = made
    d = adv.receive_creating(p(q), e)
    c_anchor = adv.receive_creating(p(1), c)
    phase.anchors.update(A=a, B=b, C=c_anchor, D=d)

    phase.phase = Phase.MAKE_WITNESSES
    creator = adv.sim.event_creator
    for i in range(lab.cv + 1, n + 1):
        for anchor in (a, b):
            if creator[anchor] != p(i):
                adv.receive(p(i), anchor)
    for i in range(1, lab.cv + 1):
        for anchor in (c_anchor, d):
            if creator[anchor] != p(i):
                adv.receive(p(i), anchor)

    phase.votes = adv.votes(rp)
    adv.check_round(phase)
    if adv.is_coin_round(rp):
        phase.phase = Phase.COIN_ROUND
    elif phase.votes != prev.votes:
        changed = sorted(k for k in phase.votes if phase.votes[k] != prev.votes.get(k))
        phase.violations["preservation"] = f"votes changed for parties {changed}"
    return phase


def run_delay_attack(sim: Simulation, target: bytes, max_rounds: int = 200,
                     handoff_steps: int = 20_000) -> DelayStats:
    """Delay the fame decision on ``target`` until a coin round forms a supermajority.

    Once one does, the fair scheduler takes over and the round of the first
    deciding witness on any replica is reported as ``decided_at``.
    """
    adv = Adversary(sim, target)
    n, q = adv.n, adv.q
    stats = DelayStats(target, 0, 0, None, [])
    phase = run_base_case(adv)
    _note(adv, phase, stats)
    while phase.round - adv.r < max_rounds:
        if max(phase.yes, phase.no) >= q:
            if adv.is_coin_round(phase.round):
                stats.supermajority_round = phase.round
            break
        phase = run_inductive_step(adv, phase)
        _note(adv, phase, stats)
        if phase.phase is Phase.COIN_ROUND:
            stats.coin_rounds_elapsed += 1
            stats.per_coin_round_yes_counts.append(phase.yes)
        elif not adv.target_undecided():
            stats.violations.append(f"target decided during normal round {phase.round}")
            break
    last = phase.round
    if max(phase.yes, phase.no) >= q:
        _hand_off(adv, stats, handoff_steps)
    stats.rounds_elapsed = (stats.decided_at if stats.decided_at is not None else last) - adv.r
    return stats


def _note(adv: Adversary, phase: AttackPhase, stats: DelayStats) -> None:
    adv.sim.record("VoteTally", adv.view.creator[adv.target], event=adv.id_of(adv.target),
                   round=phase.round, yes=phase.yes, no=phase.no,
                   coin=adv.is_coin_round(phase.round))
    stats.violations.extend(f"round {phase.round}: {v}" for v in phase.violations.values())


def _hand_off(adv: Adversary, stats: DelayStats, steps: int) -> None:
    sim = adv.sim
    fair = FairScheduler(sim.config.seed)
    tid = adv.id_of(adv.target)
    limit = sim.step_count + steps
    while True:
        decided = [p for p in sim.parties if fame_of(p, tid) is not Fame.UNDECIDED]
        if decided:
            break
        if sim.step_count >= limit:
            raise Stalled(f"target undecided {steps} steps after the handoff")
        sim.step(fair)
    rounds = []
    for party in decided:
        g = party.graph
        rounds.append(g.round[g.decided_by[g.local(tid)]])
        stats.fame = g.fame[g.local(tid)]
    stats.decided_at = min(rounds)


def attack_simulation(n: int, seed: int, coin_period: int = 10, record_trace: bool = True) -> Simulation:
    return Simulation(SimConfig(n=n, coin_period=coin_period, seed=seed, steps=0), record_trace=record_trace)


def genesis_of(sim: Simulation, party: int) -> bytes:
    g = sim.parties[party].graph
    return g.events[g.by_creator[party][0]].id


# -- coin-round probabilities ------------------------------------------------

def exact_supermajority_prob(n: int) -> Fraction:
    """Chance that ``n`` fair coins give more than 2n/3 equal faces."""
    if n < 1:
        raise ValueError("n must be positive")
    return Fraction(2 * sum(math.comb(n, k) for k in range(quorum(n), n + 1)), 2 ** n)


def one_sided_tail(n: int) -> Fraction:
    """Pr[X >= ceil(2n/3)] for X ~ Binomial(n, 1/2)."""
    return Fraction(sum(math.comb(n, k) for k in range(-(-2 * n // 3), n + 1)), 2 ** n)


def hoeffding_bound(n: int) -> float:
    if n < 1:
        raise ValueError("n must be positive")
    return math.exp(-n / 18)


def expected_coin_rounds(n: int) -> float:
    return 1 / float(exact_supermajority_prob(n))
