"""Deterministic discrete-event simulation of honest and forking parties.

Every run is a pure function of ``(SimConfig, Scheduler)``. The network is a
bag of pending sync deliveries; each step the scheduler either delivers one of
them or lets a party start a new sync. A sync is a snapshot of everything the
sender held when it started the sync, so delayed deliveries carry stale views
exactly as an asynchronous network would.
"""

from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Union

from hashgraph.consensus import (
    DEFAULT_COIN_PERIOD,
    CommitLog,
    check_coin_period,
    commit,
    decide_fame,
    find_order,
)
from hashgraph.core import (
    BadSignature,
    Event,
    Fame,
    Hashgraph,
    MalformedEvent,
    MissingParents,
    _bits,
    encode,
    make_event,
)
from hashgraph.crypto import Signer

log = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 100_000


class Stalled(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n: int
    corrupted: frozenset[int] = frozenset()
    coin_period: int = DEFAULT_COIN_PERIOD
    seed: int = 0
    max_steps: int = DEFAULT_MAX_STEPS
    steps: int = 1000
    tx_injection: tuple[tuple[int, int, bytes], ...] = ()
    fork_probability: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "corrupted", frozenset(self.corrupted))
        object.__setattr__(self, "tx_injection", tuple(sorted(
            (int(s), int(p), bytes(tx)) for s, p, tx in self.tx_injection)))
        if self.n < 2:
            raise ConfigError("need at least two parties")
        if 3 * len(self.corrupted) >= self.n:
            raise ConfigError(f"{len(self.corrupted)} corrupted of {self.n} violates 3t < n")
        if any(not 0 <= p < self.n for p in self.corrupted):
            raise ConfigError("corrupted party out of range")
        if any(not 0 <= p < self.n for _, p, _ in self.tx_injection):
            raise ConfigError("transaction injected at unknown party")
        check_coin_period(self.coin_period)

    @property
    def honest(self) -> list[int]:
        return [p for p in range(self.n) if p not in self.corrupted]


def default_transactions(n: int, seed: int, count: int = 20, span: int = 200,
                         corrupted: Iterable[int] = ()) -> tuple[tuple[int, int, bytes], ...]:
    """``count`` honest transactions spread over the first ``span`` steps."""
    rng = random.Random(f"tx:{seed}")
    honest = [p for p in range(n) if p not in set(corrupted)]
    out = []
    for k in range(count):
        p = rng.choice(honest)
        out.append((rng.randrange(1, max(2, span)), p, f"tx-{seed}-{k}-p{p}".encode()))
    return tuple(out)


class SyncMessage:
    """Snapshot of a sender's events: the ``mask`` bits index the sender's graph."""

    __slots__ = ("sender", "head", "mask", "_graph")

    def __init__(self, sender: int, head: bytes, mask: int, graph: Hashgraph):
        self.sender = sender
        self.head = head
        self.mask = mask
        self._graph = graph

    @property
    def events(self) -> list[Event]:
        events = self._graph.events
        return [events[i] for i in _bits(self.mask)]


class PendingDelivery(NamedTuple):
    id: int
    message: SyncMessage
    target: int


class Deliver(NamedTuple):
    delivery: int


class Sync(NamedTuple):
    sender: int
    target: int


Action = Union[Deliver, Sync]


class Party:
    """An honest participant."""

    honest = True

    def __init__(self, pid: int, n: int, signer: Signer, coin_period: int, clock_offset: int):
        self.id = pid
        self.n = n
        self.signer = signer
        self.coin_period = coin_period
        self.clock_offset = clock_offset
        self.graph = Hashgraph(n, signer, owner=pid)
        self.buffer: dict[bytes, Event] = {}
        self.log = CommitLog()
        self.pending_tx: deque[bytes] = deque()
        # per sender: mask of that sender's local indices already processed
        self.processed: dict[int, int] = {}

    @property
    def head(self) -> Event:
        return self.graph.events[self.graph.by_creator[self.id][-1]]

    def create_genesis(self, now: int) -> Event:
        event = make_event(self.signer, self.id, now + self.clock_offset, self._take_tx())
        self.graph.insert(event)
        return event

    def _take_tx(self) -> tuple[bytes, ...]:
        txs = tuple(self.pending_tx)
        self.pending_tx.clear()
        return txs

    def initiate_sync(self, target: int) -> SyncMessage:
        g = self.graph
        return SyncMessage(self.id, self.head.id, (1 << len(g)) - 1, g)

    def absorb(self, message: SyncMessage, sim: Optional[Simulation] = None) -> int:
        """Insert every deliverable event of ``message``; return how many were new."""
        seen = self.processed.get(message.sender, 0)
        fresh = message.mask & ~seen
        if not fresh:
            return 0
        self.processed[message.sender] = seen | message.mask
        g = self.graph
        inserted = 0
        events = message._graph.events
        for i in _bits(fresh):
            event = events[i]
            if event.id in g.index or event.id in self.buffer:
                continue
            try:
                g.insert(event)
                inserted += 1
            except MissingParents:
                self.buffer[event.id] = event
                if sim is not None:
                    sim.record("Buffered", self.id, event=event.id)
            except (BadSignature, MalformedEvent) as exc:
                log.info("party %d dropped event %s: %s", self.id, event.short(), exc)
        if inserted and self.buffer:
            inserted += self._drain_buffer()
        return inserted

    def _drain_buffer(self) -> int:
        inserted = 0
        progress = True
        while progress and self.buffer:
            progress = False
            for eid, event in list(self.buffer.items()):
                if not self.graph.missing_parents(event):
                    del self.buffer[eid]
                    try:
                        self.graph.insert(event)
                        inserted += 1
                        progress = True
                    except (BadSignature, MalformedEvent):
                        pass
        return inserted

    def on_receive_sync(self, message: SyncMessage, now: int, sim: Optional[Simulation] = None) -> list[Event]:
        """Absorb a sync and, if it taught us anything, create one event pointing at its head."""
        if not self.absorb(message, sim):
            return []
        if message.head not in self.graph.index:
            log.info("party %d: sync head %s not insertable", self.id, message.head.hex()[:8])
            return []
        event = make_event(self.signer, self.id, now + self.clock_offset, self._take_tx(),
                           self.head.id, message.head)
        self.graph.insert(event)
        if sim is not None:
            sim.record_created(self, event)
        self.process(sim)
        return [event]

    def process(self, sim: Optional[Simulation] = None) -> None:
        g = self.graph
        for eid, fame in decide_fame(g, self.coin_period):
            if sim is not None:
                sim.record("FameDecided", self.id, event=eid, round=g.round[g.index[eid]], fame=fame.value)
        entries = find_order(g)
        if entries:
            before = len(self.log.committed_tx)
            commit(self.log, entries, g)
            if sim is not None:
                for e in entries:
                    sim.record("Committed", self.id, event=e.event, round=g.round[g.index[e.event]],
                               roundReceived=e.round_received, consensusTimestamp=e.consensus_timestamp)
                sim.on_commit(self, before)


class ForkingParty(Party):
    """A corrupted participant that forks: it builds on several branches and
    shows different branches to different parties."""

    honest = False

    def __init__(self, pid, n, signer, coin_period, clock_offset, rng: random.Random, fork_probability: float):
        super().__init__(pid, n, signer, coin_period, clock_offset)
        self.rng = rng
        self.fork_probability = fork_probability
        self.tips: list[int] = []
        self.forks_made = 0

    def create_genesis(self, now: int) -> Event:
        event = super().create_genesis(now)
        self.tips = [self.graph.index[event.id]]
        return event

    @property
    def head(self) -> Event:
        return self.graph.events[self.tips[0]]

    def initiate_sync(self, target: int) -> SyncMessage:
        g = self.graph
        tip = self.rng.choice(self.tips)
        return SyncMessage(self.id, g.events[tip].id, g.anc[tip], g)

    def byzantine_fork(self, other_parent: bytes, now: int, sim: Optional[Simulation] = None) -> tuple[Event, Event]:
        """Two signed events sharing a self-parent and differing in their payload."""
        g = self.graph
        base = self.tips[self.rng.randrange(len(self.tips))]
        sp = g.events[base].id
        tag = f"fork-{self.id}-{self.forks_made}"
        self.forks_made += 1
        ts = now + self.clock_offset
        z = make_event(self.signer, self.id, ts, (f"{tag}-a".encode(),), sp, other_parent)
        z2 = make_event(self.signer, self.id, ts + 1, (f"{tag}-b".encode(),), sp, other_parent)
        for event in (z, z2):
            g.insert(event)
            if sim is not None:
                sim.record_created(self, event)
        self.tips.remove(base)
        self.tips.extend([g.index[z.id], g.index[z2.id]])
        # bound the number of live branches
        while len(self.tips) > 3:
            self.tips.pop(0)
        return z, z2

    def on_receive_sync(self, message, now, sim=None):
        if not self.absorb(message, sim) or message.head not in self.graph.index:
            return []
        if self.rng.random() < self.fork_probability:
            return list(self.byzantine_fork(message.head, now, sim))
        g = self.graph
        k = self.rng.randrange(len(self.tips))
        base = self.tips[k]
        event = make_event(self.signer, self.id, now + self.clock_offset, self._take_tx(),
                           g.events[base].id, message.head)
        g.insert(event)
        self.tips[k] = g.index[event.id]
        if sim is not None:
            sim.record_created(self, event)
        return [event]

    def process(self, sim=None):
        pass


class Simulation:
    def __init__(self, config: SimConfig, record_trace: bool = True, multicast: bool = False,
                 check_every_step: bool = True):
        self.config = config
        n = config.n
        self.n = n
        self.signer = Signer(n, config.seed)
        self.rng = random.Random(f"sim:{config.seed}")
        self.step_count = 0
        self.record_trace = record_trace
        self.multicast = multicast
        self.check_every_step = check_every_step
        self.trace: list[dict] = []
        self.pending: dict[int, PendingDelivery] = {}
        self._by_key: dict[tuple[int, bytes, int], int] = {}
        self.event_creator: dict[bytes, int] = {}
        self._next_delivery = 0
        self.parties: list[Party] = []
        for p in range(n):
            offset = self.rng.randrange(0, 50)
            if p in config.corrupted:
                party = ForkingParty(p, n, self.signer, config.coin_period, offset,
                                     random.Random(f"byz:{config.seed}:{p}"), config.fork_probability)
            else:
                party = Party(p, n, self.signer, config.coin_period, offset)
            self.parties.append(party)
        self._tx_queue = deque(config.tx_injection)
        self.honest_tx = {tx for _, p, tx in config.tx_injection if p not in config.corrupted}
        self._canonical: list[bytes] = []
        self._canonical_src: list[int] = []
        self.violation: Optional[Violation] = None
        self._committed_honest = [0] * n
        self.created: list[Event] = []
        self.record("Config", None, n=n, t=len(config.corrupted), corrupted=sorted(config.corrupted),
                    coinPeriod=config.coin_period, seed=config.seed)
        for party in self.parties:
            event = party.create_genesis(0)
            self.record_created(party, event)
        for party in self.parties:
            self.multicast_from(party)

    # -- bookkeeping -------------------------------------------------------

    @property
    def honest_parties(self) -> list[Party]:
        return [p for p in self.parties if p.honest]

    def record(self, kind: str, party: Optional[int], **fields) -> None:
        if not self.record_trace:
            return
        rec = {"step": self.step_count, "kind": kind, "party": party, "event": None,
               "round": None, "fame": None, "roundReceived": None}
        for k, v in fields.items():
            rec[k] = v.hex() if isinstance(v, bytes) else v
        self.trace.append(rec)

    def record_created(self, party: Party, event: Event) -> None:
        self.created.append(event)
        self.event_creator[event.id] = event.creator
        g = party.graph
        self.record("Created", party.id, event=event.id, round=g.round[g.index[event.id]],
                    witness=g.witness[g.index[event.id]], payload=encode(event))
        if self.multicast:
            self.multicast_from(party)

    def multicast_from(self, party: Party) -> None:
        for target in range(self.n):
            if target != party.id:
                self.enqueue(party.initiate_sync(target), target)

    def enqueue(self, message: SyncMessage, target: int) -> int:
        did = self._next_delivery
        self._next_delivery += 1
        self.pending[did] = PendingDelivery(did, message, target)
        self._by_key.setdefault((message.sender, message.head, target), did)
        return did

    def on_commit(self, party: Party, start: int) -> None:
        txs = party.log.committed_tx
        for pos in range(start, len(txs)):
            tx = txs[pos]
            if tx in self.honest_tx:
                self._committed_honest[party.id] += 1
            if pos < len(self._canonical):
                if self._canonical[pos] != tx and self.violation is None:
                    self.violation = Violation(self._canonical_src[pos], party.id, pos)
            else:
                self._canonical.append(tx)
                self._canonical_src.append(party.id)

    def all_committed(self) -> bool:
        total = len(self.honest_tx)
        return all(self._committed_honest[p.id] >= total for p in self.honest_parties)

    # -- stepping ----------------------------------------------------------

    def inject_due(self) -> None:
        while self._tx_queue and self._tx_queue[0][0] <= self.step_count:
            _, p, tx = self._tx_queue.popleft()
            self.parties[p].pending_tx.append(tx)

    def apply(self, action: Action) -> list[Event]:
        self.step_count += 1
        self.inject_due()
        if isinstance(action, Deliver):
            pd = self.pending.pop(action.delivery)
            key = (pd.message.sender, pd.message.head, pd.target)
            if self._by_key.get(key) == pd.id:
                del self._by_key[key]
            self.record("Delivered", pd.target, event=pd.message.head, sender=pd.message.sender, delivery=pd.id)
            created = self.parties[pd.target].on_receive_sync(pd.message, self.step_count, self)
        else:
            sender = self.parties[action.sender]
            self.enqueue(sender.initiate_sync(action.target), action.target)
            created = []
        if self.check_every_step and self.violation is not None:
            raise ConsistencyViolation(self.violation)
        return created

    def step(self, scheduler: Scheduler) -> list[dict]:
        before = len(self.trace)
        self.apply(scheduler.choose(self))
        return self.trace[before:]

    def deliver(self, sender: int, head: bytes, target: int) -> list[Event]:
        """Deliver the pending sync ``sender`` started toward ``target`` when its head was ``head``."""
        did = self._by_key.get((sender, head, target))
        if did is None:
            raise KeyError(f"no pending sync {sender}->{target} with head {head.hex()[:8]}")
        return self.apply(Deliver(did))

    def deliver_event(self, event_id: bytes, target: int) -> list[Event]:
        """Deliver to ``target`` the sync the creator of ``event_id`` sent right after creating it.

        If that sync is not pending it is rebuilt: a party's graph only grows,
        so its state just after creating the event is a prefix of its indices.
        """
        creator = self.event_creator[event_id]
        if (creator, event_id, target) not in self._by_key:
            g = self.parties[creator].graph
            self.enqueue(SyncMessage(creator, event_id, (1 << (g.index[event_id] + 1)) - 1, g), target)
        return self.deliver(creator, event_id, target)

    def run(self, scheduler: Scheduler, drain: bool = True) -> SimResult:
        cfg = self.config
        while self.step_count < cfg.steps:
            self.step(scheduler)
        if drain:
            fair = FairScheduler(cfg.seed)
            while self._tx_queue or not self.all_committed():
                if self.step_count >= cfg.max_steps:
                    raise Stalled(f"uncommitted transactions after {self.step_count} steps")
                self.step(fair)
            self.drain()
        return self.result()

    def drain(self) -> None:
        """Deliver every outstanding sync, oldest first."""
        while self.pending:
            if self.step_count >= self.config.max_steps:
                raise Stalled(f"{len(self.pending)} deliveries outstanding after {self.step_count} steps")
            self.apply(Deliver(next(iter(self.pending))))

    def result(self) -> SimResult:
        cfg = self.config
        honest = self.honest_parties
        return SimResult(
            seed=cfg.seed, n=cfg.n, t=len(cfg.corrupted), steps=self.step_count,
            committed_tx=min((len(p.log.committed_tx) for p in honest), default=0),
            max_round=max(p.graph.max_round for p in honest),
            all_committed=self.all_committed(),
            violation=self.violation or check_prefix_consistency(honest),
        )


class ConsistencyViolation(RuntimeError):
    def __init__(self, violation: Violation):
        super().__init__(f"logs of parties {violation.i} and {violation.j} diverge at index {violation.index}")
        self.violation = violation


class Violation(NamedTuple):
    i: int
    j: int
    index: int


@dataclass
class SimResult:
    seed: int
    n: int
    t: int
    steps: int
    committed_tx: int
    max_round: int
    all_committed: bool
    violation: Optional[Violation] = None

    @property
    def ok(self) -> bool:
        return self.violation is None


def check_prefix_consistency(parties: Iterable) -> Optional[Violation]:
    """First divergence between any two committed-transaction logs, or None.

    Accepts parties (anything with ``.log.committed_tx`` and ``.id``) or plain lists.
    """
    logs = []
    for k, p in enumerate(parties):
        if isinstance(p, (list, tuple)):
            logs.append((k, p))
        else:
            logs.append((p.id, p.log.committed_tx))
    for a in range(len(logs)):
        for b in range(a + 1, len(logs)):
            (i, la), (j, lb) = logs[a], logs[b]
            for pos in range(min(len(la), len(lb))):
                if la[pos] != lb[pos]:
                    return Violation(i, j, pos)
    return None


# -- schedulers --------------------------------------------------------------

class Scheduler:
    def choose(self, sim: Simulation) -> Action:
        raise NotImplementedError


class FairScheduler(Scheduler):
    """Delivers the oldest pending sync half of the time; otherwise a random
    party syncs with a random peer. Every sync is delivered within a bounded
    number of steps in expectation."""

    def __init__(self, seed: int, deliver_probability: float = 0.5):
        self.rng = random.Random(f"fair:{seed}")
        self.deliver_probability = deliver_probability

    def choose(self, sim):
        if sim.pending and self.rng.random() < self.deliver_probability:
            return Deliver(next(iter(sim.pending)))
        return random_sync(self.rng, sim.n)


class RandomScheduler(Scheduler):
    """Adversarially random: delivers an arbitrary pending sync, so messages
    are reordered and delayed without bound until the final drain."""

    def __init__(self, seed: int, deliver_probability: float = 0.5):
        self.rng = random.Random(f"random:{seed}")
        self.deliver_probability = deliver_probability

    def choose(self, sim):
        if sim.pending and self.rng.random() < self.deliver_probability:
            keys = list(sim.pending)
            return Deliver(keys[self.rng.randrange(len(keys))])
        return random_sync(self.rng, sim.n)


def random_sync(rng: random.Random, n: int) -> Sync:
    sender = rng.randrange(n)
    target = rng.randrange(n - 1)
    if target >= sender:
        target += 1
    return Sync(sender, target)


def fame_of(party: Party, event_id: bytes) -> Fame:
    g = party.graph
    i = g.index.get(event_id)
    if i is None or not g.witness[i]:
        return Fame.UNDECIDED
    return g.fame[i]
