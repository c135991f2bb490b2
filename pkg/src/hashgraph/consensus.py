"""divideRounds, decideFame and findOrder over one replica, plus the commit log.

All three are deterministic functions of the replica's ancestry, so their
intermediate results (strongly-seen witness sets, votes) are memoized on the
graph and never invalidated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from hashgraph.core import NONE, Digest, Fame, Hashgraph
from hashgraph.crypto import middle_bit, xor_bytes

log = logging.getLogger(__name__)

DEFAULT_COIN_PERIOD = 10


class OrderViolation(Exception):
    pass


class CommitEntry(NamedTuple):
    event: Digest
    round_received: int
    consensus_timestamp: int
    whitened: bytes

    @property
    def key(self) -> tuple[int, int, bytes]:
        return self.round_received, self.consensus_timestamp, self.whitened


def check_coin_period(c: int) -> int:
    if c < 2:
        raise ValueError("coin period must be at least 2")
    return c


# -- divideRounds ------------------------------------------------------------

def assign_round(g: Hashgraph, i: int) -> tuple[int, bool]:
    """Round and witness flag for a freshly appended event ``i``.

    Called by :meth:`Hashgraph.insert` before the round lists are extended, so
    only the parents' rounds are read.
    """
    sp, op = g.self_parent[i], g.other_parent[i]
    if sp == NONE:
        return 1, True
    r = max(g.round[sp], g.round[op])
    seen = g.strongly_seen(i, g.witnesses.get(r, ()))
    promoted = len({g.creator[w] for w in seen}) >= g.supermajority
    if promoted:
        r += 1
        g.prev_strongly_seen[i] = seen
    return r, r > g.round[sp]


def strongly_seen_previous(g: Hashgraph, y: int) -> list[int]:
    """Witnesses of round ``round(y) - 1`` that ``y`` strongly sees."""
    seen = g.prev_strongly_seen.get(y)
    if seen is None:
        seen = g.strongly_seen(y, g.witnesses.get(g.round[y] - 1, ()))
        g.prev_strongly_seen[y] = seen
    return seen


# -- decideFame --------------------------------------------------------------

def vote(g: Hashgraph, x: int, y: int, coin_period: int) -> tuple[bool, int]:
    """Witness ``y``'s vote on the fame of witness ``x`` and its agreeing tally.

    The tally is the number of strongly-seen previous-round witnesses that
    voted with the majority; it is 0 in the first election round.
    """
    memo = g.votes.get((x, y))
    if memo is not None:
        return memo
    d = g.round[y] - g.round[x]
    if d == 1:
        result = (g._sees(y, x), 0)
    else:
        seen = strongly_seen_previous(g, y)
        yes = 0
        for w in seen:
            if vote(g, x, w, coin_period)[0]:
                yes += 1
        no = len(seen) - yes
        majority = yes >= no
        tally = yes if majority else no
        if d % coin_period or tally >= g.supermajority:
            result = (majority, tally)
        else:
            result = (bool(middle_bit(g.events[y].signature)), tally)
    g.votes[(x, y)] = result
    return result


def decide_fame(g: Hashgraph, coin_period: int = DEFAULT_COIN_PERIOD) -> list[tuple[Digest, Fame]]:
    """Run elections for every undecided witness; return the new decisions.

    Each (candidate, voter) pair is examined once: the vote is a function of
    the voter's ancestry, so a voter that did not decide the election earlier
    never will.
    """
    decided = []
    log_ = g.witness_log
    for x in sorted(g.undecided, key=lambda w: (g.round[w], g.creator[w], g.events[w].id)):
        rx = g.round[x]
        pos = g.fame_cursor.get(x, 0)
        while pos < len(log_):
            y = log_[pos]
            pos += 1
            d = g.round[y] - rx
            if d < 2 or not d % coin_period:
                continue
            v, tally = vote(g, x, y, coin_period)
            if tally >= g.supermajority:
                fame = Fame.FAMOUS if v else Fame.NOT_FAMOUS
                g.set_fame(x, fame)
                g.decided_by[x] = y
                decided.append((g.events[x].id, fame))
                break
        g.fame_cursor[x] = pos
    return decided


# -- findOrder ---------------------------------------------------------------

def unique_famous(g: Hashgraph, r: int) -> list[int]:
    famous = [w for w in g.witnesses.get(r, ()) if g.fame[w] is Fame.FAMOUS]
    counts: dict[int, int] = {}
    for w in famous:
        counts[g.creator[w]] = counts.get(g.creator[w], 0) + 1
    return [w for w in famous if counts[g.creator[w]] == 1]


def unique_famous_witnesses(g: Hashgraph, r: int) -> list[Digest]:
    return [g.events[w].id for w in unique_famous(g, r)]


def decided_through(g: Hashgraph) -> int:
    """Largest round ``r`` such that every witness in rounds ``<= r`` has its fame decided."""
    if g.undecided_rounds:
        return min(g.undecided_rounds) - 1
    return g.max_round


def lower_median(values: list[int]) -> int:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def find_order(g: Hashgraph) -> list[CommitEntry]:
    """Assign roundReceived, consensus timestamp and whitened signature where decidable.

    Returns the newly ordered events sorted by (roundReceived, timestamp, whitened).
    An event is only retried from the first round not yet ruled out: once all
    fame in a round is decided its unique famous witnesses are fixed, and so is
    whether the event is their common ancestor.
    """
    top = decided_through(g)
    buckets = g.unordered
    ready = sorted(r for r in buckets if r <= top)
    if not ready:
        return []
    ufw_cache: dict[int, list[int]] = {}
    entries = []
    anc = g.anc
    retry = []
    for start in ready:
        for x in buckets.pop(start):
            for r in range(start, top + 1):
                ufw = ufw_cache.get(r)
                if ufw is None:
                    ufw = ufw_cache[r] = unique_famous(g, r)
                    if not ufw and g.witnesses.get(r):
                        log.debug("round %d has no unique famous witness", r)
                if ufw and all((anc[w] >> x) & 1 for w in ufw):
                    entries.append(_order(g, x, r, ufw))
                    break
            else:
                retry.append(x)
    if retry:
        buckets.setdefault(top + 1, []).extend(retry)
    entries.sort(key=lambda e: e.key)
    return entries


def _order(g: Hashgraph, x: int, r: int, ufw: list[int]) -> CommitEntry:
    stamps = []
    whitened = g.events[x].signature
    for w in ufw:
        z = g.earliest_self_descendant_of(w, x)
        stamps.append(g.events[z].timestamp)
        whitened = xor_bytes(whitened, g.events[w].signature)
    ts = lower_median(stamps)
    g.round_received[x] = r
    g.consensus_ts[x] = ts
    g.whitened[x] = whitened
    return CommitEntry(g.events[x].id, r, ts, whitened)


# -- commit log --------------------------------------------------------------

@dataclass
class CommitLog:
    entries: list[CommitEntry] = field(default_factory=list)
    committed_tx: list[bytes] = field(default_factory=list)

    @property
    def last_key(self) -> Optional[tuple[int, int, bytes]]:
        return self.entries[-1].key if self.entries else None

    def __len__(self) -> int:
        return len(self.entries)


def commit(log_: CommitLog, entries: list[CommitEntry], graph: Optional[Hashgraph] = None) -> CommitLog:
    """Append one findOrder batch; transactions are taken from ``graph`` when given."""
    last = log_.last_key
    for entry in entries:
        if last is not None and entry.key <= last:
            raise OrderViolation(f"entry {entry.event.hex()[:8]} key {entry.key[:2]} not after {last[:2]}")
        last = entry.key
    for entry in entries:
        log_.entries.append(entry)
        if graph is not None:
            log_.committed_tx.extend(graph.event(entry.event).transactions)
    return log_


def run_consensus(g: Hashgraph, coin_period: int = DEFAULT_COIN_PERIOD):
    """decideFame then findOrder; rounds are already assigned on insertion."""
    fame = decide_fame(g, coin_period)
    return fame, find_order(g)
