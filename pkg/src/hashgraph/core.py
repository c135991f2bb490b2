"""Events and the hashgraph DAG.

Each replica stores events in insertion order under dense local indices.
Per event it keeps:

* ``anc``: ancestor bitmask over local indices (bit ``i`` set for the event itself),
* ``last``: for every creator, the local index of the newest event by that
  creator among the ancestors, ``NONE`` if there is none, or ``FORK`` when the
  ancestors contain two incomparable events by that creator,
* ``clean``: for every creator, the newest self-ancestor (possibly the event
  itself) that does not observe a fork by that creator,
* ``jumps``: binary-lifting table over self-parent links.

``last`` makes fork observation an O(1) lookup and ``clean`` turns
strongly-seeing into one test per creator (see :mod:`hashgraph.kernels`).
"""

from __future__ import annotations

import enum
import struct
from bisect import insort
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from hashgraph import kernels
from hashgraph.crypto import DIGEST_SIZE, SIGNATURE_SIZE, Digest, Signer, hash_event

ENCODING_VERSION = 1
NONE = -1
FORK = -2

_HEADER = struct.Struct(">BIqI")
_U32 = struct.Struct(">I")


class HashgraphError(Exception):
    pass


class MissingParents(HashgraphError):
    def __init__(self, event_id: Digest, missing: list[Digest]):
        super().__init__(f"event {event_id.hex()[:12]} missing {len(missing)} parent(s)")
        self.event_id = event_id
        self.missing = missing


class BadSignature(HashgraphError):
    pass


class MalformedEvent(HashgraphError):
    pass


class UnknownEvent(HashgraphError, KeyError):
    pass


class InsertResult(enum.Enum):
    INSERTED = "inserted"
    DUPLICATE = "duplicate"


class Fame(enum.Enum):
    UNDECIDED = "undecided"
    FAMOUS = "famous"
    NOT_FAMOUS = "not_famous"


class ForkPair(NamedTuple):
    left: Digest
    right: Digest


@dataclass(frozen=True)
class Event:
    creator: int
    timestamp: int
    transactions: tuple[bytes, ...] = ()
    self_parent: Optional[Digest] = None
    other_parent: Optional[Digest] = None
    signature: bytes = b""
    id: Digest = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.transactions, tuple):
            object.__setattr__(self, "transactions", tuple(self.transactions))
        object.__setattr__(self, "id", hash_event(encode(self)))

    @property
    def is_genesis(self) -> bool:
        return self.self_parent is None and self.other_parent is None

    def signing_bytes(self) -> bytes:
        return encode(self, with_signature=False)

    def short(self) -> str:
        return self.id.hex()[:8]


def encode(event: Event, with_signature: bool = True) -> bytes:
    parts = [_HEADER.pack(ENCODING_VERSION, event.creator, event.timestamp, len(event.transactions))]
    for tx in event.transactions:
        parts.append(_U32.pack(len(tx)))
        parts.append(tx)
    flags = (event.self_parent is not None) | ((event.other_parent is not None) << 1)
    parts.append(bytes([flags]))
    if event.self_parent is not None:
        parts.append(event.self_parent)
    if event.other_parent is not None:
        parts.append(event.other_parent)
    if with_signature:
        parts.append(event.signature)
    return b"".join(parts)


def decode(data: bytes) -> Event:
    try:
        version, creator, timestamp, count = _HEADER.unpack_from(data, 0)
        if version != ENCODING_VERSION:
            raise MalformedEvent(f"unknown encoding version {version}")
        pos = _HEADER.size
        txs = []
        for _ in range(count):
            (length,) = _U32.unpack_from(data, pos)
            pos += 4
            txs.append(bytes(data[pos:pos + length]))
            pos += length
        flags = data[pos]
        pos += 1
        parents = []
        for bit in (1, 2):
            if flags & bit:
                parents.append(bytes(data[pos:pos + DIGEST_SIZE]))
                pos += DIGEST_SIZE
            else:
                parents.append(None)
        signature = bytes(data[pos:pos + SIGNATURE_SIZE])
        if pos + SIGNATURE_SIZE != len(data) or len(signature) != SIGNATURE_SIZE:
            raise MalformedEvent("trailing or truncated bytes")
    except (struct.error, IndexError) as exc:
        raise MalformedEvent(str(exc)) from exc
    return Event(creator, timestamp, tuple(txs), parents[0], parents[1], signature)


def make_event(signer: Signer, creator: int, timestamp: int, transactions: Iterable[bytes] = (),
               self_parent: Optional[Digest] = None, other_parent: Optional[Digest] = None) -> Event:
    unsigned = Event(creator, timestamp, tuple(transactions), self_parent, other_parent)
    return Event(creator, timestamp, unsigned.transactions, self_parent, other_parent,
                 signer.sign(creator, unsigned.signing_bytes()))


class Hashgraph:
    """One party's append-only view of the gossip DAG.

    Rounds and witness flags are assigned on insertion; fame, roundReceived and
    consensus timestamps are written once by :mod:`hashgraph.consensus`.
    """

    def __init__(self, n: int, signer: Optional[Signer] = None, owner: Optional[int] = None):
        if n < 2:
            raise ValueError("need at least two parties")
        self.n = n
        self.owner = owner
        self.signer = signer
        self.supermajority = 2 * n // 3 + 1
        self.events: list[Event] = []
        self.index: dict[Digest, int] = {}
        self.creator: list[int] = []
        self.self_parent: list[int] = []
        self.other_parent: list[int] = []
        self.seq: list[int] = []
        self.anc: list[int] = []
        self.last: list[tuple[int, ...]] = []
        self.jumps: list[tuple[int, ...]] = []
        self.clean: list[tuple[int, ...]] = []
        self.by_creator: list[list[int]] = [[] for _ in range(n)]
        self.round: list[int] = []
        self.witness: list[bool] = []
        self.witnesses: dict[int, list[int]] = {}
        self.fame: dict[int, Fame] = {}
        self.round_received: list[Optional[int]] = []
        self.consensus_ts: list[Optional[int]] = []
        self.whitened: list[Optional[bytes]] = []
        self.max_round = 0
        # consensus-side caches, valid forever because they depend only on ancestry
        self.prev_strongly_seen: dict[int, list[int]] = {}
        self.votes: dict[tuple[int, int], tuple[bool, int]] = {}
        self.undecided_rounds: dict[int, int] = {}
        self.undecided: set[int] = set()
        self.witness_log: list[int] = []
        # witness -> the voter whose tally settled its fame
        self.decided_by: dict[int, int] = {}
        self.fame_cursor: dict[int, int] = {}
        # events without a roundReceived, bucketed by the next round to try
        self.unordered: dict[int, list[int]] = {}

    def __len__(self) -> int:
        return len(self.events)

    def __contains__(self, event_id: Digest) -> bool:
        return event_id in self.index

    def local(self, event_id: Digest) -> int:
        try:
            return self.index[event_id]
        except KeyError:
            raise UnknownEvent(event_id.hex()) from None

    def event(self, event_id: Digest) -> Event:
        return self.events[self.local(event_id)]

    # -- insertion ---------------------------------------------------------

    def missing_parents(self, event: Event) -> list[Digest]:
        return [p for p in (event.self_parent, event.other_parent) if p is not None and p not in self.index]

    def insert(self, event: Event) -> InsertResult:
        if event.id in self.index:
            return InsertResult.DUPLICATE
        self._validate(event)
        missing = self.missing_parents(event)
        if missing:
            raise MissingParents(event.id, missing)
        self._append(event)
        return InsertResult.INSERTED

    def _validate(self, event: Event) -> None:
        if not 0 <= event.creator < self.n:
            raise MalformedEvent(f"creator {event.creator} out of range")
        if (event.self_parent is None) != (event.other_parent is None):
            raise MalformedEvent("exactly one parent present")
        if self.signer is not None and not self.signer.verify(event.creator, event.signing_bytes(), event.signature):
            raise BadSignature(event.short())
        if event.self_parent is not None:
            sp = self.index.get(event.self_parent)
            if sp is not None and self.creator[sp] != event.creator:
                raise MalformedEvent("self-parent by a different creator")
            op = self.index.get(event.other_parent)
            if op is not None and self.creator[op] == event.creator:
                raise MalformedEvent("other-parent by the same creator")

    def _append(self, event: Event) -> int:
        from hashgraph.consensus import assign_round

        i = len(self.events)
        c = event.creator
        self.events.append(event)
        self.index[event.id] = i
        self.creator.append(c)
        if event.is_genesis:
            sp = op = NONE
            self.seq.append(0)
            self.anc.append(1 << i)
            last = [NONE] * self.n
            self.jumps.append(())
        else:
            sp = self.index[event.self_parent]
            op = self.index[event.other_parent]
            self.seq.append(self.seq[sp] + 1)
            anc_sp = self.anc[sp]
            self.anc.append(anc_sp | self.anc[op] | (1 << i))
            last = kernels.merge_last(self.last[sp], self.last[op], anc_sp, self.anc)
            jumps = [sp]
            k = 0
            while k < len(self.jumps[jumps[-1]]):
                jumps.append(self.jumps[jumps[-1]][k])
                k += 1
            self.jumps.append(tuple(jumps))
        # i extends its creator's chain only if the self-parent was that chain's
        # top; any later event by c reached through the other parent forks with i
        last[c] = i if last[c] == sp else FORK
        self.last.append(tuple(last))
        if sp == NONE:
            self.clean.append((i,) * self.n)
        else:
            clean_sp = self.clean[sp]
            self.clean.append(tuple(i if t != FORK else clean_sp[k] for k, t in enumerate(last)))
        self.self_parent.append(sp)
        self.other_parent.append(op)
        self.by_creator[c].append(i)
        self.round_received.append(None)
        self.consensus_ts.append(None)
        self.whitened.append(None)
        r, is_witness = assign_round(self, i)
        self.round.append(r)
        self.witness.append(is_witness)
        if r > self.max_round:
            self.max_round = r
        if is_witness:
            insort(self.witnesses.setdefault(r, []), i, key=self._witness_key)
            self.witness_log.append(i)
            self.fame[i] = Fame.UNDECIDED
            self.undecided.add(i)
            self.undecided_rounds[r] = self.undecided_rounds.get(r, 0) + 1
        self.unordered.setdefault(r, []).append(i)
        return i

    def _witness_key(self, i: int) -> tuple[int, bytes]:
        return self.creator[i], self.events[i].id

    def set_fame(self, i: int, fame: Fame) -> None:
        current = self.fame[i]
        if current is fame:
            return
        if current is not Fame.UNDECIDED or fame is Fame.UNDECIDED:
            raise HashgraphError(f"fame of {self.events[i].short()} is write-once")
        self.fame[i] = fame
        self.undecided.discard(i)
        r = self.round[i]
        self.undecided_rounds[r] -= 1
        if not self.undecided_rounds[r]:
            del self.undecided_rounds[r]

    # -- ancestry ----------------------------------------------------------

    def is_ancestor(self, a: Digest, d: Digest) -> bool:
        return bool((self.anc[self.local(d)] >> self.local(a)) & 1)

    def is_self_ancestor(self, a: Digest, d: Digest) -> bool:
        ai, di = self.local(a), self.local(d)
        return self.self_ancestor_at(di, self.seq[ai]) == ai

    def self_ancestor_at(self, i: int, depth: int) -> int:
        """Self-ancestor of ``i`` whose self-parent chain depth is ``depth`` (or NONE)."""
        steps = self.seq[i] - depth
        if steps < 0:
            return NONE
        k = 0
        while steps:
            if steps & 1:
                i = self.jumps[i][k]
            steps >>= 1
            k += 1
        return i

    def earliest_self_descendant_of(self, top: int, target: int) -> int:
        """Earliest self-ancestor of ``top`` having ``target`` as an ancestor, or NONE."""
        return kernels.earliest_with_ancestor(top, target, self.anc, self.jumps)

    def forks_by(self, creator: int) -> list[ForkPair]:
        mine = self.by_creator[creator]
        depths = [self.seq[i] for i in mine]
        if len(set(depths)) == len(depths):
            return []
        pairs = []
        for a in range(len(mine)):
            for b in range(a + 1, len(mine)):
                x, y = mine[a], mine[b]
                if not (self.anc[y] >> x) & 1 and not (self.anc[x] >> y) & 1:
                    pairs.append(ForkPair(self.events[x].id, self.events[y].id))
        return pairs

    # -- seeing ------------------------------------------------------------

    def sees(self, x: Digest, y: Digest) -> bool:
        return self._sees(self.local(x), self.local(y))

    def strongly_sees(self, x: Digest, y: Digest) -> bool:
        return self._strongly_sees(self.local(x), self.local(y))

    def observes_fork(self, x: int, creator: int) -> bool:
        return self.last[x][creator] == FORK

    def _sees(self, x: int, y: int) -> bool:
        return bool((self.anc[x] >> y) & 1) and self.last[x][self.creator[y]] != FORK

    def _strongly_sees(self, x: int, y: int) -> bool:
        return kernels.strongly_seeing_creators(self, x, y) >= self.supermajority

    def strongly_seen(self, x: int, candidates: Iterable[int]) -> list[int]:
        """The members of ``candidates`` that ``x`` strongly sees."""
        anc_x = self.anc[x]
        quorum = self.supermajority
        return [y for y in candidates
                if (anc_x >> y) & 1 and kernels.strongly_seeing_creators(self, x, y) >= quorum]

    # -- whole-graph queries -------------------------------------------------

    def latest(self, creator: int) -> Optional[Event]:
        mine = self.by_creator[creator]
        return self.events[mine[-1]] if mine else None

    def ancestors_in_order(self, head: Digest) -> list[Event]:
        mask = self.anc[self.local(head)]
        return [self.events[i] for i in _bits(mask)]


def _bits(mask: int):
    i = 0
    while mask:
        low = mask & -mask
        i = low.bit_length() - 1
        yield i
        mask ^= low


class Consistent(NamedTuple):
    ok: bool = True
    witness: Optional[Digest] = None


def graph_consistent(a: Hashgraph, b: Hashgraph) -> Consistent:
    """Compare the ancestor subgraphs of every event both graphs hold.

    Both graphs are ancestor-closed, so the subgraphs agree exactly when every
    shared id maps to the same event record; the first mismatch in ``a``'s
    insertion order is returned as the divergence witness.
    """
    if len(b) < len(a):
        small, large = b, a
    else:
        small, large = a, b
    divergent = []
    for event in small.events:
        j = large.index.get(event.id)
        if j is not None and large.events[j] != event:
            divergent.append(event.id)
    if not divergent:
        return Consistent()
    first = min(divergent, key=lambda d: a.index[d])
    return Consistent(False, first)
