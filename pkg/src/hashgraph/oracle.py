"""Slow reference implementation straight from the definitions.

Nothing here shares code with :mod:`hashgraph.core` or
:mod:`hashgraph.consensus` beyond the :class:`Event` record and its codec:
ancestry is a set of ids, forks are found by comparing every pair, and
strongly-seeing can be decided by enumerating creator subsets. Tests compare the fast implementation
against it; ``hashgraph check`` uses it to re-derive a trace's rounds, fame
and order from the events alone.
"""

from __future__ import annotations

from functools import reduce
from itertools import combinations
from typing import Iterable, NamedTuple, Optional

from hashgraph.core import Event, decode
from hashgraph.crypto import middle_bit, xor_bytes


class Oracle:
    def __init__(self, events: Iterable[Event], n: int, coin_period: int = 10):
        self.n = n
        self.q = 2 * n // 3 + 1
        self.coin_period = coin_period
        self.events: dict[bytes, Event] = {}
        self.order: list[bytes] = []
        for e in events:
            if e.id in self.events:
                continue
            for p in (e.self_parent, e.other_parent):
                if p is not None and p not in self.events:
                    raise ValueError(f"event {e.id.hex()[:8]} precedes its parent")
            self.events[e.id] = e
            self.order.append(e.id)
        self._anc: dict[bytes, frozenset[bytes]] = {}
        self._forked: dict[bytes, frozenset[int]] = {}
        self._round: dict[bytes, int] = {}
        self._votes: dict[tuple[bytes, bytes], tuple[bool, int]] = {}
        self._fame: Optional[dict[bytes, Optional[bool]]] = None
        self._witnesses: Optional[dict[int, list[bytes]]] = None

    # -- ancestry and forks ----------------------------------------------------

    def ancestors(self, x: bytes) -> frozenset[bytes]:
        """Every event reachable from ``x`` by parent edges, ``x`` included."""
        if x not in self._anc:
            # parents precede children in self.order, so iterate instead of recursing
            for eid in self.order:
                if eid in self._anc:
                    continue
                e = self.events[eid]
                parents = [self._anc[p] for p in (e.self_parent, e.other_parent) if p is not None]
                self._anc[eid] = frozenset({eid}).union(*parents)
                if eid == x:
                    break
        return self._anc[x]

    def is_ancestor(self, a: bytes, d: bytes) -> bool:
        return a in self.ancestors(d)

    def self_ancestors(self, x: bytes) -> list[bytes]:
        out = []
        cur: Optional[bytes] = x
        while cur is not None:
            out.append(cur)
            cur = self.events[cur].self_parent
        return out

    def is_self_ancestor(self, a: bytes, d: bytes) -> bool:
        return a in self.self_ancestors(d)

    def forks_by(self, creator: int, within: Optional[frozenset[bytes]] = None) -> list[frozenset[bytes]]:
        mine = [i for i in self.order if self.events[i].creator == creator and (within is None or i in within)]
        return [frozenset((a, b)) for a, b in combinations(mine, 2)
                if not self.is_ancestor(a, b) and not self.is_ancestor(b, a)]

    def forked_creators(self, x: bytes) -> frozenset[int]:
        """Creators with a fork among ``x``'s ancestors."""
        if x not in self._forked:
            anc = self.ancestors(x)
            self._forked[x] = frozenset(c for c in range(self.n) if self._has_fork(c, anc))
        return self._forked[x]

    def _has_fork(self, creator: int, anc: frozenset[bytes]) -> bool:
        # fork-free iff the deepest event has all the others as self-ancestors
        mine = [i for i in anc if self.events[i].creator == creator]
        if len(mine) < 2:
            return False
        top = max(mine, key=lambda i: len(self.self_ancestors(i)))
        return not set(mine) <= set(self.self_ancestors(top))

    # -- seeing ------------------------------------------------------------------

    def sees(self, x: bytes, y: bytes) -> bool:
        return y in self.ancestors(x) and self.events[y].creator not in self.forked_creators(x)

    def _bridging_creators(self, x: bytes, y: bytes) -> set[int]:
        return {self.events[s].creator for s in self.ancestors(x) if self.sees(x, s) and self.sees(s, y)}

    def strongly_sees(self, x: bytes, y: bytes) -> bool:
        return len(self._bridging_creators(x, y)) >= self.q

    def strongly_sees_by_subsets(self, x: bytes, y: bytes) -> bool:
        """Search creator subsets of size > 2n/3 for one whose members all bridge ``x`` to ``y``."""
        anc = self.ancestors(x)
        for size in range(self.q, self.n + 1):
            for creators in combinations(range(self.n), size):
                if all(any(self.events[s].creator == c and self.sees(x, s) and self.sees(s, y) for s in anc)
                       for c in creators):
                    return True
        return False

    # -- rounds ------------------------------------------------------------------

    def round(self, x: bytes) -> int:
        if x not in self._round:
            for eid in self.order:
                if eid not in self._round:
                    self._round[eid] = self._compute_round(eid)
                if eid == x:
                    break
        return self._round[x]

    def _compute_round(self, x: bytes) -> int:
        e = self.events[x]
        if e.self_parent is None:
            return 1
        r = max(self._round[e.self_parent], self._round[e.other_parent])
        seen = {self.events[w].creator for w in self.witnesses(r) if w in self.ancestors(x) and self.strongly_sees(x, w)}
        return r + 1 if len(seen) >= self.q else r

    def is_witness(self, x: bytes) -> bool:
        sp = self.events[x].self_parent
        return sp is None or self.round(x) > self.round(sp)

    def witnesses(self, r: int) -> list[bytes]:
        if self._witnesses is None and len(self._round) == len(self.order):
            table: dict[int, list[bytes]] = {}
            for i in self.order:
                if self.is_witness(i):
                    table.setdefault(self._round[i], []).append(i)
            self._witnesses = {k: sorted(v, key=lambda i: (self.events[i].creator, i)) for k, v in table.items()}
        if self._witnesses is not None:
            return self._witnesses.get(r, [])
        ws = [i for i in self.order if i in self._round and self._round[i] == r and self.is_witness(i)]
        return sorted(ws, key=lambda i: (self.events[i].creator, i))

    def max_round(self) -> int:
        return max((self.round(i) for i in self.order), default=0)

    # -- fame --------------------------------------------------------------------

    def vote(self, x: bytes, y: bytes) -> tuple[bool, int]:
        key = (x, y)
        if key not in self._votes:
            d = self.round(y) - self.round(x)
            if d == 1:
                self._votes[key] = (self.sees(y, x), 0)
            else:
                prev = [w for w in self.witnesses(self.round(y) - 1) if self.strongly_sees(y, w)]
                yes = sum(self.vote(x, w)[0] for w in prev)
                no = len(prev) - yes
                v, t = (True, yes) if yes >= no else (False, no)
                if d % self.coin_period == 0 and t < self.q:
                    v = bool(middle_bit(self.events[y].signature))
                self._votes[key] = (v, t)
        return self._votes[key]

    def fame(self) -> dict[bytes, Optional[bool]]:
        """Witness -> True (famous), False (not famous) or None (undecided)."""
        if self._fame is None:
            top = self.max_round()
            by_round = {r: self.witnesses(r) for r in range(1, top + 1)}
            out: dict[bytes, Optional[bool]] = {}
            for r in range(1, top + 1):
                for x in by_round[r]:
                    out[x] = None
                    for r2 in range(r + 2, top + 1):
                        if (r2 - r) % self.coin_period == 0:
                            continue
                        decided = [v for v, t in (self.vote(x, y) for y in by_round[r2]) if t >= self.q]
                        if decided:
                            out[x] = decided[0]
                            break
            self._fame = out
        return self._fame

    def unique_famous(self, r: int) -> list[bytes]:
        fame = self.fame()
        famous = [w for w in self.witnesses(r) if fame.get(w)]
        creators = [self.events[w].creator for w in famous]
        return [w for w in famous if creators.count(self.events[w].creator) == 1]

    # -- order -------------------------------------------------------------------

    def round_received(self, x: bytes) -> Optional[tuple[int, int, bytes]]:
        """(roundReceived, consensus timestamp, whitened signature), or None."""
        fame = self.fame()
        for r in range(1, self.max_round() + 1):
            if any(fame[w] is None for w in self.witnesses(r)):
                return None
            if r < self.round(x):
                continue
            ufw = self.unique_famous(r)
            if ufw and all(self.is_ancestor(x, w) for w in ufw):
                stamps = sorted(self.events[self._earliest_descendant(w, x)].timestamp for w in ufw)
                whitened = reduce(xor_bytes, (self.events[w].signature for w in ufw), self.events[x].signature)
                return r, stamps[(len(stamps) - 1) // 2], whitened
        return None

    def _earliest_descendant(self, w: bytes, x: bytes) -> bytes:
        chain = self.self_ancestors(w)
        z = w
        for s in chain:
            if self.is_ancestor(x, s):
                z = s
            else:
                break
        return z

    def consensus_order(self) -> list[bytes]:
        keyed = [(k, x) for x in self.order if (k := self.round_received(x)) is not None]
        return [x for _, x in sorted(keyed)]


# -- trace replay ----------------------------------------------------------------

FAME_NAMES = {True: "famous", False: "not_famous", None: "undecided"}


class Mismatch(NamedTuple):
    line: int
    kind: str
    detail: str


def check_trace(records: list[dict]) -> Optional[Mismatch]:
    """Re-derive rounds, fame and order from a trace's events and compare.

    Every replica is graph-consistent with the union of all created events,
    so the union's rounds, fame and order are the ones each replica must
    have recorded.
    """
    if not records:
        return None
    config = next((r for r in records if r.get("kind") == "Config"), None)
    if config is None:
        return Mismatch(0, "Config", "trace has no Config record")
    events = [decode(bytes.fromhex(r["payload"])) for r in records if r["kind"] == "Created"]
    oracle = Oracle(events, config["n"], config["coinPeriod"])
    last_key: dict[int, tuple] = {}
    for line, rec in enumerate(records, 1):
        kind = rec["kind"]
        eid = bytes.fromhex(rec["event"]) if rec.get("event") else None
        if kind == "Created":
            want = (oracle.round(eid), oracle.is_witness(eid))
            got = (rec["round"], rec["witness"])
            if want != got:
                return Mismatch(line, kind, f"event {rec['event'][:8]}: (round, witness) {got} != {want}")
        elif kind == "FameDecided":
            want = FAME_NAMES[oracle.fame().get(eid)]
            if rec["fame"] != want:
                return Mismatch(line, kind, f"witness {rec['event'][:8]}: fame {rec['fame']} != {want}")
        elif kind == "Committed":
            key = oracle.round_received(eid)
            got = (rec["roundReceived"], rec["consensusTimestamp"])
            if key is None or key[:2] != got:
                return Mismatch(line, kind, f"event {rec['event'][:8]}: order {got} != {key and key[:2]}")
            prev = last_key.get(rec["party"])
            if prev is not None and key <= prev:
                return Mismatch(line, kind, f"party {rec['party']} commits out of order")
            last_key[rec["party"]] = key
    return None
