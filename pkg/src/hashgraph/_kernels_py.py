"""Pure-Python hot kernels. ``_kernels.pyx`` mirrors these line for line."""

__all__ = ["merge_last", "earliest_with_ancestor", "strongly_seeing_creators"]

NONE = -1
FORK = -2


def merge_last(last_a, last_b, anc_a, anc):
    """Combine two per-creator chain tops into the tops of their union."""
    out = list(last_a)
    for c, b in enumerate(last_b):
        a = out[c]
        if a == b or b == NONE or a == FORK:
            continue
        if a == NONE or b == FORK:
            out[c] = b
        elif (anc[b] >> a) & 1:
            out[c] = b
        elif not (anc[a] >> b) & 1:
            out[c] = FORK
    return out


def earliest_with_ancestor(top, target, anc, jumps):
    if not (anc[top] >> target) & 1:
        return NONE
    cur = top
    k = len(jumps[cur]) - 1
    while k >= 0:
        row = jumps[cur]
        if k < len(row) and (anc[row[k]] >> target) & 1:
            cur = row[k]
        k -= 1
    return cur


def strongly_seeing_creators(g, x, y):
    """Number of creators with an event that ``x`` sees and that sees ``y``.

    For a creator whose newest event in x's ancestry is ``t``, the chain below
    ``t`` sees ``y`` on a contiguous stretch that starts at the first event
    descending from ``y`` and ends at the last one not observing a fork by
    y's creator (``clean``). Some chain event sees ``y`` iff that last clean
    event descends from ``y``.
    """
    anc = g.anc
    if not (anc[x] >> y) & 1:
        return 0
    last = g.last
    cy = g.creator[y]
    last_x = last[x]
    count = 0
    if last_x[cy] != FORK:
        # y's creator is one chain inside x's ancestry, so descent from y
        # is a depth comparison on that chain
        seq = g.seq
        sy = seq[y]
        for t in last_x:
            if t >= 0:
                top = last[t][cy]
                if top >= 0 and seq[top] >= sy:
                    count += 1
        return count
    clean = g.clean
    for t in last_x:
        if t >= 0:
            c = clean[t][cy]
            if c >= 0 and (anc[c] >> y) & 1:
                count += 1
    return count
