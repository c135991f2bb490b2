# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot kernels; behaviour is identical to ``_kernels_py``."""

__all__ = ["merge_last", "earliest_with_ancestor", "strongly_seeing_creators"]

cdef Py_ssize_t NONE = -1
cdef Py_ssize_t FORK = -2


cdef inline bint _has(object mask, Py_ssize_t bit):
    return (mask >> bit) & 1


def merge_last(tuple last_a, tuple last_b, object anc_a, list anc):
    cdef list out = list(last_a)
    cdef Py_ssize_t c, a, b, n = len(last_b)
    for c in range(n):
        b = <Py_ssize_t>last_b[c]
        a = <Py_ssize_t>out[c]
        if a == b or b == NONE or a == FORK:
            continue
        if a == NONE or b == FORK:
            out[c] = b
        elif _has(anc[b], a):
            out[c] = b
        elif not _has(anc[a], b):
            out[c] = FORK
    return out


def earliest_with_ancestor(Py_ssize_t top, Py_ssize_t target, list anc, list jumps):
    if not _has(anc[top], target):
        return NONE
    cdef Py_ssize_t cur = top, nxt
    cdef tuple row = jumps[cur]
    cdef Py_ssize_t k = len(row) - 1
    while k >= 0:
        row = jumps[cur]
        if k < len(row):
            nxt = <Py_ssize_t>row[k]
            if _has(anc[nxt], target):
                cur = nxt
        k -= 1
    return cur


def strongly_seeing_creators(g, Py_ssize_t x, Py_ssize_t y):
    cdef list anc = g.anc
    if not _has(anc[x], y):
        return 0
    cdef list last = g.last
    cdef Py_ssize_t cy = g.creator[y]
    cdef tuple last_x = last[x]
    cdef Py_ssize_t count = 0, t, top, cl, sy, c, n = len(last_x)
    cdef list seq, clean
    if <Py_ssize_t>last_x[cy] != FORK:
        seq = g.seq
        sy = seq[y]
        for c in range(n):
            t = <Py_ssize_t>last_x[c]
            if t >= 0:
                top = <Py_ssize_t>(<tuple>last[t])[cy]
                if top >= 0 and <Py_ssize_t>seq[top] >= sy:
                    count += 1
        return count
    clean = g.clean
    for c in range(n):
        t = <Py_ssize_t>last_x[c]
        if t >= 0:
            cl = <Py_ssize_t>(<tuple>clean[t])[cy]
            if cl >= 0 and _has(anc[cl], y):
                count += 1
    return count
