"""Brute-force reference implementations.

Nothing here shares code with the search engine: maps are enumerated with
itertools.product and checked tuple by tuple.
"""
from __future__ import annotations

import itertools
from typing import Iterator, Optional, Sequence


def _tuples(F, name):
    return F.rel(name).tuples()


def brute_homomorphism_exists(J, A) -> bool:
    return brute_homomorphism(J, A) is not None


def brute_homomorphism(J, A) -> Optional[tuple]:
    rels = [(_tuples(J, n), set(_tuples(A, n))) for n in J.signature.names]
    for h in itertools.product(range(A.size), repeat=J.size):
        if all(tuple(h[x] for x in t) in target for src, target in rels for t in src):
            return h
    return None


def brute_acyclic(edges: Sequence[tuple], n: int) -> bool:
    """Kahn-style peeling of sources."""
    left = set(range(n))
    edges = set(edges)
    while left:
        srcs = [v for v in left if not any(b == v and a in left for a, b in edges)]
        if not srcs:
            return False
        left -= set(srcs)
    return True


def weak_orders(d: int) -> Iterator[tuple]:
    """Every map [d] -> ranks 0..k-1 that is onto an initial segment."""
    for ranks in itertools.product(range(d), repeat=d):
        if set(ranks) == set(range(max(ranks, default=-1) + 1)):
            yield ranks


def count_weak_orders(d: int) -> int:
    return sum(1 for _ in weak_orders(d))


def all_tables(m: int, n: int, codomain: Optional[int] = None) -> Iterator[tuple]:
    return itertools.product(range(codomain or m), repeat=m ** n)


def symmetric_binary_tables(m: int) -> Iterator[tuple]:
    """All commutative binary tables on [m] (value at index a + m*b)."""
    pairs = [(a, b) for a in range(m) for b in range(a, m)]
    for vals in itertools.product(range(m), repeat=len(pairs)):
        pick = dict(zip(pairs, vals))
        yield tuple(pick[(min(a, b), max(a, b))] for b in range(m) for a in range(m))


def table_preserves(values: Sequence[int], n: int, S1, S2) -> bool:
    m = S1.size

    def f(args):
        idx = 0
        for j, a in enumerate(args):
            idx += a * m ** j
        return values[idx]

    for name in S1.signature.names:
        src = _tuples(S1, name)
        target = set(_tuples(S2, name))
        for rows in itertools.product(src, repeat=n):
            img = tuple(f([rows[i][c] for i in range(n)]) for c in range(len(rows[0])))
            if img not in target:
                return False
    return True


def table_is_cyclic(values: Sequence[int], n: int, m: int) -> bool:
    for args in itertools.product(range(m), repeat=n):
        rot = args[1:] + args[:1]
        if values[sum(a * m ** j for j, a in enumerate(args))] != \
                values[sum(a * m ** j for j, a in enumerate(rot))]:
            return False
    return True


def brute_cyclic_polymorphism_exists(S1, S2, n: int) -> bool:
    for values in all_tables(S1.size, n, S2.size):
        if table_is_cyclic(values, n, S1.size) and table_preserves(values, n, S1, S2):
            return True
    return False


def brute_essentially_injective(values: Sequence[int], n: int, m: int) -> bool:
    """Delete coordinates whose change never changes the value; the rest must be injective."""
    def at(args):
        return values[sum(a * m ** j for j, a in enumerate(args))]

    essential = []
    for i in range(n):
        dep = any(at(args) != at(args[:i] + (b,) + args[i + 1:])
                  for args in itertools.product(range(m), repeat=n) for b in range(m))
        if dep:
            essential.append(i)
    seen = {}
    for args in itertools.product(range(m), repeat=n):
        key = tuple(args[i] for i in essential)
        if seen.setdefault(at(args), key) != key:
            return False
    return True


def brute_i4_preserved(values: Sequence[int], n: int, m: int) -> bool:
    i4 = [t for t in itertools.product(range(m), repeat=4) if t[0] != t[1] or t[2] == t[3]]

    def at(args):
        return values[sum(a * m ** j for j, a in enumerate(args))]

    for rows in itertools.product(i4, repeat=n):
        img = [at(tuple(rows[i][c] for i in range(n))) for c in range(4)]
        if img[0] == img[1] and img[2] != img[3]:
            return False
    return True
