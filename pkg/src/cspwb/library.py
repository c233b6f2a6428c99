"""Small named structures and specs used by the CLI and the suites."""
from __future__ import annotations

import itertools
import re
from typing import Optional

from .agespec import BoundSpec, builtin_linear_order
from .relcore import FiniteStructure, Signature, structure


def chain(n: int, symbol: str = "<") -> FiniteStructure:
    """The strict linear order on n points."""
    return structure([(symbol, 2)], n, {symbol: list(itertools.combinations(range(n), 2))},
                     name=f"chain{n}")


def path(n: int, symbol: str = "<") -> FiniteStructure:
    """Directed path 0 -> 1 -> ... -> n-1."""
    return structure([(symbol, 2)], n, {symbol: [(i, i + 1) for i in range(n - 1)]},
                     name=f"path{n}")


def cycle(n: int, symbol: str = "<") -> FiniteStructure:
    return structure([(symbol, 2)], n, {symbol: [(i, (i + 1) % n) for i in range(n)]},
                     name=f"cycle{n}")


def clique(n: int, symbol: str = "E") -> FiniteStructure:
    return structure([(symbol, 2)], n,
                     {symbol: [(a, b) for a in range(n) for b in range(n) if a != b]},
                     name=f"K{n}")


def parity_structure() -> FiniteStructure:
    """({0,1}; U = {1}, P = {x+y+z = 0 mod 2})."""
    odd = [t for t in itertools.product(range(2), repeat=3) if sum(t) % 2 == 0]
    return structure([("U", 1), ("P", 3)], 2, {"U": [(1,)], "P": odd}, name="A1")


_PATTERNS = [
    (re.compile(r"^chain(\d+)$"), chain),
    (re.compile(r"^path(\d+)$"), path),
    (re.compile(r"^(?:cycle(\d+)|(\d+)cycle)$"), cycle),
    (re.compile(r"^[kK](\d+)$"), clique),
]


def builtin_structure(name: str) -> Optional[FiniteStructure]:
    if name.lower() == "a1":
        return parity_structure()
    for pat, fn in _PATTERNS:
        m = pat.match(name)
        if m:
            n = int(next(g for g in m.groups() if g is not None))
            return fn(n)
    return None


def builtin_spec(name: str) -> Optional[BoundSpec]:
    if name in ("linear", "qlt"):
        return builtin_linear_order("<")
    return None


def linear_signature() -> Signature:
    return Signature([("<", 2)])
