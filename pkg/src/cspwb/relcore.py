"""Finite relational structures, elementary constructions, and the homomorphism solver.

Elements are dense indices ``0..n-1``.  Relations come in two flavours:

* :class:`TupleRelation` -- an explicit, sorted, duplicate-free tuple set;
* :class:`LabelRelation` -- a relation given by per-position label maps plus
  either a set of admitted label tuples or "all labels equal".  Large
  quotient templates are stored this way so they never have to be
  materialized.

The solver works on Python integers used as bit sets over the target
domain and maintains generalized arc consistency while it searches
variables in index order and values in increasing order, which makes the
first solution the lexicographically least one.
"""
from __future__ import annotations

import contextlib
import itertools
import os
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np


# ---------------------------------------------------------------- caps

class CapExceeded(RuntimeError):
    """A construction would exceed a configured size cap."""

    def __init__(self, what: str, required: int, allowed: int, stage: str = ""):
        self.what, self.required, self.allowed, self.stage = what, required, allowed, stage
        where = f"[{stage}] " if stage else ""
        super().__init__(f"{where}{what}: requires {required}, cap is {allowed}")


@dataclass(frozen=True)
class Caps:
    domain: int = 100_000
    tuples: int = 5_000_000
    types: int = 200_000
    search_vars: int = 5_000


_CAP_FIELDS = ("domain", "tuples", "types", "search_vars")
_override: Optional[Caps] = None


def parse_caps(text: str, base: Caps = Caps()) -> Caps:
    """Parse ``"100000,5000000"`` (positional) or ``"types=10,domain=50"``."""
    values = {}
    for i, part in enumerate(p.strip() for p in text.split(",")):
        if not part:
            continue
        if "=" in part:
            key, _, val = part.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _CAP_FIELDS:
                raise ValueError(f"unknown cap {key!r}")
        else:
            if i >= len(_CAP_FIELDS):
                raise ValueError(f"too many positional caps in {text!r}")
            key, val = _CAP_FIELDS[i], part
        n = int(val)
        if n <= 0:
            raise ValueError(f"cap {key} must be positive")
        values[key] = n
    return replace(base, **values)


def get_caps() -> Caps:
    if _override is not None:
        return _override
    env = os.environ.get("CSPWB_CAPS")
    return parse_caps(env) if env else Caps()


@contextlib.contextmanager
def caps_override(**kw):
    """Temporarily replace individual caps (used by tests and the CLI)."""
    global _override
    old = _override
    _override = replace(get_caps(), **kw)
    try:
        yield _override
    finally:
        _override = old


def check_cap(what: str, required: int, field: str, stage: str = "") -> None:
    allowed = getattr(get_caps(), field)
    if required > allowed:
        raise CapExceeded(what, required, allowed, stage)


# ---------------------------------------------------------------- signatures

class Signature:
    """Ordered list of ``(name, arity)`` pairs with unique names."""

    __slots__ = ("symbols", "_arity")

    def __init__(self, symbols: Iterable[tuple[str, int]]):
        symbols = tuple((str(n), int(a)) for n, a in symbols)
        arity = {}
        for name, a in symbols:
            if name in arity:
                raise ValueError(f"duplicate symbol {name!r}")
            if a < 1:
                raise ValueError(f"symbol {name!r} has arity {a} < 1")
            arity[name] = a
        self.symbols = symbols
        self._arity = arity

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.symbols]

    def arity(self, name: str) -> int:
        return self._arity[name]

    @property
    def max_arity(self) -> int:
        return max((a for _, a in self.symbols), default=0)

    def __contains__(self, name) -> bool:
        return name in self._arity

    def __iter__(self):
        return iter(self.symbols)

    def __len__(self):
        return len(self.symbols)

    def __eq__(self, other):
        return isinstance(other, Signature) and self.symbols == other.symbols

    def __hash__(self):
        return hash(self.symbols)

    def __repr__(self):
        return "Signature(" + " ".join(f"{n}/{a}" for n, a in self.symbols) + ")"

    def disjoint(self, other: "Signature") -> bool:
        return not (set(self._arity) & set(other._arity))

    def shared(self, other: "Signature") -> list[str]:
        return [n for n in self.names if n in other]

    def union(self, other: "Signature") -> "Signature":
        return Signature(self.symbols + tuple(s for s in other.symbols if s[0] not in self))

    def restrict(self, names: Iterable[str]) -> "Signature":
        keep = set(names)
        missing = keep - set(self._arity)
        if missing:
            raise KeyError(f"unknown symbols {sorted(missing)}")
        return Signature(s for s in self.symbols if s[0] in keep)


def same_signature_or_raise(s1: Signature, s2: Signature) -> None:
    if s1 == s2:
        return
    for (n1, a1), (n2, a2) in zip(s1.symbols, s2.symbols):
        if (n1, a1) != (n2, a2):
            raise ValueError(f"signature mismatch at symbol {n1}/{a1} vs {n2}/{a2}")
    longer = s1 if len(s1) > len(s2) else s2
    n, a = longer.symbols[min(len(s1), len(s2))]
    raise ValueError(f"signature mismatch: symbol {n}/{a} present on one side only")


# ---------------------------------------------------------------- relations

def _encode(arr: np.ndarray, base: int) -> Optional[np.ndarray]:
    """Mixed-radix codes of rows; None if they would overflow int64."""
    k = arr.shape[1]
    if base ** max(k, 1) >= 2 ** 62:
        return None
    weights = base ** np.arange(k, dtype=np.int64)
    return arr.astype(np.int64) @ weights


class Relation:
    arity: int
    domain_size: int

    def __contains__(self, t) -> bool:
        raise NotImplementedError

    def contains_many(self, arr: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tuples(self) -> list[tuple]:
        raise NotImplementedError

    def array(self) -> np.ndarray:
        t = self.tuples()
        if not t:
            return np.zeros((0, self.arity), dtype=np.int64)
        return np.array(t, dtype=np.int64)

    def __len__(self) -> int:
        raise NotImplementedError

    def __iter__(self):
        return iter(self.tuples())

    def loop_mask(self) -> np.ndarray:
        """Elements ``t`` with the constant tuple ``(t,...,t)`` in the relation."""
        ar = np.arange(self.domain_size, dtype=np.int64)
        return self.contains_many(np.stack([ar] * self.arity, axis=1))


class TupleRelation(Relation):
    """Explicit relation; rows kept sorted lexicographically."""

    def __init__(self, arity: int, domain_size: int, tuples=()):
        self.arity, self.domain_size = arity, domain_size
        if isinstance(tuples, np.ndarray):
            arr = tuples.astype(np.int64).reshape(-1, arity)
            if len(arr):
                arr = np.unique(arr, axis=0)
            self._arr = arr
            self._list = None
        else:
            lst = sorted(set(tuple(int(x) for x in t) for t in tuples))
            for t in lst:
                if len(t) != arity:
                    raise ValueError(f"tuple {t} has length {len(t)}, expected {arity}")
            self._list = lst
            self._arr = None
        arr = self.array()
        if len(arr) and (arr.min() < 0 or arr.max() >= domain_size):
            bad = next(t for t in self.tuples() if min(t) < 0 or max(t) >= domain_size)
            raise ValueError(f"tuple {bad} has an entry outside 0..{domain_size - 1}")
        self._set = None
        self._codes = None

    def tuples(self) -> list[tuple]:
        if self._list is None:
            self._list = [tuple(int(x) for x in row) for row in self._arr]
        return self._list

    def array(self) -> np.ndarray:
        if self._arr is None:
            self._arr = (np.array(self._list, dtype=np.int64).reshape(-1, self.arity)
                         if self._list else np.zeros((0, self.arity), dtype=np.int64))
        return self._arr

    def __len__(self):
        return len(self._arr) if self._list is None else len(self._list)

    def __contains__(self, t) -> bool:
        if self._set is None:
            self._set = frozenset(self.tuples())
        return tuple(t) in self._set

    def contains_many(self, arr: np.ndarray) -> np.ndarray:
        arr = np.asarray(arr, dtype=np.int64).reshape(-1, self.arity)
        if self._codes is None:
            codes = _encode(self.array(), max(self.domain_size, 1))
            self._codes = np.sort(codes) if codes is not None else False
        if self._codes is False:
            return np.array([tuple(int(x) for x in r) in self for r in arr], dtype=bool)
        q = _encode(arr, max(self.domain_size, 1))
        pos = np.searchsorted(self._codes, q)
        pos = np.minimum(pos, max(len(self._codes) - 1, 0))
        if len(self._codes) == 0:
            return np.zeros(len(arr), dtype=bool)
        return self._codes[pos] == q


class LabelRelation(Relation):
    """Relation given by label maps per position.

    ``(x_1..x_k)`` belongs to the relation iff ``(L_1[x_1], .., L_k[x_k])`` is in
    ``allowed``; with ``allowed=None`` (binary only) iff ``L_1[x_1] == L_2[x_2]``.
    Each label map carries a key; maps with equal keys inside one structure
    must be identical, which lets the solver share work between relations.
    """

    def __init__(self, domain_size: int, labels: Sequence[tuple], allowed=None):
        self.domain_size = domain_size
        self.arity = len(labels)
        self.keys = tuple(k for k, _ in labels)
        self.maps = tuple(np.asarray(m, dtype=np.int64) for _, m in labels)
        for m in self.maps:
            if m.shape != (domain_size,):
                raise ValueError("label map length differs from domain size")
        if allowed is None:
            if self.arity != 2:
                raise ValueError("equality label relations must be binary")
            self.allowed = None
        else:
            self.allowed = frozenset(tuple(int(x) for x in a) for a in allowed)
        self._count = None
        self._group_cache = [None] * self.arity

    @property
    def is_equality(self) -> bool:
        return self.allowed is None

    def __contains__(self, t) -> bool:
        labs = tuple(int(m[x]) for m, x in zip(self.maps, t))
        if self.allowed is None:
            return labs[0] == labs[1]
        return labs in self.allowed

    def contains_many(self, arr: np.ndarray) -> np.ndarray:
        arr = np.asarray(arr, dtype=np.int64).reshape(-1, self.arity)
        labs = np.stack([m[arr[:, j]] for j, m in enumerate(self.maps)], axis=1)
        if self.allowed is None:
            return labs[:, 0] == labs[:, 1]
        if not self.allowed:
            return np.zeros(len(arr), dtype=bool)
        base = int(max(int(labs.max(initial=0)), max(max(a) for a in self.allowed))) + 1
        allowed = np.array(sorted(self.allowed), dtype=np.int64)
        ca, cq = _encode(allowed, base), _encode(labs, base)
        if ca is None:
            return np.array([tuple(r) in self.allowed for r in labs.tolist()], dtype=bool)
        ca = np.sort(ca)
        pos = np.minimum(np.searchsorted(ca, cq), len(ca) - 1)
        return ca[pos] == cq

    def _groups(self, j: int) -> dict:
        if self._group_cache[j] is None:
            g: dict = {}
            for x, lab in enumerate(self.maps[j].tolist()):
                g.setdefault(lab, []).append(x)
            self._group_cache[j] = g
        return self._group_cache[j]

    def _label_rows(self) -> list[tuple]:
        if self.allowed is not None:
            return sorted(self.allowed)
        common = set(self.maps[0].tolist()) & set(self.maps[1].tolist())
        return [(lab, lab) for lab in sorted(common)]

    def __len__(self):
        if self._count is None:
            groups = [self._groups(j) for j in range(self.arity)]
            total = 0
            for row in self._label_rows():
                prod = 1
                for j, lab in enumerate(row):
                    prod *= len(groups[j].get(lab, ()))
                total += prod
            self._count = total
        return self._count

    def tuples(self) -> list[tuple]:
        check_cap("materialized relation", len(self), "tuples")
        groups = [self._groups(j) for j in range(self.arity)]
        out = []
        for row in self._label_rows():
            out.extend(itertools.product(*(groups[j].get(lab, ()) for j, lab in enumerate(row))))
        out.sort()
        return out


def as_relation(rel, arity: int, domain_size: int) -> Relation:
    if isinstance(rel, Relation):
        if rel.arity != arity:
            raise ValueError(f"relation arity {rel.arity} differs from symbol arity {arity}")
        if rel.domain_size != domain_size:
            raise ValueError("relation domain size differs from structure size")
        return rel
    return TupleRelation(arity, domain_size, rel)


# ---------------------------------------------------------------- structures

class FiniteStructure:
    """A finite relational structure over a :class:`Signature`."""

    def __init__(self, signature: Signature, size: int, relations=None,
                 labels: Optional[Sequence[str]] = None, name: str = "A"):
        if size < 0:
            raise ValueError("domain size must be non-negative")
        self.signature = signature
        self.size = size
        self.name = name
        if labels is not None:
            labels = [str(x) for x in labels]
            if len(labels) != size:
                raise ValueError("label count differs from domain size")
        self.labels = labels
        relations = dict(relations or {})
        unknown = set(relations) - set(signature.names)
        if unknown:
            raise ValueError(f"unknown symbols {sorted(unknown)}")
        self._rels = {n: as_relation(relations.get(n, ()), a, size) for n, a in signature}
        self._solver_cache: dict = {}

    def rel(self, name: str) -> Relation:
        return self._rels[name]

    def tuples(self, name: str) -> list[tuple]:
        return self._rels[name].tuples()

    def holds(self, name: str, t) -> bool:
        return tuple(t) in self._rels[name]

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels else f"e{i}"

    def total_tuples(self) -> int:
        return sum(len(r) for r in self._rels.values())

    def reduct(self, names: Iterable[str]) -> "FiniteStructure":
        sig = self.signature.restrict(names)
        return FiniteStructure(sig, self.size, {n: self._rels[n] for n in sig.names},
                               self.labels, self.name)

    def expand(self, extra_sig: Signature, extra_rels=None) -> "FiniteStructure":
        rels = dict(self._rels)
        rels.update(extra_rels or {})
        return FiniteStructure(self.signature.union(extra_sig), self.size, rels,
                               self.labels, self.name)

    def rename(self, name: str) -> "FiniteStructure":
        return FiniteStructure(self.signature, self.size, self._rels, self.labels, name)

    def canonical_form(self) -> tuple:
        return (self.size, tuple((n, tuple(self.tuples(n))) for n in self.signature.names))

    def __eq__(self, other):
        if not isinstance(other, FiniteStructure):
            return NotImplemented
        return (self.signature == other.signature and self.size == other.size
                and all(self.tuples(n) == other.tuples(n) for n in self.signature.names))

    def __hash__(self):
        return hash(self.canonical_form())

    def __repr__(self):
        return f"FiniteStructure({self.name}, size={self.size}, {self.signature!r})"


def structure(symbols, size: int, relations=None, name: str = "A") -> FiniteStructure:
    """Convenience constructor: ``structure([("<", 2)], 3, {"<": [(0, 1)]})``."""
    sig = symbols if isinstance(symbols, Signature) else Signature(symbols)
    return FiniteStructure(sig, size, relations, name=name)


@dataclass(frozen=True)
class Partition:
    domain_size: int
    class_of: tuple

    def __post_init__(self):
        if len(self.class_of) != self.domain_size:
            raise ValueError("class map is not total")
        # normalize to minimal members
        first: dict = {}
        norm = []
        for x, c in enumerate(self.class_of):
            norm.append(first.setdefault(c, x))
        object.__setattr__(self, "class_of", tuple(norm))

    @classmethod
    def identity(cls, n: int) -> "Partition":
        return cls(n, tuple(range(n)))

    @classmethod
    def from_classes(cls, n: int, classes: Iterable[Iterable[int]]) -> "Partition":
        cof = list(range(n))
        for cl in classes:
            cl = sorted(cl)
            for x in cl:
                cof[x] = cl[0]
        return cls(n, tuple(cof))

    def classes(self) -> list[list[int]]:
        out: dict = {}
        for x, c in enumerate(self.class_of):
            out.setdefault(c, []).append(x)
        return [out[c] for c in sorted(out)]

    @property
    def num_classes(self) -> int:
        return len(set(self.class_of))

    def renumbering(self) -> list[int]:
        """Element -> class index 0..k-1 in order of minimal members."""
        reps = sorted(set(self.class_of))
        pos = {c: i for i, c in enumerate(reps)}
        return [pos[c] for c in self.class_of]

    def pairs(self) -> list[tuple[int, int]]:
        return [(c, x) for x, c in enumerate(self.class_of) if c != x]


@dataclass(frozen=True)
class HomWitness:
    map: tuple
    injective: bool = False

    def replay(self, J: FiniteStructure, A: FiniteStructure) -> bool:
        return is_homomorphism(J, A, self.map, self.injective)


def is_homomorphism(J: FiniteStructure, A: FiniteStructure, mapping: Sequence[int],
                    injective: bool = False) -> bool:
    """Independent preservation check (vectorized per relation)."""
    if J.signature != A.signature or len(mapping) != J.size:
        return False
    m = np.asarray(mapping, dtype=np.int64)
    if len(m) and (m.min() < 0 or m.max() >= A.size):
        return False
    if injective and len(set(m.tolist())) != len(m):
        return False
    for name in J.signature.names:
        rel, target = J.rel(name), A.rel(name)
        if (isinstance(rel, LabelRelation) and rel.is_equality
                and isinstance(target, LabelRelation) and target.is_equality):
            if not _equality_preserved(rel, target, m):
                return False
            continue
        if len(rel) == 0:
            continue
        if not target.contains_many(m[rel.array()]).all():
            return False
    return True


def _equality_preserved(rel: "LabelRelation", target: "LabelRelation", m: np.ndarray) -> bool:
    # source tuples are the pairs with equal source labels; each such block must
    # land on a single target label
    left = target.maps[0][m]
    right = target.maps[1][m]
    for lab, us in rel._groups(0).items():
        vs = rel._groups(1).get(lab)
        if not vs:
            continue
        vals = set(left[us].tolist()) | set(right[vs].tolist())
        if len(vals) != 1:
            return False
    return True


# ---------------------------------------------------------------- constructions

def decode(i: int, base: int, n: int) -> tuple:
    """Digits of ``i`` in base ``base``, least significant first."""
    out = []
    for _ in range(n):
        i, r = divmod(i, base)
        out.append(r)
    return tuple(out)


def encode(digits: Sequence[int], base: int) -> int:
    v = 0
    for x in reversed(digits):
        v = v * base + x
    return v


def power_coords(base: int, n: int) -> np.ndarray:
    """Array of shape (base**n, n): row i holds the digits of i."""
    idx = np.arange(base ** n, dtype=np.int64)
    return np.stack([(idx // base ** j) % base for j in range(n)], axis=1) if n else idx[:, None]


def direct_power(A: FiniteStructure, n: int) -> FiniteStructure:
    if n < 1:
        raise ValueError("power exponent must be >= 1")
    size = A.size ** n
    check_cap("direct power domain", size, "domain")
    check_cap("direct power tuples", sum(len(A.rel(s)) ** n for s in A.signature.names), "tuples")
    weights = A.size ** np.arange(n, dtype=np.int64)
    rels = {}
    for name, k in A.signature:
        arr = A.rel(name).array()
        if len(arr) == 0:
            rels[name] = ()
            continue
        # pick one tuple of R per coordinate; entry j of the power tuple combines column j
        choice = np.array(list(itertools.product(range(len(arr)), repeat=n)), dtype=np.int64)
        picked = arr[choice]                         # (r^n, n, k)
        rels[name] = TupleRelation(k, size, np.einsum("cnk,n->ck", picked, weights))
    return FiniteStructure(A.signature, size, rels, name=f"{A.name}^{n}")


def quotient(A: FiniteStructure, P: Partition) -> FiniteStructure:
    if P.domain_size != A.size:
        raise ValueError("partition domain differs from structure size")
    ren = np.array(P.renumbering(), dtype=np.int64)
    k = P.num_classes
    rels = {n: TupleRelation(a, k, ren[A.rel(n).array()]) for n, a in A.signature}
    return FiniteStructure(A.signature, k, rels, name=f"{A.name}/~")


def induced_substructure(A: FiniteStructure, S: Iterable[int]) -> FiniteStructure:
    keep = sorted(set(S))
    if keep and (keep[0] < 0 or keep[-1] >= A.size):
        raise ValueError("subset exceeds the domain")
    pos = -np.ones(A.size, dtype=np.int64)
    pos[keep] = np.arange(len(keep))
    rels = {}
    for n, a in A.signature:
        arr = A.rel(n).array()
        if len(arr):
            arr = pos[arr]
            arr = arr[(arr >= 0).all(axis=1)]
        rels[n] = TupleRelation(a, len(keep), arr)
    labels = [A.label(i) for i in keep] if A.labels else None
    return FiniteStructure(A.signature, len(keep), rels, labels, A.name)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if ra < rb:
            self.parent[rb] = ra
        else:
            self.parent[ra] = rb
        return True


def equivalence_closure(domain_size: int, pairs: Iterable[tuple[int, int]]) -> Partition:
    uf = UnionFind(domain_size)
    for a, b in pairs:
        if not (0 <= a < domain_size and 0 <= b < domain_size):
            raise ValueError(f"pair {(a, b)} outside the domain")
        uf.union(a, b)
    return Partition(domain_size, tuple(uf.find(x) for x in range(domain_size)))


# ---------------------------------------------------------------- solver

def _bits(x: int) -> Iterator[int]:
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


def mask_from_bool(arr) -> int:
    arr = np.asarray(arr, dtype=bool)
    if not arr.any():
        return 0
    return int.from_bytes(np.packbits(arr, bitorder="little").tobytes(), "little")


def bool_from_mask(mask: int, n: int) -> np.ndarray:
    raw = np.frombuffer(mask.to_bytes((n + 7) // 8 or 1, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


class _LabelMap:
    """Label map over the target domain with per-label bit masks."""

    __slots__ = ("identity", "arr", "masks", "nlabels")

    def __init__(self, arr: Optional[np.ndarray], size: int):
        self.identity = arr is None
        self.arr = arr
        if arr is None:
            self.nlabels = size
            self.masks = None
        else:
            self.nlabels = int(arr.max(initial=-1)) + 1
            order = np.argsort(arr, kind="stable")
            bounds = np.searchsorted(arr[order], np.arange(self.nlabels + 1))
            masks = []
            for lab in range(self.nlabels):
                members = order[bounds[lab]:bounds[lab + 1]]
                b = np.zeros(size, dtype=bool)
                b[members] = True
                masks.append(mask_from_bool(b))
            self.masks = masks

    def present(self, dom: int) -> int:
        if self.identity:
            return dom
        out = 0
        for lab, m in enumerate(self.masks):
            if dom & m:
                out |= 1 << lab
        return out

    def expand(self, labmask: int) -> int:
        if self.identity:
            return labmask
        out = 0
        for lab in _bits(labmask):
            out |= self.masks[lab]
        return out


def _label_map(A: FiniteStructure, key, arr) -> _LabelMap:
    cache = A._solver_cache.setdefault("lmaps", {})
    lm = cache.get(key)
    if lm is None:
        lm = cache[key] = _LabelMap(arr, A.size)
    return lm


class _Fail(Exception):
    pass


class _BinTable:
    """GAC for a binary label table between two distinct variables."""

    __slots__ = ("vars", "l1", "l2", "fwd", "bwd")

    def __init__(self, u, v, l1, l2, fwd, bwd):
        self.vars = (u, v)
        self.l1, self.l2, self.fwd, self.bwd = l1, l2, fwd, bwd

    def revise(self, doms):
        u, v = self.vars
        du, dv = doms[u], doms[v]
        p1, p2 = self.l1.present(du), self.l2.present(dv)
        ok1 = 0
        fwd = self.fwd
        for a in _bits(p1):
            if fwd[a] & p2:
                ok1 |= 1 << a
        ok2 = 0
        bwd = self.bwd
        for b in _bits(p2):
            if bwd[b] & ok1:
                ok2 |= 1 << b
        changed = []
        if ok1 != p1:
            nd = du & self.l1.expand(ok1)
            if not nd:
                raise _Fail
            doms[u] = nd
            changed.append(u)
        if ok2 != p2:
            nd = dv & self.l2.expand(ok2)
            if not nd:
                raise _Fail
            doms[v] = nd
            changed.append(v)
        return changed


class _Table:
    """GAC for a k-ary label table over distinct variables (row scanning)."""

    __slots__ = ("vars", "lmaps", "rows")

    def __init__(self, vars_, lmaps, rows):
        self.vars, self.lmaps, self.rows = vars_, lmaps, rows

    def revise(self, doms):
        pres = [lm.present(doms[v]) for v, lm in zip(self.vars, self.lmaps)]
        k = len(self.vars)
        ok = [0] * k
        for row in self.rows:
            for j in range(k):
                if not (pres[j] >> row[j]) & 1:
                    break
            else:
                for j in range(k):
                    ok[j] |= 1 << row[j]
        changed = []
        for j, v in enumerate(self.vars):
            if ok[j] != pres[j]:
                nd = doms[v] & self.lmaps[j].expand(ok[j])
                if not nd:
                    raise _Fail
                if nd != doms[v]:
                    doms[v] = nd
                    changed.append(v)
        return changed


class _EqualLabels:
    """All members ``(var, labelmap)`` must carry the same label."""

    __slots__ = ("vars", "lmaps")

    def __init__(self, vars_, lmaps):
        self.vars, self.lmaps = vars_, lmaps

    def revise(self, doms):
        ok = -1
        for v, lm in zip(self.vars, self.lmaps):
            ok &= lm.present(doms[v])
            if not ok:
                raise _Fail
        changed = []
        for v, lm in zip(self.vars, self.lmaps):
            nd = doms[v] & lm.expand(ok)
            if nd != doms[v]:
                if not nd:
                    raise _Fail
                doms[v] = nd
                changed.append(v)
        return changed


class _Check:
    """Forward checking for relations too large to scan (membership tests only)."""

    __slots__ = ("vars", "pos", "rel")

    def __init__(self, vars_, pos, rel):
        self.vars, self.pos, self.rel = vars_, pos, rel

    def revise(self, doms):
        open_ = [v for v in dict.fromkeys(self.vars) if doms[v] & (doms[v] - 1)]
        if len(open_) > 1:
            return []
        val = {v: doms[v].bit_length() - 1 for v in self.vars}
        if not open_:
            if tuple(val[self.vars[p]] for p in self.pos) not in self.rel:
                raise _Fail
            return []
        w = open_[0]
        nd = 0
        for a in _bits(doms[w]):
            val[w] = a
            if tuple(val[self.vars[p]] for p in self.pos) in self.rel:
                nd |= 1 << a
        if not nd:
            raise _Fail
        if nd != doms[w]:
            doms[w] = nd
            return [w]
        return []


class _AllDifferent:
    __slots__ = ("vars",)

    def __init__(self, vars_):
        self.vars = vars_

    def revise(self, doms):
        changed = []
        union = 0
        for v in self.vars:
            union |= doms[v]
        if bin(union).count("1") < len(self.vars):
            raise _Fail
        todo = [v for v in self.vars if not doms[v] & (doms[v] - 1)]
        seen = set()
        while todo:
            v = todo.pop()
            if v in seen:
                continue
            seen.add(v)
            bit = doms[v]
            for w in self.vars:
                if w != v and doms[w] & bit:
                    nd = doms[w] & ~bit
                    if not nd:
                        raise _Fail
                    doms[w] = nd
                    changed.append(w)
                    if not nd & (nd - 1):
                        todo.append(w)
        return changed


_SCAN_LIMIT = 20_000


class ConstraintProblem:
    """Variables ranging over the domain of a target structure.

    Constraints say that a tuple of variables must lie in a relation of the
    target.  Search order: variables by index, values ascending.
    """

    def __init__(self, n_vars: int, target: FiniteStructure):
        self.n = n_vars
        self.target = target
        self.full = (1 << target.size) - 1
        self.doms = [self.full] * n_vars
        self.cons: list = []
        self._var_cons: Optional[list] = None
        self._seen: set = set()
        # union-find over (var, label key) nodes for equality label relations
        self._eq_nodes: dict = {}
        self._eq_uf = UnionFind(0)
        self._eq_maps: dict = {}
        self._eq_arrays: dict = {}
        self.empty = target.size == 0 and n_vars > 0

    # -- building

    def restrict(self, var: int, mask: int) -> None:
        self.doms[var] &= mask
        if not self.doms[var]:
            self.empty = True

    def _eq_node(self, node) -> int:
        idx = self._eq_nodes.get(node)
        if idx is None:
            idx = self._eq_nodes[node] = len(self._eq_nodes)
            self._eq_uf.parent.append(idx)
        return idx

    def add_equal_labels(self, u: int, key_u, arr_u, v: int, key_v, arr_v) -> None:
        self._eq_arrays[key_u] = arr_u
        self._eq_arrays[key_v] = arr_v
        self._eq_uf.union(self._eq_node((u, key_u)), self._eq_node((v, key_v)))

    def add(self, scope: Sequence[int], rel: Relation) -> None:
        """Require ``scope`` (variables) to be mapped into ``rel`` (target relation)."""
        scope = tuple(scope)
        sig = (scope, id(rel))
        if sig in self._seen:
            return
        self._seen.add(sig)
        distinct = list(dict.fromkeys(scope))
        if len(distinct) == 1:
            self.restrict(distinct[0], self._loop_mask(rel))
            return
        if isinstance(rel, LabelRelation) and rel.is_equality:
            self.add_equal_labels(scope[0], rel.keys[0], rel.maps[0], scope[1], rel.keys[1], rel.maps[1])
            return
        if isinstance(rel, TupleRelation) and rel.arity >= 3 and len(rel) > _SCAN_LIMIT:
            self.cons.append(_Check(tuple(scope), tuple(range(len(scope))), rel))
            return
        lmaps, rows = self._table_for(scope, distinct, rel)
        if rows is None:
            return  # trivially satisfied
        if len(distinct) == 2:
            fwd = [0] * lmaps[0].nlabels
            bwd = [0] * lmaps[1].nlabels
            for a, b in rows:
                fwd[a] |= 1 << b
                bwd[b] |= 1 << a
            self.cons.append(_BinTable(distinct[0], distinct[1], lmaps[0], lmaps[1], fwd, bwd))
        else:
            self.cons.append(_Table(tuple(distinct), lmaps, rows))

    def _loop_mask(self, rel: Relation) -> int:
        cache = self.target._solver_cache.setdefault("loops", {})
        m = cache.get(id(rel))
        if m is None:
            m = cache[id(rel)] = (rel, mask_from_bool(rel.loop_mask()))
        return m[1]

    def _table_for(self, scope, distinct, rel):
        cache = self.target._solver_cache.setdefault("tables", {})
        pattern = tuple(distinct.index(v) for v in scope)
        key = (id(rel), pattern)
        hit = cache.get(key)
        if hit is not None:
            return hit[1], hit[2]
        if isinstance(rel, LabelRelation):
            keys, maps, allowed = rel.keys, rel.maps, rel.allowed
        else:
            keys, maps, allowed = (("id",),) * rel.arity, (None,) * rel.arity, rel.tuples()
        groups = [[p for p, q in enumerate(pattern) if q == j] for j in range(len(distinct))]
        lmaps, translate = [], []
        for g in groups:
            if len(g) == 1 or all(maps[p] is None for p in g):
                p = g[0]
                lmaps.append(_label_map(self.target, keys[p], maps[p]))
                translate.append(None)
            else:
                cols = np.stack([maps[p] if maps[p] is not None
                                 else np.arange(self.target.size) for p in g], axis=1)
                uniq, inv = np.unique(cols, axis=0, return_inverse=True)
                ckey = ("combined",) + tuple(keys[p] for p in g)
                lmaps.append(_label_map(self.target, ckey, inv.reshape(-1).astype(np.int64)))
                translate.append({tuple(int(x) for x in r): i for i, r in enumerate(uniq)})
        rows = set()
        for row in allowed:
            out = []
            for g, tr in zip(groups, translate):
                labs = tuple(row[p] for p in g)
                if tr is None:
                    if len(set(labs)) != 1:
                        break
                    lab = labs[0]
                else:
                    lab = tr.get(labs)
                    if lab is None:
                        break
                out.append(lab)
            else:
                rows.add(tuple(out))
        rows = sorted(rows)
        full = 1
        for lm in lmaps:
            full *= lm.nlabels
        result = None if len(rows) == full else rows
        cache[key] = (rel, lmaps, result)
        return lmaps, result

    def all_different(self, vars_: Optional[Sequence[int]] = None) -> None:
        self.cons.append(_AllDifferent(tuple(range(self.n) if vars_ is None else vars_)))

    def _finish(self) -> None:
        if self._var_cons is not None:
            return
        comps: dict = {}
        for node, idx in self._eq_nodes.items():
            comps.setdefault(self._eq_uf.find(idx), []).append(node)
        for nodes in comps.values():
            per_var: dict = {}
            for v, key in nodes:
                per_var.setdefault(v, []).append(key)
            vars_, lms = [], []
            for v in sorted(per_var):
                keys = sorted(set(per_var[v]), key=repr)
                if len(keys) > 1:
                    base = self._eq_arrays[keys[0]]
                    agree = np.ones(self.target.size, dtype=bool)
                    for k in keys[1:]:
                        agree &= base == self._eq_arrays[k]
                    self.restrict(v, mask_from_bool(agree))
                vars_.append(v)
                lms.append(_label_map(self.target, keys[0], self._eq_arrays[keys[0]]))
            if len(vars_) > 1:
                self.cons.append(_EqualLabels(tuple(vars_), tuple(lms)))
        self._var_cons = [[] for _ in range(self.n)]
        for ci, c in enumerate(self.cons):
            for v in set(c.vars):
                self._var_cons[v].append(ci)

    # -- solving

    def _propagate(self, doms, queue_ids) -> bool:
        cons, var_cons = self.cons, self._var_cons
        queue = deque(queue_ids)
        inq = set(queue)
        try:
            while queue:
                ci = queue.popleft()
                inq.discard(ci)
                for v in cons[ci].revise(doms):
                    for cj in var_cons[v]:
                        if cj != ci and cj not in inq:
                            inq.add(cj)
                            queue.append(cj)
        except _Fail:
            return False
        return True

    def solutions(self) -> Iterator[list[int]]:
        self._finish()
        if self.empty or any(d == 0 for d in self.doms):
            return
        doms = list(self.doms)
        if not self._propagate(doms, range(len(self.cons))):
            return
        n = self.n

        def pick(d, start):
            for v in range(start, n):
                x = d[v]
                if x & (x - 1):
                    return v
            return -1

        var = pick(doms, 0)
        if var < 0:
            yield [x.bit_length() - 1 for x in doms]
            return
        stack = [[doms, var, doms[var]]]
        while stack:
            frame = stack[-1]
            base, v, rem = frame
            if not rem:
                stack.pop()
                continue
            low = rem & -rem
            frame[2] = rem ^ low
            nd = base[:]
            nd[v] = low
            if not self._propagate(nd, self._var_cons[v]):
                continue
            w = pick(nd, v + 1)
            if w < 0:
                yield [x.bit_length() - 1 for x in nd]
                continue
            stack.append([nd, w, nd[w]])

    def solve(self) -> Optional[list[int]]:
        return next(self.solutions(), None)


def _hom_problem(J: FiniteStructure, A: FiniteStructure, injective: bool,
                 reflect: bool = False) -> ConstraintProblem:
    same_signature_or_raise(J.signature, A.signature)
    prob = ConstraintProblem(J.size, A)
    for name, k in J.signature:
        rj, ra = J.rel(name), A.rel(name)
        if (isinstance(rj, LabelRelation) and rj.is_equality
                and isinstance(ra, LabelRelation) and ra.is_equality):
            _add_equality_by_labels(prob, rj, ra)
            continue
        for t in rj.tuples():
            prob.add(t, ra)
        if reflect:
            comp = _complement(A, name)
            present = set(rj.tuples())
            for t in itertools.product(range(J.size), repeat=k):
                if t not in present:
                    prob.add(t, comp)
    if injective and J.size > 1:
        prob.all_different()
    return prob


def _add_equality_by_labels(prob: ConstraintProblem, rj: LabelRelation, ra: LabelRelation) -> None:
    # source tuples (u, v) are exactly the pairs with equal source labels
    g1, g2 = rj._groups(0), rj._groups(1)
    for lab, left in g1.items():
        right = g2.get(lab)
        if not right:
            continue
        u0 = left[0]
        for u in left:
            if u == u0:
                continue
            prob.add_equal_labels(u0, ra.keys[0], ra.maps[0], u, ra.keys[0], ra.maps[0])
        for v in right:
            if u0 == v and ra.keys[0] == ra.keys[1]:
                continue
            prob.add_equal_labels(u0, ra.keys[0], ra.maps[0], v, ra.keys[1], ra.maps[1])


def _complement(A: FiniteStructure, name: str) -> TupleRelation:
    cache = A._solver_cache.setdefault("complements", {})
    if name not in cache:
        k = A.signature.arity(name)
        check_cap("relation complement", A.size ** k, "tuples")
        rel = A.rel(name)
        allt = power_coords(A.size, k)[:, ::-1] if k else np.zeros((1, 0), dtype=np.int64)
        keep = ~rel.contains_many(allt) if len(allt) else np.zeros(0, dtype=bool)
        cache[name] = TupleRelation(k, A.size, allt[keep])
    return cache[name]


def find_homomorphism(J: FiniteStructure, A: FiniteStructure,
                      injective: bool = False) -> Optional[HomWitness]:
    sol = _hom_problem(J, A, injective).solve()
    return None if sol is None else HomWitness(tuple(sol), injective)


def iter_homomorphisms(J: FiniteStructure, A: FiniteStructure, injective: bool = False,
                       reflect: bool = False) -> Iterator[tuple]:
    for sol in _hom_problem(J, A, injective, reflect).solutions():
        yield tuple(sol)


def find_embedding(J: FiniteStructure, A: FiniteStructure) -> Optional[HomWitness]:
    if J.size > A.size:
        same_signature_or_raise(J.signature, A.signature)
        return None
    sol = _hom_problem(J, A, True, reflect=True).solve()
    return None if sol is None else HomWitness(tuple(sol), True)


def enumerate_automorphisms(A: FiniteStructure) -> list[tuple]:
    check_cap("automorphism search domain", A.size, "domain")
    return list(iter_homomorphisms(A, A, injective=True, reflect=True))


def compose(p: Sequence[int], q: Sequence[int]) -> tuple:
    """``p`` after ``q``."""
    return tuple(p[x] for x in q)


def orbit_quotient_finite(A: FiniteStructure, G: Sequence[Sequence[int]]) -> FiniteStructure:
    for g in G:
        g = tuple(g)
        if sorted(g) != list(range(A.size)):
            raise ValueError(f"{g} is not a permutation of the domain")
        for name in A.signature.names:
            for t in A.tuples(name):
                img = tuple(g[x] for x in t)
                if not A.holds(name, img):
                    raise ValueError(f"permutation {g} is not an automorphism: "
                                     f"{name}{t} maps to {name}{img}, which does not hold")
    part = equivalence_closure(A.size, ((x, g[x]) for g in G for x in range(A.size)))
    return quotient(A, part)
