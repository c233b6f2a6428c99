"""Finitely bounded classes of finite structures given by universal clauses.

A :class:`BoundSpec` describes the age of a (trusted) homogeneous structure
either by universal clauses, by forbidden finite substructures, or both.
:func:`enumerate_d_types` lists quantifier-free types of d-tuples, which
represent automorphism orbits when the presented structure is homogeneous.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .relcore import (FiniteStructure, Partition, Signature, check_cap,
                      find_embedding, induced_substructure, same_signature_or_raise)

EQ = "="


@dataclass(frozen=True)
class Literal:
    positive: bool
    symbol: str          # relation name, or "=" for equality
    args: tuple

    def __str__(self):
        sign = "" if self.positive else "!"
        return f"{sign}{self.symbol}({' '.join(f'x{a}' for a in self.args)})"


def lit(symbol: str, *args: int, positive: bool = True) -> Literal:
    return Literal(positive, symbol, tuple(args))


def neg(symbol: str, *args: int) -> Literal:
    return Literal(False, symbol, tuple(args))


@dataclass(frozen=True)
class Clause:
    """Universally quantified disjunction over variables ``0..variable_count-1``."""

    variable_count: int
    literals: tuple

    def __post_init__(self):
        object.__setattr__(self, "literals", tuple(self.literals))
        if not self.literals:
            raise ValueError("a clause needs at least one literal")
        for l in self.literals:
            if any(not 0 <= a < self.variable_count for a in l.args):
                raise ValueError(f"literal {l} uses a variable outside 0..{self.variable_count - 1}")
            if l.symbol == EQ and len(l.args) != 2:
                raise ValueError("equality literals take two variables")

    def __str__(self):
        return " | ".join(str(l) for l in self.literals)


def clause(*literals: Literal) -> Clause:
    """Build a clause; the variable count is one more than the largest index used."""
    n = 1 + max(a for l in literals for a in l.args)
    return Clause(n, tuple(literals))


@dataclass(frozen=True)
class BoundSpec:
    signature: Signature
    clauses: Optional[tuple] = ()
    forbidden: Optional[tuple] = None
    name: str = "spec"
    max_bound_size: int = 1

    def __post_init__(self):
        if self.clauses is None and self.forbidden is None:
            raise ValueError("a spec needs clauses or forbidden structures")
        if self.clauses is not None:
            object.__setattr__(self, "clauses", tuple(self.clauses))
            for c in self.clauses:
                for l in c.literals:
                    if l.symbol != EQ:
                        if l.symbol not in self.signature:
                            raise ValueError(f"clause uses unknown symbol {l.symbol!r}")
                        if self.signature.arity(l.symbol) != len(l.args):
                            raise ValueError(f"literal {l} has wrong arity")
                if c.variable_count > self.max_bound_size:
                    raise ValueError(f"clause with {c.variable_count} variables exceeds "
                                     f"max_bound_size {self.max_bound_size}")
        if self.forbidden is not None:
            object.__setattr__(self, "forbidden", tuple(self.forbidden))
            for F in self.forbidden:
                if F.signature != self.signature:
                    raise ValueError("forbidden structure over a different signature")
                if F.size > self.max_bound_size:
                    raise ValueError("forbidden structure larger than max_bound_size")

    def with_clauses(self, extra: Iterable[Clause], name: Optional[str] = None,
                     signature: Optional[Signature] = None,
                     max_bound_size: Optional[int] = None) -> "BoundSpec":
        return BoundSpec(signature or self.signature, tuple(self.clauses or ()) + tuple(extra),
                         None, name or self.name,
                         max(self.max_bound_size, max_bound_size or 0))


# ---------------------------------------------------------------- membership

def _clause_holds(F: FiniteStructure, c: Clause) -> bool:
    n, v = F.size, c.variable_count
    if n == 0:
        return True
    check_cap("clause assignments", n ** v, "tuples")
    assign = np.array(list(itertools.product(range(n), repeat=v)), dtype=np.int64)
    ok = np.zeros(len(assign), dtype=bool)
    for l in c.literals:
        if l.symbol == EQ:
            val = assign[:, l.args[0]] == assign[:, l.args[1]]
        else:
            val = F.rel(l.symbol).contains_many(assign[:, list(l.args)])
        ok |= val if l.positive else ~val
        if ok.all():
            return True
    return bool(ok.all())


def violated_clause(spec: BoundSpec, F: FiniteStructure) -> Optional[Clause]:
    for c in spec.clauses or ():
        if not _clause_holds(F, c):
            return c
    return None


def in_age(spec: BoundSpec, F: FiniteStructure) -> bool:
    same_signature_or_raise(spec.signature, F.signature)
    by_clauses = by_bounds = None
    if spec.clauses is not None:
        by_clauses = violated_clause(spec, F) is None
    if spec.forbidden is not None:
        by_bounds = not any(B.size <= F.size and find_embedding(B, F) is not None
                            for B in spec.forbidden)
    if by_clauses is not None and by_bounds is not None:
        assert by_clauses == by_bounds, f"clause and bound backends disagree on {F!r}"
    return by_clauses if by_clauses is not None else by_bounds


def builtin_linear_order(symbol_name: str = "<") -> BoundSpec:
    s = symbol_name
    return BoundSpec(
        Signature([(s, 2)]),
        (
            clause(neg(s, 0, 0)),
            clause(lit(s, 0, 1), lit(EQ, 0, 1), lit(s, 1, 0)),
            clause(neg(s, 0, 1), neg(s, 1, 2), lit(s, 0, 2)),
        ),
        None, f"linear({s})", 3)


# ---------------------------------------------------------------- enumeration helpers

def all_structures(sig: Signature, n: int) -> Iterable[FiniteStructure]:
    """Every labeled structure on ``n`` points (powerset enumeration, small n only)."""
    atoms = [(name, t) for name, k in sig for t in itertools.product(range(n), repeat=k)]
    check_cap("structure enumeration", 2 ** len(atoms), "tuples")
    for bits in range(2 ** len(atoms)):
        rels: dict = {name: [] for name in sig.names}
        for i, (name, t) in enumerate(atoms):
            if bits >> i & 1:
                rels[name].append(t)
        yield FiniteStructure(sig, n, rels)


def _canonical_copy(F: FiniteStructure) -> tuple:
    best = None
    for perm in itertools.permutations(range(F.size)):
        form = tuple(tuple(sorted(tuple(perm[x] for x in t) for t in F.tuples(n)))
                     for n in F.signature.names)
        if best is None or form < best:
            best = form
    return best


def _from_form(sig: Signature, n: int, form: tuple) -> FiniteStructure:
    return FiniteStructure(sig, n, dict(zip(sig.names, form)))


def forbidden_bounds(spec: BoundSpec, max_size: int) -> list[FiniteStructure]:
    """Minimal non-members of size <= max_size, one per isomorphism type."""
    if max_size < spec.max_bound_size:
        raise ValueError(f"max_size {max_size} is below max_bound_size {spec.max_bound_size}")
    if spec.clauses is not None and not spec.clauses:
        return []
    found: dict = {}
    for n in range(1, max_size + 1):
        for F in all_structures(spec.signature, n):
            if in_age(spec, F):
                continue
            if any(not in_age(spec, induced_substructure(F, [y for y in range(n) if y != x]))
                   for x in range(n)):
                continue
            form = _canonical_copy(F)
            found.setdefault((n, form), None)
    return [_from_form(spec.signature, n, form) for n, form in sorted(found)]


# ---------------------------------------------------------------- d-types

def restricted_growth(seq: Sequence) -> tuple:
    """Relabel ``seq`` by order of first occurrence: (5,2,5) -> (0,1,0)."""
    seen: dict = {}
    return tuple(seen.setdefault(x, len(seen)) for x in seq)


def restricted_growth_strings(d: int) -> list[tuple]:
    out = []

    def rec(prefix, m):
        if len(prefix) == d:
            out.append(tuple(prefix))
            return
        for c in range(m + 1):
            rec(prefix + [c], max(m, c + 1))

    rec([], 0)
    return out


def _ground(spec: BoundSpec, k: int, atom_index: dict, new_point: Optional[int]):
    """Ground clauses on ``k`` distinct points; keep groundings touching ``new_point``."""
    out = set()
    for c in spec.clauses or ():
        for assign in itertools.product(range(k), repeat=c.variable_count):
            if new_point is not None and new_point not in assign:
                continue
            lits = []
            sat = False
            for l in c.literals:
                args = tuple(assign[a] for a in l.args)
                if l.symbol == EQ:
                    if (args[0] == args[1]) == l.positive:
                        sat = True
                        break
                    continue
                lits.append((atom_index[(l.symbol, args)], l.positive))
            if sat:
                continue
            lits = tuple(sorted(set(lits)))
            if any((a, not p) in lits for a, p in lits):
                continue
            out.add(lits)
    return sorted(out)


def _all_models(n_atoms: int, clauses: list, fixed: dict) -> list[dict]:
    """All total assignments of atoms satisfying ``clauses`` (DPLL with unit propagation)."""
    occurs: list = [[] for _ in range(n_atoms)]
    for ci, cl in enumerate(clauses):
        for a, _ in cl:
            occurs[a].append(ci)
    free = [a for a in range(n_atoms) if a not in fixed]
    models = []
    val = dict(fixed)

    def propagate(trail_start_atoms):
        queue = list(trail_start_atoms)
        assigned = []
        while queue:
            a = queue.pop()
            for ci in occurs[a]:
                unassigned = None
                count = 0
                sat = False
                for b, p in clauses[ci]:
                    vb = val.get(b)
                    if vb is None:
                        count += 1
                        unassigned = (b, p)
                    elif vb == p:
                        sat = True
                        break
                if sat:
                    continue
                if count == 0:
                    return False, assigned
                if count == 1:
                    b, p = unassigned
                    val[b] = p
                    assigned.append(b)
                    queue.append(b)
        return True, assigned

    units = []
    for cl in clauses:
        if not cl:
            return []
        if len(cl) == 1:
            a, p = cl[0]
            if a in val:
                if val[a] != p:
                    return []
            else:
                val[a] = p
                units.append(a)
    ok, _ = propagate(list(fixed) + units)
    if not ok:
        return []

    def rec(i):
        while i < len(free) and free[i] in val:
            i += 1
        if i == len(free):
            models.append(dict(val))
            return
        a = free[i]
        for choice in (False, True):
            val[a] = choice
            ok, assigned = propagate([a])
            if ok:
                rec(i + 1)
            for b in assigned:
                del val[b]
            del val[a]

    rec(0)
    return models


def _models_on(spec: BoundSpec, k: int, cache: dict) -> list[tuple]:
    """Canonical forms of all labeled age members on ``k`` points, sorted."""
    if k in cache:
        return cache[k]
    sig = spec.signature
    if k == 0:
        cache[0] = [tuple(() for _ in sig.names)]
        return cache[0]
    atoms = [(name, t) for name, a in sig for t in itertools.product(range(k), repeat=a)]
    atom_index = {at: i for i, at in enumerate(atoms)}
    clauses = _ground(spec, k, atom_index, k - 1)
    out = []
    for prev in _models_on(spec, k - 1, cache):
        fixed = {}
        for name, tuples in zip(sig.names, prev):
            present = set(tuples)
            for t in itertools.product(range(k - 1), repeat=sig.arity(name)):
                fixed[atom_index[(name, t)]] = t in present
        for model in _all_models(len(atoms), clauses, fixed):
            form = tuple(tuple(sorted(t for t in itertools.product(range(k), repeat=a)
                                      if model[atom_index[(name, t)]]))
                         for name, a in sig)
            out.append(form)
        check_cap("type enumeration", len(out), "types")
    out.sort()
    cache[k] = out
    return out


class DTypeTable:
    """Quantifier-free types of d-tuples: (equality pattern, structure on the classes)."""

    def __init__(self, d: int, signature: Signature, forms: list):
        self.d = d
        self.signature = signature
        self.forms = forms                      # list of (rgs, relation form)
        self.index = {f: i for i, f in enumerate(forms)}
        self._facts = None

    def __len__(self):
        return len(self.forms)

    @property
    def types(self) -> list:
        return [(Partition(self.d, self.pattern(i)), self.structure(i)) for i in range(len(self))]

    def pattern(self, i: int) -> tuple:
        return self.forms[i][0]

    def classes(self, i: int) -> int:
        return 1 + max(self.forms[i][0], default=-1)

    def structure(self, i: int) -> FiniteStructure:
        rgs, form = self.forms[i]
        return FiniteStructure(self.signature, self.classes(i), dict(zip(self.signature.names, form)))

    def facts(self, i: int) -> frozenset:
        """Set of ``(symbol, class tuple)`` facts of entry ``i``."""
        if self._facts is None:
            self._facts = [frozenset((n, t) for n, ts in zip(self.signature.names, form) for t in ts)
                           for _, form in self.forms]
        return self._facts[i]

    def holds(self, i: int, symbol: str, coords: Sequence[int]) -> bool:
        """Does ``symbol`` hold on the given (0-based) coordinates of type ``i``?"""
        rgs = self.forms[i][0]
        return (symbol, tuple(rgs[c] for c in coords)) in self.facts(i)

    def restrict(self, i: int, coords: Sequence[int]) -> tuple:
        """Canonical form of the type of the sub-tuple at ``coords`` (0-based, repeats allowed)."""
        rgs, form = self.forms[i]
        cls = [rgs[c] for c in coords]
        new_rgs = restricted_growth(cls)
        order = list(dict.fromkeys(cls))
        pos = {c: j for j, c in enumerate(order)}
        keep = set(order)
        sub = tuple(tuple(sorted(tuple(pos[x] for x in t) for t in ts if set(t) <= keep))
                    for ts in form)
        return (new_rgs, sub)

    def describe(self, i: int) -> str:
        rgs, form = self.forms[i]
        parts = ["".join(str(c) for c in rgs)]
        for name, ts in zip(self.signature.names, form):
            for t in ts:
                parts.append(f"{name}({' '.join(str(x) for x in t)})")
        return " ".join(parts)

    def serialize(self) -> str:
        lines = [f"types d={self.d} count={len(self)}"]
        lines += [f"{i} {self.describe(i)}" for i in range(len(self))]
        return "\n".join(lines) + "\n"


def enumerate_d_types(spec: BoundSpec, d: int, _cache: Optional[dict] = None) -> DTypeTable:
    if d < 1:
        raise ValueError("d must be >= 1")
    if spec.clauses is None:
        raise ValueError("type enumeration needs the clause backend")
    cache = _cache if _cache is not None else {}
    forms = []
    for rgs in restricted_growth_strings(d):
        k = 1 + max(rgs)
        for form in _models_on(spec, k, cache):
            forms.append((rgs, form))
        check_cap("d-types", len(forms), "types")
    return DTypeTable(d, spec.signature, forms)


def type_of_tuple(T: DTypeTable, spec: BoundSpec, C: FiniteStructure, tup: Sequence[int],
                  check_age: bool = True) -> int:
    if len(tup) != T.d:
        raise ValueError(f"tuple length {len(tup)} differs from d={T.d}")
    if check_age and not in_age(spec, C):
        raise ValueError(f"structure is not in the age of {spec.name}")
    order = list(dict.fromkeys(tup))
    pos = {x: j for j, x in enumerate(order)}
    keep = set(order)
    form = tuple(tuple(sorted(tuple(pos[x] for x in t) for t in C.tuples(n) if set(t) <= keep))
                 for n in C.signature.names)
    key = (restricted_growth(tup), form)
    idx = T.index.get(key)
    if idx is None:
        raise KeyError("type of tuple is absent from the table (table/spec mismatch)")
    return idx
