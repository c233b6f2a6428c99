"""Template constructions: wreath products, blowups, superpositions, full powers,
orbit templates, and the pipeline producing a finite PCSP pair.

Reserved symbol names: ``E`` (equivalence of the wreath product), ``neq``
(disequality), ``I4`` (``{(x,y,u,v) | x=y => u=v}``), ``<Q`` (the inner order
of the blowup) and ``<S`` (the order added by superposition).
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .agespec import (EQ, BoundSpec, Clause, DTypeTable, builtin_linear_order, clause,
                      enumerate_d_types, in_age, lit, neg, type_of_tuple, all_structures)
from .relcore import (FiniteStructure, LabelRelation, Signature, TupleRelation, check_cap,
                      is_homomorphism, power_coords)

E, NEQ, I4, INNER, SUPER = "E", "neq", "I4", "<Q", "<S"


def _require_disjoint(s1: Signature, s2: Signature) -> None:
    common = s1.shared(s2)
    if common:
        raise ValueError(f"signatures share the symbol {common[0]!r}")


# ---------------------------------------------------------------- wreath products

def wreath_finite(A: FiniteStructure, B: FiniteStructure) -> FiniteStructure:
    """Domain A x B; element (a, b) is encoded as ``b * |A| + a``."""
    _require_disjoint(A.signature, B.signature)
    for S in (A, B):
        if E in S.signature:
            raise ValueError(f"symbol {E!r} is reserved for the wreath equivalence")
    n, m = A.size, B.size
    check_cap("wreath domain", n * m, "domain")
    sig = Signature(list(A.signature) + [(E, 2)] + list(B.signature))
    rels = {E: [(b * n + a1, b * n + a2) for b in range(m) for a1 in range(n) for a2 in range(n)]}
    for name in A.signature.names:
        rels[name] = [tuple(b * n + a for a in t) for b in range(m) for t in A.tuples(name)]
    for name, k in B.signature:
        out = []
        for t in B.tuples(name):
            for firsts in itertools.product(range(n), repeat=k):
                out.append(tuple(b * n + a for a, b in zip(firsts, t)))
        rels[name] = out
    return FiniteStructure(sig, n * m, rels, name=f"{A.name}wr{B.name}")


def _pairs(m: int) -> list:
    return [(i, j) for i in range(m) for j in range(i + 1, m)]


def wreath_spec(specA: BoundSpec, specB: BoundSpec) -> BoundSpec:
    """Universal clauses for the age of the wreath product of the two presented structures."""
    _require_disjoint(specA.signature, specB.signature)
    for s in (specA, specB):
        if E in s.signature:
            raise ValueError(f"symbol {E!r} is reserved for the wreath equivalence")
        if s.clauses is None:
            raise ValueError(f"spec {s.name} has no clause backend")
    sig = Signature(list(specA.signature) + [(E, 2)] + list(specB.signature))
    out: list = []
    # E is an equivalence relation
    out.append(clause(lit(E, 0, 0)))
    out.append(clause(neg(E, 0, 1), lit(E, 1, 0)))
    out.append(clause(neg(E, 0, 1), neg(E, 1, 2), lit(E, 0, 2)))
    # E is a congruence for the outer relations
    for name, k in specB.signature:
        xs, ys = list(range(k)), list(range(k, 2 * k))
        blocked = [neg(E, x, y) for x, y in zip(xs, ys)]
        out.append(Clause(2 * k, tuple(blocked + [neg(name, *xs), lit(name, *ys)])))
        out.append(Clause(2 * k, tuple(blocked + [lit(name, *xs), neg(name, *ys)])))
    # the quotient by E satisfies the outer clauses: each clause holds unless
    # two distinct variables share a class (distributed into CNF)
    for c in specB.clauses:
        pairs = _pairs(c.variable_count)
        for choice in itertools.product((0, 1), repeat=len(pairs)):
            extra = [lit(E, i, j) if s == 0 else neg(EQ, i, j) for (i, j), s in zip(pairs, choice)]
            out.append(Clause(c.variable_count, c.literals + tuple(extra)))
    # inner relations live inside one class
    for name, k in specA.signature:
        for i, j in _pairs(k):
            out.append(Clause(k, (neg(name, *range(k)), lit(E, i, j))))
    # each class satisfies the inner clauses
    for c in specA.clauses:
        extra = tuple(neg(E, i, j) for i, j in _pairs(c.variable_count))
        out.append(Clause(c.variable_count, c.literals + extra))
    sigma_arity = specB.signature.max_arity
    mbs = max(3, 2 * sigma_arity, specA.max_bound_size, specB.max_bound_size)
    return BoundSpec(sig, tuple(out), None, f"({specA.name})wr({specB.name})", mbs)


def neq_clauses() -> list:
    return [clause(lit(NEQ, 0, 1), lit(EQ, 0, 1)), clause(neg(NEQ, 0, 0))]


def i4_clauses() -> list:
    # I4(x,y,u,v) <-> (x != y or u = v)
    return [
        Clause(4, (lit(I4, 0, 1, 2, 3), lit(EQ, 0, 1))),
        Clause(4, (lit(I4, 0, 1, 2, 3), neg(EQ, 2, 3))),
        Clause(4, (neg(I4, 0, 1, 2, 3), neg(EQ, 0, 1), lit(EQ, 2, 3))),
    ]


def blowup_spec(specB: BoundSpec, tau: Sequence[str], with_I4: bool = False):
    """Spec of ``(Q;<Q) wr B`` extended by ``neq`` (and ``I4``), plus the reduct names."""
    tau = list(tau)
    for name in tau:
        if name not in specB.signature:
            raise ValueError(f"{name!r} is not a symbol of {specB.name}")
    for reserved in (INNER, E, NEQ, I4):
        if reserved in specB.signature:
            raise ValueError(f"symbol {reserved!r} is reserved")
    base = wreath_spec(builtin_linear_order(INNER), specB)
    sig = base.signature.union(Signature([(NEQ, 2)] + ([(I4, 4)] if with_I4 else [])))
    extra = neq_clauses() + (i4_clauses() if with_I4 else [])
    spec = BoundSpec(sig, base.clauses + tuple(extra), None,
                     f"blowup({specB.name}{',I4' if with_I4 else ''})",
                     max(base.max_bound_size, 4 if with_I4 else 2))
    tau_up = tau + [E, NEQ] + ([I4] if with_I4 else [])
    return spec, tau_up


def superpose_specs(spec1: BoundSpec, spec2: BoundSpec) -> BoundSpec:
    _require_disjoint(spec1.signature, spec2.signature)
    for s in (spec1, spec2):
        if s.clauses is None:
            raise ValueError(f"spec {s.name} has no clause backend")
    return BoundSpec(spec1.signature.union(spec2.signature), spec1.clauses + spec2.clauses,
                     None, f"{spec1.name}*{spec2.name}",
                     max(spec1.max_bound_size, spec2.max_bound_size))


# ---------------------------------------------------------------- full powers

def _fmt(iota) -> str:
    return ",".join(str(i) for i in iota)


def unary_name(base: str, iota) -> str:
    return f"{base}@u[{_fmt(iota)}]"


def hat_name(base: str, iota) -> str:
    return f"{base}@h[{_fmt(iota)}]"


def compat_name(iota, iota2) -> str:
    return f"S@c{{{len(iota)}}}[{_fmt(iota)}|{_fmt(iota2)}]"


_NAME_RE = re.compile(r"^(?P<base>.+)@(?P<kind>[uh])\[(?P<iota>[\d,]+)\]$")
_COMPAT_RE = re.compile(r"^S@c\{(?P<k>\d+)\}\[(?P<i1>[\d,]+)\|(?P<i2>[\d,]+)\]$")


def parse_full_power_name(name: str):
    """Inverse of the naming scheme: returns (kind, base, iota, iota2, k); indices 1-based."""
    m = _COMPAT_RE.match(name)
    if m:
        i1 = tuple(int(x) for x in m["i1"].split(","))
        i2 = tuple(int(x) for x in m["i2"].split(","))
        return ("c", None, i1, i2, int(m["k"]))
    m = _NAME_RE.match(name)
    if m:
        iota = tuple(int(x) for x in m["iota"].split(","))
        return (m["kind"], m["base"], iota, None, len(iota))
    raise ValueError(f"{name!r} is not a full-power symbol")


def _injections(k: int, d: int):
    return list(itertools.permutations(range(1, d + 1), k))


def _functions(k: int, d: int):
    return list(itertools.product(range(1, d + 1), repeat=k))


def full_power_signature(sig: Signature, d: int) -> Signature:
    if sig.max_arity > d:
        big = next(n for n, a in sig if a > d)
        raise ValueError(f"symbol {big!r} has arity {sig.arity(big)} > d={d}")
    symbols = []
    for name, k in sig:
        symbols += [(unary_name(name, i), 1) for i in _injections(k, d)]
        symbols += [(hat_name(name, i), k) for i in _functions(k, d)]
    for k in range(1, sig.max_arity + 1):
        fs = _functions(k, d)
        symbols += [(compat_name(a, b), 2) for a in fs for b in fs]
    out = Signature(symbols)
    clash = [n for n in sig.names if n in out]
    if clash:
        raise ValueError(f"base symbol {clash[0]!r} collides with a derived name")
    return out


def full_power_finite(S: FiniteStructure, d: int) -> FiniteStructure:
    """The d-th full power; elements encoded as in :func:`relcore.direct_power`."""
    if d < 1:
        raise ValueError("d must be >= 1")
    sig = full_power_signature(S.signature, d)
    size = S.size ** d
    check_cap("full power domain", size, "domain")
    coords = power_coords(S.size, d)
    base = max(S.size, 1)
    rels = {}
    for name, k in S.signature:
        rel = S.rel(name)
        for iota in _injections(k, d):
            cols = [i - 1 for i in iota]
            mask = rel.contains_many(coords[:, cols]) if size else np.zeros(0, bool)
            rels[unary_name(name, iota)] = [(int(x),) for x in np.nonzero(mask)[0]]
        allowed = rel.tuples()
        for iota in _functions(k, d):
            labels = [(("coord", i), coords[:, i - 1]) for i in iota]
            rels[hat_name(name, iota)] = LabelRelation(size, labels, allowed)
    pulls = {}
    for k in range(1, S.signature.max_arity + 1):
        for iota in _functions(k, d):
            w = base ** np.arange(k, dtype=np.int64)
            pulls[iota] = coords[:, [i - 1 for i in iota]] @ w
        for a in _functions(k, d):
            for b in _functions(k, d):
                rels[compat_name(a, b)] = LabelRelation(
                    size, [(("pull", a), pulls[a]), (("pull", b), pulls[b])], None)
    return FiniteStructure(sig, size, rels, name=f"{S.name}^({d})")


def full_power_instance(J: FiniteStructure, d: int) -> FiniteStructure:
    """Instance-side map ``J -> J^(d)``; same construction as :func:`full_power_finite`."""
    return full_power_finite(J, d)


# ---------------------------------------------------------------- orbit template

def choose_d(spec: BoundSpec) -> int:
    return max(spec.max_bound_size, spec.signature.max_arity + 1, 1)


def orbit_template(specBhat: BoundSpec, tauAhat: Sequence[str], d: int,
                   _cache: Optional[dict] = None):
    """Full power of the tau-reduct factored by orbits of d-tuples (given as d-types)."""
    need = choose_d(specBhat)
    if d < need:
        raise ValueError(f"d={d} is too small: need d >= {need} "
                         f"(bounds <= d and arities <= d-1)")
    tau_sig = Signature([(n, specBhat.signature.arity(n)) for n in tauAhat])
    cache = _cache if _cache is not None else {}
    T = enumerate_d_types(specBhat, d, cache)
    n = len(T)
    check_cap("orbit template domain", n, "domain")
    maxk = tau_sig.max_arity
    small = {k: enumerate_d_types(specBhat, k, cache) for k in range(1, maxk + 1)}
    one = small.get(1) or enumerate_d_types(specBhat, 1, cache)
    onetype = {c: np.array([one.index[T.restrict(t, [c - 1])] for t in range(n)], dtype=np.int64)
               for c in range(1, d + 1)}
    pulls = {}
    for k in range(1, maxk + 1):
        Tk = small[k]
        for iota in _functions(k, d):
            cols = [i - 1 for i in iota]
            pulls[iota] = np.array([Tk.index[T.restrict(t, cols)] for t in range(n)], dtype=np.int64)
    sig = full_power_signature(tau_sig, d)
    rels = {}
    for name, k in tau_sig:
        for iota in _injections(k, d):
            cols = [i - 1 for i in iota]
            rels[unary_name(name, iota)] = [(t,) for t in range(n) if T.holds(t, name, cols)]
        Tk = small[k]
        allowed = set()
        for u in range(len(Tk)):
            if Tk.holds(u, name, list(range(k))):
                allowed.add(tuple(one.index[Tk.restrict(u, [j])] for j in range(k)))
        for iota in _functions(k, d):
            labels = [(("one", i), onetype[i]) for i in iota]
            rels[hat_name(name, iota)] = LabelRelation(n, labels, allowed)
    for k in range(1, maxk + 1):
        for a in _functions(k, d):
            for b in _functions(k, d):
                rels[compat_name(a, b)] = LabelRelation(
                    n, [(("pull", a), pulls[a]), (("pull", b), pulls[b])], None)
    S2 = FiniteStructure(sig, n, rels, labels=[f"t{i}" for i in range(n)], name="S2")
    _spot_check_types(T, specBhat)
    return S2, T


def _spot_check_types(T: DTypeTable, spec: BoundSpec, samples: int = 16) -> None:
    """Re-derive a spread of entries from their representatives."""
    step = max(1, len(T) // samples)
    for i in range(0, len(T), step):
        rep = T.structure(i)
        tup = list(T.pattern(i))
        if type_of_tuple(T, spec, rep, tup, check_age=False) != i:
            raise AssertionError(f"type entry {i} is not determined by its representative")


# ---------------------------------------------------------------- finite sides

def i4_tuples(n: int) -> np.ndarray:
    coords = power_coords(n, 4)
    keep = (coords[:, 0] != coords[:, 1]) | (coords[:, 2] == coords[:, 3])
    return coords[keep]


def hat_substructure(A_fin: FiniteStructure, tau: Sequence[str], with_I4: bool = False) -> FiniteStructure:
    if A_fin.size == 0:
        raise ValueError("hat substructure needs a nonempty structure")
    n = A_fin.size
    base = A_fin.reduct(tau)
    extra = [(E, 2), (NEQ, 2)] + ([(I4, 4)] if with_I4 else [])
    rels = {E: [(x, x) for x in range(n)],
            NEQ: [(x, y) for x in range(n) for y in range(n) if x != y]}
    if with_I4:
        rels[I4] = TupleRelation(4, n, i4_tuples(n))
    out = base.expand(Signature(extra), rels)
    return FiniteStructure(Signature([(t, A_fin.signature.arity(t)) for t in tau] + extra),
                           n, {s: out.rel(s) for s, _ in out.signature}, A_fin.labels,
                           f"{A_fin.name}^")


def finite_blowup_model(A_fin: FiniteStructure, m: int, with_I4: bool = False) -> FiniteStructure:
    """Domain [m] x A_fin; element (i, a) is encoded as ``a * m + i``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    n = A_fin.size
    size = m * n
    check_cap("blowup model domain", size, "domain")
    second = np.arange(size) // m
    rels = {}
    for name, k in A_fin.signature:
        out = []
        for t in A_fin.tuples(name):
            for rows in itertools.product(range(m), repeat=k):
                out.append(tuple(a * m + i for a, i in zip(t, rows)))
        rels[name] = out
    rels[E] = [(x, y) for x in range(size) for y in range(size) if second[x] == second[y]]
    rels[NEQ] = [(x, y) for x in range(size) for y in range(size) if x != y]
    extra = [(E, 2), (NEQ, 2)]
    if with_I4:
        check_cap("I4 relation", size ** 4, "tuples")
        rels[I4] = TupleRelation(4, size, i4_tuples(size))
        extra.append((I4, 4))
    sig = A_fin.signature.union(Signature(extra))
    return FiniteStructure(sig, size, rels, name=f"blowup({A_fin.name},{m})")


# ---------------------------------------------------------------- pipeline

@dataclass
class PcspTemplate:
    S1: FiniteStructure
    S2: FiniteStructure
    d: int
    type_table: DTypeTable
    quotient_map: tuple
    spec: BoundSpec
    provenance: dict = field(default_factory=dict)

    @property
    def signature(self) -> Signature:
        return self.S1.signature

    def verify(self) -> bool:
        return is_homomorphism(self.S1, self.S2, self.quotient_map)


def reduct_expansion(spec: BoundSpec, F: FiniteStructure) -> Optional[FiniteStructure]:
    """An expansion of ``F`` to the signature of ``spec`` lying in its age, if any."""
    missing = [(n, a) for n, a in spec.signature if n not in F.signature]
    full_sig = spec.signature
    if not missing:
        G = FiniteStructure(full_sig, F.size, {n: F.rel(n) for n in full_sig.names})
        return G if in_age(spec, G) else None
    for extra in all_structures(Signature(missing), F.size):
        rels = {n: (F.rel(n) if n in F.signature else extra.rel(n)) for n in full_sig.names}
        G = FiniteStructure(full_sig, F.size, rels)
        if in_age(spec, G):
            return G
    return None


def build_pcsp(specB: BoundSpec, tau: Sequence[str], S: FiniteStructure, with_I4: bool = False,
               d_override: Optional[int] = None) -> PcspTemplate:
    tau = list(tau)
    if S.size < 3:
        raise ValueError(f"|S| = {S.size}; the construction needs |S| >= 3")
    if sorted(S.signature.names) != sorted(tau):
        raise ValueError("S must be a structure over exactly the reduct symbols")
    expanded = reduct_expansion(specB, S)
    if expanded is None:
        raise ValueError(f"S is not in the age of the reduct of {specB.name}")
    spec_up, tau_up = blowup_spec(specB, tau, with_I4)
    spec_hat = superpose_specs(spec_up, builtin_linear_order(SUPER))
    need = choose_d(spec_hat)
    d = need if d_override is None else d_override
    if d < need:
        raise ValueError(f"d={d} is below the least admissible d={need}")
    Shat = hat_substructure(S, tau, with_I4)
    S1 = full_power_finite(Shat, d)
    S1.name = "S1"
    S2, T = orbit_template(spec_hat, tau_up, d)
    # a copy of S-hat inside the age of B-hat: distinct classes, order <S = index order
    n = S.size
    rels = {name: expanded.rel(name) for name in specB.signature.names}
    rels.update({INNER: [], E: [(x, x) for x in range(n)],
                 NEQ: [(x, y) for x in range(n) for y in range(n) if x != y],
                 SUPER: [(x, y) for x in range(n) for y in range(n) if x < y]})
    if with_I4:
        rels[I4] = TupleRelation(4, n, i4_tuples(n))
    C = FiniteStructure(spec_hat.signature, n, rels)
    if not in_age(spec_hat, C):
        raise AssertionError("hat copy of S is outside the age of the superposed blowup")
    coords = power_coords(n, d)
    qmap = tuple(type_of_tuple(T, spec_hat, C, tuple(int(x) for x in row), check_age=False)
                 for row in coords)
    tmpl = PcspTemplate(S1, S2, d, T, qmap, spec_hat, {
        "spec": specB.name, "tau": tau, "S": S.name, "with_I4": with_I4,
        "d_override": d_override, "reduct": tau_up, "superposed_order": SUPER,
        "hat_spec": spec_hat.name, "types": len(T)})
    if not tmpl.verify():
        raise AssertionError("type map S1 -> S2 failed replay")
    return tmpl
