"""Polymorphism and identity search, essential injectivity, and lifting of
homomorphisms from full powers into orbit templates.

An n-ary polymorphism ``f: S1^n -> S2`` is found as a homomorphism from the
n-th power of S1 into S2 in which input tuples forced equal by the identity
(rotations for cyclic, the Siggers/Olsak patterns, ...) share one variable.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .agespec import BoundSpec, DTypeTable, in_age
from .relcore import (ConstraintProblem, FiniteStructure, HomWitness, LabelRelation,
                      Partition, UnionFind, check_cap, decode, encode,
                      equivalence_closure, mask_from_bool, power_coords,
                      quotient, same_signature_or_raise)


@dataclass(frozen=True)
class OperationTable:
    arity: int
    domain_size: int            # size of the input domain
    values: tuple
    codomain_size: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if len(self.values) != self.domain_size ** self.arity:
            raise ValueError(f"table needs {self.domain_size ** self.arity} values, "
                             f"got {len(self.values)}")
        top = self.codomain_size if self.codomain_size is not None else self.domain_size
        if any(not 0 <= v < top for v in self.values):
            raise ValueError("table value outside the codomain")

    def __call__(self, *args: int) -> int:
        return self.values[encode(args, self.domain_size)]

    @classmethod
    def from_function(cls, fn, arity: int, m: int, codomain: Optional[int] = None) -> "OperationTable":
        return cls(arity, m, [fn(*decode(i, m, arity)) for i in range(m ** arity)], codomain)


@dataclass(frozen=True)
class IdentityKind:
    name: str                   # cyclic, siggers, olsak, none
    n: int = 0
    pseudo: bool = False

    @classmethod
    def cyclic(cls, n: int) -> "IdentityKind":
        if n < 2:
            raise ValueError("cyclic identities need arity >= 2")
        return cls("cyclic", n)

    @classmethod
    def commutative(cls) -> "IdentityKind":
        return cls("cyclic", 2)

    @classmethod
    def siggers(cls) -> "IdentityKind":
        return cls("siggers", 6)

    @classmethod
    def olsak(cls) -> "IdentityKind":
        return cls("olsak", 6)

    @classmethod
    def none(cls, n: int) -> "IdentityKind":
        return cls("none", n)

    @classmethod
    def parse(cls, text: str, n: Optional[int] = None) -> "IdentityKind":
        text = text.lower()
        if text == "cyclic":
            return cls.cyclic(n or 2)
        if text == "commutative":
            return cls.commutative()
        if text == "siggers":
            return cls.siggers()
        if text == "olsak":
            return cls.olsak()
        if text == "none":
            return cls.none(n or 1)
        raise ValueError(f"unknown identity kind {text!r}")

    @property
    def arity(self) -> int:
        return self.n

    def patterns(self) -> list:
        """Lists of argument patterns (over variables 0,1,2) required to agree."""
        if self.name == "cyclic":
            base = tuple(range(self.n))
            return [[base, base[1:] + base[:1]]]
        if self.name == "siggers":
            x, y, z = 0, 1, 2
            return [[(x, y, z, x, y, z), (y, z, x, z, x, y)]]
        if self.name == "olsak":
            x, y = 0, 1
            return [[(y, x, x, x, y, y), (x, y, x, y, x, y), (x, x, y, y, y, x)]]
        return []


# ---------------------------------------------------------------- checks

def preserves(f: OperationTable, S1: FiniteStructure, S2: Optional[FiniteStructure] = None) -> bool:
    S2 = S1 if S2 is None else S2
    same_signature_or_raise(S1.signature, S2.signature)
    if f.domain_size != S1.size:
        raise ValueError(f"table domain {f.domain_size} differs from |S1| = {S1.size}")
    if any(v >= S2.size for v in f.values):
        raise ValueError("table value outside S2")
    vals = np.array(f.values, dtype=np.int64)
    weights = S1.size ** np.arange(f.arity, dtype=np.int64)
    for name, k in S1.signature:
        arr = S1.rel(name).array()
        if len(arr) == 0:
            continue
        rel2 = S2.rel(name)
        for chunk in _power_rows(arr, f.arity):
            # chunk: (rows, arity, k) -- one tuple of S1's relation per argument
            images = vals[np.einsum("rnk,n->rk", chunk, weights)]
            if not rel2.contains_many(images).all():
                return False
    return True


def _power_rows(arr: np.ndarray, n: int, batch: int = 200_000):
    r = len(arr)
    total = r ** n
    for start in range(0, total, batch):
        idx = np.arange(start, min(total, start + batch), dtype=np.int64)
        choice = np.stack([(idx // r ** j) % r for j in range(n)], axis=1)
        yield arr[choice]


def satisfies_identity(f: OperationTable, kind: IdentityKind) -> bool:
    if kind.name == "none":
        return True
    if f.arity != kind.arity:
        raise ValueError(f"arity {f.arity} does not match {kind.name} arity {kind.arity}")
    m = f.domain_size
    for group in kind.patterns():
        nvars = 1 + max(max(p) for p in group)
        for assign in itertools.product(range(m), repeat=nvars):
            vals = {f(*(assign[v] for v in p)) for p in group}
            if len(vals) > 1:
                return False
    return True


def i4_preserved(f: OperationTable) -> bool:
    """Does f preserve ``{(x,y,u,v) | x=y => u=v}`` on its domain?"""
    m, n = f.domain_size, f.arity
    vals = np.array(f.values)
    # columns (x_i, y_i, u_i, v_i); only columns with x_i = y_i or u_i != v_i are allowed
    cols = [c for c in itertools.product(range(m), repeat=4) if c[0] != c[1] or c[2] == c[3]]
    check_cap("I4 preservation check", len(cols) ** n, "tuples")
    cols = np.array(cols, dtype=np.int64)
    weights = m ** np.arange(n, dtype=np.int64)
    for chunk in _power_rows(cols, n):
        img = vals[np.einsum("rnk,n->rk", chunk, weights)]
        bad = (img[:, 0] == img[:, 1]) & (img[:, 2] != img[:, 3])
        if bad.any():
            return False
    return True


def essential_coordinates(f: OperationTable) -> list[int]:
    m, n = f.domain_size, f.arity
    arr = np.array(f.values).reshape((m,) * n, order="F")
    out = []
    for i in range(n):
        moved = np.moveaxis(arr, i, 0)
        if not (moved == moved[0:1]).all():
            out.append(i)
    return out


def check_essentially_injective(f: OperationTable, cross_check: bool = True) -> bool:
    m, n = f.domain_size, f.arity
    ess = essential_coordinates(f)
    seen = {}
    result = True
    for i, v in enumerate(f.values):
        key = tuple(decode(i, m, n)[j] for j in ess)
        if seen.setdefault(v, key) != key:
            result = False
            break
    if cross_check and m ** (4 * n) <= 5_000_000:
        assert result == i4_preserved(f), "essential injectivity disagrees with I4 preservation"
    return result


# ---------------------------------------------------------------- search

def identification_classes(m: int, kind: IdentityKind) -> tuple[np.ndarray, np.ndarray]:
    """Class id of every tuple in [m]^n (encoded as in direct powers), plus class reps.

    Classes are numbered by the lexicographic order of their least member
    (tuples compared from the first argument on).
    """
    n = kind.arity
    size = m ** n
    coords = power_coords(m, n)
    lexkey = coords @ (m ** np.arange(n - 1, -1, -1, dtype=np.int64))   # first arg most significant
    if kind.name == "cyclic":
        weights = m ** np.arange(n, dtype=np.int64)
        best_lex = lexkey.copy()
        best_code = np.arange(size, dtype=np.int64)
        for s in range(1, n):
            rot = np.roll(coords, -s, axis=1)
            lk = rot @ (m ** np.arange(n - 1, -1, -1, dtype=np.int64))
            better = lk < best_lex
            best_lex = np.where(better, lk, best_lex)
            best_code = np.where(better, rot @ weights, best_code)
        rep_code = best_code
    else:
        uf = UnionFind(size)
        for group in kind.patterns():
            nvars = 1 + max(max(p) for p in group)
            for assign in itertools.product(range(m), repeat=nvars):
                codes = [encode([assign[v] for v in p], m) for p in group]
                for c in codes[1:]:
                    uf.union(codes[0], c)
        root = np.array([uf.find(i) for i in range(size)], dtype=np.int64)
        # representative = lex-least member
        order = np.lexsort((lexkey, root))
        first = {}
        for i in order.tolist():
            first.setdefault(int(root[i]), i)
        rep_code = np.array([first[int(r)] for r in root], dtype=np.int64)
    reps = np.unique(rep_code)
    reps = reps[np.argsort(lexkey[reps], kind="stable")]
    class_id = np.empty(size, dtype=np.int64)
    pos = np.full(size, -1, dtype=np.int64)
    pos[reps] = np.arange(len(reps))
    class_id[:] = pos[rep_code]
    return class_id, reps


def _loop_screen(S1: FiniteStructure, S2: FiniteStructure, kind: IdentityKind,
                 class_id: np.ndarray, reps: np.ndarray) -> Optional[list]:
    """Domains of classes from constraints whose scope is a single class.

    For cyclic identities the members of a class are the rotations of its
    representative; a relation tuple built only from such rotations forces
    the constant tuple ``(t,..,t)`` into the S2 relation.  Returns None if a
    class is left without values (no polymorphism exists).
    """
    n = kind.arity
    m = S1.size
    coords_rep = power_coords(m, n)[reps]                     # (C, n)
    nclass = len(reps)
    members = [np.roll(coords_rep, -s, axis=1) for s in range(n)] if kind.name == "cyclic" \
        else None
    if members is None:
        return [(1 << S2.size) - 1] * nclass
    signature_rows = np.zeros((nclass, len(S1.signature)), dtype=bool)
    loops = []
    for si, (name, k) in enumerate(S1.signature):
        r1 = S1.rel(name)
        hit = np.zeros(nclass, dtype=bool)
        for offs in itertools.product(range(n), repeat=k - 1):
            shifts = (0,) + offs
            ok = np.ones(nclass, dtype=bool)
            for col in range(n):
                rows = np.stack([members[s][:, col] for s in shifts], axis=1)
                ok &= r1.contains_many(rows)
                if not ok.any():
                    break
            hit |= ok
        signature_rows[:, si] = hit
        loops.append(mask_from_bool(S2.rel(name).loop_mask()) if hit.any() else None)
    full = (1 << S2.size) - 1
    uniq, inverse = np.unique(signature_rows, axis=0, return_inverse=True)
    doms_u = []
    for row in uniq:
        dom = full
        for si in np.nonzero(row)[0]:
            dom &= loops[si]
        doms_u.append(dom)
        if dom == 0:
            return None
    return [doms_u[i] for i in inverse.reshape(-1)]


def find_polymorphism(S1: FiniteStructure, S2: Optional[FiniteStructure], n: int,
                      kind: Optional[IdentityKind] = None) -> Optional[OperationTable]:
    S2 = S1 if S2 is None else S2
    same_signature_or_raise(S1.signature, S2.signature)
    kind = kind or IdentityKind.none(n)
    if kind.pseudo:
        raise NotImplementedError("pseudo identities are not searched; see pseudo_cyclic_collapse_check")
    if kind.name != "none" and kind.arity != n:
        raise ValueError(f"arity {n} does not match {kind.name} arity {kind.arity}")
    m = S1.size
    check_cap("power of S1", m ** n, "tuples")
    class_id, reps = identification_classes(m, kind)
    doms = _loop_screen(S1, S2, kind, class_id, reps)
    if doms is None:
        return None
    check_cap("search variables", len(reps), "search_vars")
    prob = ConstraintProblem(len(reps), S2)
    for v, dom in enumerate(doms):
        prob.restrict(v, dom)
    weights = m ** np.arange(n, dtype=np.int64)
    coords = power_coords(m, n)
    for name, k in S1.signature:
        rel1, rel2 = S1.rel(name), S2.rel(name)
        if (isinstance(rel1, LabelRelation) and rel1.is_equality
                and isinstance(rel2, LabelRelation) and rel2.is_equality):
            _equal_label_constraints(prob, rel1, rel2, coords, class_id)
            continue
        arr = rel1.array()
        if len(arr) == 0:
            continue
        check_cap("polymorphism constraints", len(arr) ** n, "tuples")
        for chunk in _power_rows(arr, n):
            scopes = class_id[np.einsum("rnk,n->rk", chunk, weights)]
            for scope in {tuple(r) for r in scopes.tolist()}:
                prob.add(scope, rel2)
    sol = prob.solve()
    if sol is None:
        return None
    values = np.array(sol, dtype=np.int64)[class_id]
    return OperationTable(n, m, values.tolist(), S2.size)


def _equal_label_constraints(prob: ConstraintProblem, rel1: LabelRelation, rel2: LabelRelation,
                             coords: np.ndarray, class_id: np.ndarray) -> None:
    # in the power, (x, y) is related iff the label vectors of x and y agree
    left = _label_vectors(rel1.maps[0], coords)
    right = _label_vectors(rel1.maps[1], coords)
    k0, k1 = rel2.keys
    a0, a1 = rel2.maps
    anchors = {}
    for lab, c in zip(left.tolist(), class_id.tolist()):
        anchors.setdefault(lab, c)
    present = set(right.tolist())
    for lab, c in zip(left.tolist(), class_id.tolist()):
        if lab in present and c != anchors[lab]:
            prob.add_equal_labels(anchors[lab], k0, a0, c, k0, a0)
    for lab, c in zip(right.tolist(), class_id.tolist()):
        u = anchors.get(lab)
        if u is not None and not (u == c and k0 == k1):
            prob.add_equal_labels(u, k0, a0, c, k1, a1)


def _label_vectors(arr: np.ndarray, coords: np.ndarray) -> np.ndarray:
    labs = np.asarray(arr, dtype=np.int64)[coords]
    width = int(labs.max()) + 1 if labs.size else 1
    return labs @ (width ** np.arange(coords.shape[1], dtype=np.int64))


def brute_force_polymorphisms(S1: FiniteStructure, S2: FiniteStructure, n: int,
                              kind: IdentityKind):
    """All tables (exhaustive, tiny inputs only) that preserve and satisfy ``kind``."""
    m = S1.size
    total = S2.size ** (m ** n)
    check_cap("exhaustive table enumeration", total, "tuples")
    for values in itertools.product(range(S2.size), repeat=m ** n):
        f = OperationTable(n, m, values, S2.size)
        if satisfies_identity(f, kind) and preserves(f, S1, S2):
            yield f


# ---------------------------------------------------------------- pseudo-cyclic collapse

def pseudo_cyclic_collapse_check(f: OperationTable, a1: Sequence[int], a2: Sequence[int]) -> bool:
    """``f`` on a chain 0<1<..<m-1 with strictly increasing a1, a2 and
    ``a1(f(x)) = a2(f(rot x))`` for all x must be cyclic."""
    m, n = f.domain_size, f.arity
    top = f.codomain_size or m
    for name, a in (("a1", a1), ("a2", a2)):
        if len(a) != top or any(a[i] >= a[i + 1] for i in range(len(a) - 1)):
            raise ValueError(f"{name} is not strictly increasing on the codomain")
    for i in range(m ** n):
        x = decode(i, m, n)
        rot = x[1:] + x[:1]
        if a1[f(*x)] != a2[f(*rot)]:
            raise ValueError(f"precondition fails at {x}: a1(f{x}) = {a1[f(*x)]} "
                             f"but a2(f{rot}) = {a2[f(*rot)]}")
    result = satisfies_identity(f, IdentityKind.cyclic(n))
    assert result, "pseudo-cyclic operation on a chain failed to be cyclic"
    return result


# ---------------------------------------------------------------- lifting

@dataclass
class LiftCertificate:
    aux: FiniteStructure            # X' over the signature of specBhat
    relation: Partition             # ~
    quotient: FiniteStructure       # X' / ~
    in_age: bool
    element_types: tuple            # 1-type index of each element's class
    hom_to_quotient: tuple          # g: X -> X~ (class index of each element)
    congruence: bool

    @property
    def positive(self) -> bool:
        return self.in_age and self.congruence


def lift_homomorphism(X: FiniteStructure, h: HomWitness, T: DTypeTable, specBhat: BoundSpec,
                      tauAhat: Sequence[str], d: int, S2: Optional[FiniteStructure] = None,
                      XD: Optional[FiniteStructure] = None) -> LiftCertificate:
    """Turn ``h: X^(d) -> S2`` into a structure X~ in the age and a map g: X -> X~."""
    from .construct import full_power_instance
    n = X.size
    if T.d != d or len(h.map) != n ** d:
        raise ValueError("homomorphism does not match X^(d)")
    if S2 is not None:
        XD = XD if XD is not None else full_power_instance(X, d)
        if not h.replay(XD, S2):
            raise ValueError("h fails replay as a homomorphism X^(d) -> S2")
    coords = power_coords(n, d)
    sig = specBhat.signature
    tmap = list(h.map)
    # X': a k-tuple is related iff some d-tuple extending it (via some map [k]->[d])
    # has an image type carrying the relation on those coordinates
    rels = {}
    for name, k in sig:
        found = set()
        for i, row in enumerate(coords.tolist()):
            t = tmap[i]
            for iota in itertools.product(range(d), repeat=k):
                if T.holds(t, name, iota):
                    found.add(tuple(row[j] for j in iota))
        rels[name] = sorted(found)
    Xp = FiniteStructure(sig, n, rels, name=f"{X.name}'")
    # the "for all extensions" formulation must agree
    for name, k in sig:
        present = set(rels[name])
        for prefix in itertools.product(range(n), repeat=k):
            every = all(T.holds(tmap[i], name, range(k))
                        for i, row in enumerate(coords.tolist()) if tuple(row[:k]) == prefix)
            if every != (prefix in present):
                raise AssertionError(f"{name}{prefix}: extension formulations disagree")
    pairs = []
    for i, row in enumerate(coords.tolist()):
        rgs = T.pattern(tmap[i])
        for a in range(d):
            for b in range(a + 1, d):
                if rgs[a] == rgs[b]:
                    pairs.append((row[a], row[b]))
    part = equivalence_closure(n, pairs)
    congruence = _is_congruence(Xp, part)
    Xq = quotient(Xp, part)
    ok = in_age(specBhat, Xq)
    if not ok:
        raise AssertionError("lifted quotient lies outside the age")
    ren = part.renumbering()
    one = [None] * n
    from .agespec import enumerate_d_types
    T1 = enumerate_d_types(specBhat, 1)
    for x in range(n):
        c = ren[x]
        form = tuple(tuple(sorted((0,) * len(t) for t in Xq.tuples(nm) if set(t) == {c}))
                     for nm in sig.names)
        one[x] = T1.index[((0,), form)]
    g = tuple(ren)
    # g must be a homomorphism from X to the tau-reduct of X~
    for name in X.signature.names:
        if name in sig:
            for t in X.tuples(name):
                if not Xq.holds(name, tuple(g[x] for x in t)):
                    raise AssertionError(f"lifted map breaks {name}{t}")
    return LiftCertificate(Xp, part, Xq, ok, tuple(one), g, congruence)


def _is_congruence(F: FiniteStructure, P: Partition) -> bool:
    cls = P.class_of
    for name in F.signature.names:
        present = set(F.tuples(name))
        images = {tuple(cls[x] for x in t) for t in present}
        for t in itertools.product(range(F.size), repeat=F.signature.arity(name)):
            if (tuple(cls[x] for x in t) in images) != (t in present):
                return False
    return True
