"""A small positive Datalog engine, the programs used by the reductions, and the
instance-to-instance reductions themselves.

Rule text format, one rule per line::

    T(x,z) <- T(x,y), Lt(y,z).
    Sim(x,y) <- Dom(x), x = y.
    goal T(u,u).

Equality atoms (``x = y`` or ``=(x,y)``) are compiled away by unifying
variables when the program is loaded.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .construct import E, I4, NEQ
from .relcore import (FiniteStructure, Partition, Signature, UnionFind, equivalence_closure,
                      quotient)


class DatalogError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple

    def __str__(self):
        if self.pred == "=":
            return f"{self.args[0]} = {self.args[1]}"
        return f"{self.pred}({','.join(self.args)})"


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple

    def __str__(self):
        return f"{self.head} <- {', '.join(map(str, self.body))}."


def _unify(rule: Rule) -> Rule:
    uf: dict = {}

    def find(v):
        while uf.get(v, v) != v:
            v = uf[v]
        return v

    for a in rule.body:
        if a.pred == "=":
            x, y = find(a.args[0]), find(a.args[1])
            if x != y:
                uf[max(x, y)] = min(x, y)

    def sub(a):
        return Atom(a.pred, tuple(find(v) for v in a.args))

    return Rule(sub(rule.head), tuple(sub(a) for a in rule.body if a.pred != "="))


class DatalogProgram:
    def __init__(self, edb: Signature, idb: Signature, rules: Sequence[Rule],
                 goal: Optional[Atom] = None):
        if not edb.disjoint(idb):
            raise DatalogError(f"edb and idb share {edb.shared(idb)[0]!r}")
        self.edb, self.idb = edb, idb
        self.source_rules = tuple(rules)
        self.goal = goal
        compiled = []
        for r in rules:
            if r.head.pred not in idb:
                raise DatalogError(f"head {r.head} is not an idb predicate")
            for a in (r.head,) + tuple(r.body):
                if a.pred == "=":
                    if len(a.args) != 2:
                        raise DatalogError(f"equality atom {a} needs two arguments")
                    continue
                sig = idb if a.pred in idb else edb
                if a.pred not in sig:
                    raise DatalogError(f"unknown predicate {a.pred!r} in rule {r}")
                if sig.arity(a.pred) != len(a.args):
                    raise DatalogError(f"{a.pred} has arity {sig.arity(a.pred)}, used with "
                                       f"{len(a.args)} arguments in rule {r}")
            c = _unify(r)
            bound = {v for a in c.body for v in a.args}
            free = [v for v in c.head.args if v not in bound]
            if free:
                raise DatalogError(f"unsafe rule {r}: head variable {free[0]} does not "
                                   f"occur in a relational body atom")
            compiled.append(c)
        self.rules = tuple(compiled)
        if goal is not None and goal.pred not in idb and goal.pred not in edb:
            raise DatalogError(f"goal predicate {goal.pred!r} is unknown")

    def __str__(self):
        lines = [str(r) for r in self.source_rules]
        if self.goal is not None:
            lines.append(f"goal {self.goal}.")
        return "\n".join(lines) + "\n"


@dataclass
class Database:
    domain_size: int
    facts: dict = field(default_factory=dict)

    @classmethod
    def from_structure(cls, F: FiniteStructure, extra: Optional[dict] = None) -> "Database":
        facts = {name: set(F.tuples(name)) for name in F.signature.names}
        facts.update(extra or {})
        return cls(F.size, facts)

    def get(self, pred: str) -> set:
        return self.facts.get(pred, set())

    def to_structure(self, sig: Signature, name: str = "D") -> FiniteStructure:
        return FiniteStructure(sig, self.domain_size, {n: sorted(self.get(n)) for n in sig.names},
                               name=name)


# ---------------------------------------------------------------- evaluation

def _matches(atom: Atom, rel: Iterable[tuple], env: dict):
    args = atom.args
    for t in rel:
        new = env
        for v, x in zip(args, t):
            have = new.get(v)
            if have is None:
                if new is env:
                    new = dict(env)
                new[v] = x
            elif have != x:
                break
        else:
            yield new if new is not env else dict(env)


def _fire(rule: Rule, rels: list) -> set:
    """All head tuples derivable with body atom j ranging over ``rels[j]``."""
    envs = [{}]
    for atom, rel in zip(rule.body, rels):
        nxt = []
        for env in envs:
            nxt.extend(_matches(atom, rel, env))
        envs = nxt
        if not envs:
            return set()
    return {tuple(env[v] for v in rule.head.args) for env in envs}


def evaluate(p: DatalogProgram, db: Database) -> Database:
    for name in p.edb.names:
        for t in db.get(name):
            if len(t) != p.edb.arity(name) or any(not 0 <= x < db.domain_size for x in t):
                raise DatalogError(f"fact {name}{t} does not match the database")
    full = {n: set(db.get(n)) for n in p.edb.names}
    for n in p.idb.names:
        full[n] = set()
    # first round: every rule with full (empty idb) relations
    delta = {n: set() for n in p.idb.names}
    for r in p.rules:
        delta[r.head.pred] |= _fire(r, [full[a.pred] for a in r.body])
    while any(delta.values()):
        for n, new in delta.items():
            full[n] |= new
        nxt = {n: set() for n in p.idb.names}
        for r in p.rules:
            for j, a in enumerate(r.body):
                if not delta.get(a.pred):
                    continue
                rels = [full[b.pred] for b in r.body]
                rels[j] = delta[a.pred]
                nxt[r.head.pred] |= _fire(r, rels)
        delta = {n: s - full[n] for n, s in nxt.items()}
    out = dict(db.facts)
    out.update({n: full[n] for n in p.idb.names})
    return Database(db.domain_size, out)


def evaluate_naive(p: DatalogProgram, db: Database) -> Database:
    """Plain inflationary iteration; the reference for :func:`evaluate`."""
    full = {n: set(db.get(n)) for n in p.edb.names}
    for n in p.idb.names:
        full[n] = set()
    while True:
        new = {n: set(s) for n, s in full.items()}
        for r in p.rules:
            new[r.head.pred] |= _fire(r, [full[a.pred] for a in r.body])
        if new == full:
            break
        full = new
    out = dict(db.facts)
    out.update({n: full[n] for n in p.idb.names})
    return Database(db.domain_size, out)


def goal_holds(p: DatalogProgram, db: Database) -> bool:
    if p.goal is None:
        raise DatalogError("program has no goal")
    return any(True for _ in _matches(p.goal, db.get(p.goal.pred), {}))


# ---------------------------------------------------------------- parsing

_ATOM = re.compile(r"\s*(?:(?P<pred>[^\s(),.=!]+|=)\s*\((?P<args>[^()]*)\)|"
                   r"(?P<lhs>\w+)\s*=\s*(?P<rhs>\w+))\s*")


def _parse_atoms(text: str, lineno: int) -> list:
    out, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _ATOM.match(text, pos)
        if not m:
            raise DatalogError(f"line {lineno}: cannot parse atom at {text[pos:]!r}")
        if m.group("lhs"):
            out.append(Atom("=", (m.group("lhs"), m.group("rhs"))))
        else:
            args = tuple(a.strip() for a in m.group("args").split(",") if a.strip())
            out.append(Atom(m.group("pred"), args))
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise DatalogError(f"line {lineno}: expected ',' at column {pos + 1}")
            pos += 1
    return out


def parse_program(text: str, edb: Signature) -> DatalogProgram:
    """Parse rule text; predicates in heads become the idb."""
    rules, goal = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not line.endswith("."):
            raise DatalogError(f"line {lineno}: rule must end with '.'")
        line = line[:-1]
        if line.startswith("goal "):
            atoms = _parse_atoms(line[5:], lineno)
            if len(atoms) != 1:
                raise DatalogError(f"line {lineno}: goal must be a single atom")
            goal = atoms[0]
            continue
        if "<-" not in line:
            raise DatalogError(f"line {lineno}: expected '<-'")
        head_txt, body_txt = line.split("<-", 1)
        head = _parse_atoms(head_txt, lineno)
        if len(head) != 1 or head[0].pred == "=":
            raise DatalogError(f"line {lineno}: rule head must be one relational atom")
        rules.append(Rule(head[0], tuple(_parse_atoms(body_txt, lineno))))
    idb = {}
    for r in rules:
        k = idb.setdefault(r.head.pred, len(r.head.args))
        if k != len(r.head.args):
            raise DatalogError(f"idb predicate {r.head.pred} used with two arities")
    return DatalogProgram(edb, Signature(sorted(idb.items())), rules, goal)


# ---------------------------------------------------------------- concrete programs

def transitive_closure_program(symbol: str = "<") -> DatalogProgram:
    a = lambda p, *v: Atom(p, v)
    rules = [Rule(a("T", "x", "y"), (a(symbol, "x", "y"),)),
             Rule(a("T", "x", "z"), (a("T", "x", "y"), a(symbol, "y", "z")))]
    return DatalogProgram(Signature([(symbol, 2)]), Signature([("T", 2)]), rules,
                          goal=a("T", "u", "u"))


def acyclicity_check(J: FiniteStructure, symbol: str = "<") -> bool:
    """True iff the transitive closure of the relation has no loop."""
    if list(J.signature.names) != [symbol] or J.signature.arity(symbol) != 2:
        raise ValueError(f"acyclicity needs the signature {{{symbol}/2}}")
    p = transitive_closure_program(symbol)
    return not goal_holds(p, evaluate(p, Database.from_structure(J)))


def equivalence_program(base: str, arity: int, pair: tuple = (0, 1),
                        guard: Optional[tuple] = None) -> DatalogProgram:
    """Least equivalence containing the pairs of ``base``.

    With ``guard = (i, j)`` the pair at positions ``pair`` is only added when
    positions ``i, j`` are already equivalent (the I4 closure rule).
    """
    v = tuple(f"v{i}" for i in range(arity))
    a = lambda p, *xs: Atom(p, xs)
    body = [Atom(base, v)]
    if guard is not None:
        body.append(a("Sim", v[guard[0]], v[guard[1]]))
    rules = [Rule(a("Sim", v[pair[0]], v[pair[1]]), tuple(body)),
             Rule(a("Sim", "x", "z"), (a("Sim", "x", "y"), a("Sim", "y", "z"))),
             Rule(a("Sim", "x", "y"), (a("Sim", "y", "x"),)),
             Rule(a("Sim", "x", "y"), (a("Dom", "x"), a("=", "x", "y")))]
    return DatalogProgram(Signature([(base, arity), ("Dom", 1)]), Signature([("Sim", 2)]), rules)


def i4_closure_program() -> DatalogProgram:
    return equivalence_program(I4, 4, pair=(2, 3), guard=(0, 1))


def _run_equivalence(p: DatalogProgram, base: str, J: FiniteStructure) -> Partition:
    db = Database(J.size, {base: set(J.tuples(base)), "Dom": {(x,) for x in range(J.size)}})
    sim = evaluate(p, db).get("Sim")
    return equivalence_closure(J.size, sim)


def i4_equivalence(J: FiniteStructure, cross_check: bool = True) -> Partition:
    """The least equivalence with ``I4(u,v,x,y), u~v => x~y``."""
    uf = UnionFind(J.size)
    facts = J.tuples(I4)
    changed = True
    while changed:
        changed = False
        for u, v, x, y in facts:
            if uf.find(u) == uf.find(v) and uf.union(x, y):
                changed = True
    part = Partition(J.size, [uf.find(x) for x in range(J.size)])
    if cross_check:
        other = _run_equivalence(i4_closure_program(), I4, J)
        if other != part:
            raise AssertionError("I4 closure program disagrees with the union-find fixpoint")
    return part


def _preimage(J: FiniteStructure, names: Sequence[str], part: Partition) -> dict:
    members: dict = {}
    for x, c in enumerate(part.class_of):
        members.setdefault(c, []).append(x)
    out = {}
    for name in names:
        tuples = set()
        for t in {tuple(part.class_of[x] for x in t) for t in J.tuples(name)}:
            acc = [()]
            for c in t:
                acc = [a + (x,) for a in acc for x in members[c]]
            tuples.update(acc)
        out[name] = tuples
    return out


def i4_quotient_reduce(J: FiniteStructure, keep_domain: bool = False,
                       cross_check: bool = True) -> FiniteStructure:
    """Merge elements forced equal through I4 and drop I4.

    Returns the quotient structure; with ``keep_domain`` the domain stays J and
    relations are the preimages of the quotient's relations.
    """
    if I4 not in J.signature or J.signature.arity(I4) != 4:
        raise ValueError("instance has no 4-ary I4 relation")
    part = i4_equivalence(J, cross_check)
    names = [n for n in J.signature.names if n != I4]
    sig = J.signature.restrict(names)
    if keep_domain:
        return FiniteStructure(sig, J.size, _preimage(J, names, part), name=f"{J.name}/I4")
    return quotient(J.reduct(names), part)


def star_program(tau: Signature) -> DatalogProgram:
    """Datalog form of :func:`blowup_reduce_star` (output predicates ``R*``)."""
    a = lambda p, *xs: Atom(p, xs)
    eq = equivalence_program(E, 2)
    rules = list(eq.source_rules)
    out = []
    for name, k in tau:
        x = tuple(f"x{i}" for i in range(k))
        y = tuple(f"y{i}" for i in range(k))
        body = (Atom(name, y),) + tuple(a("Sim", xi, yi) for xi, yi in zip(x, y))
        rules.append(Rule(Atom(name + "*", x), body))
        rules.append(Rule(Atom(name + "*", ("z",) * k), (a(NEQ, "z", "z"),)))
        out.append((name + "*", k))
    edb = tau.union(Signature([(E, 2), (NEQ, 2), ("Dom", 1)]))
    return DatalogProgram(edb, Signature([("Sim", 2)] + out), rules)


def blowup_reduce_star(J: FiniteStructure, tau: Sequence[str],
                       cross_check: bool = True) -> FiniteStructure:
    """Instance over tau + {E, neq} to an instance over tau on the same domain."""
    tau = list(tau)
    for s in (E, NEQ):
        if s not in J.signature or J.signature.arity(s) != 2:
            raise ValueError(f"instance lacks the binary symbol {s!r}")
    unknown = [n for n in J.signature.names if n not in tau and n not in (E, NEQ)]
    if unknown:
        raise ValueError(f"unexpected symbol {unknown[0]!r}")
    part = equivalence_closure(J.size, J.tuples(E))
    rels = _preimage(J, tau, part)
    loops = [x for x, y in J.tuples(NEQ) if x == y]
    for name in tau:
        k = J.signature.arity(name)
        rels[name].update((x,) * k for x in loops)
    tau_sig = J.signature.restrict(tau)
    out = FiniteStructure(tau_sig, J.size, rels, name=f"{J.name}*")
    if cross_check:
        p = star_program(tau_sig)
        extra = {"Dom": {(x,) for x in range(J.size)}}
        res = evaluate(p, Database.from_structure(J, extra))
        for name in tau:
            if res.get(name + "*") != rels[name]:
                raise AssertionError(f"star program disagrees on {name}")
    return out


def blowup_expand(J: FiniteStructure) -> FiniteStructure:
    """Expansion by empty E and neq."""
    for s in (E, NEQ):
        if s in J.signature:
            raise ValueError(f"instance already uses the reserved symbol {s!r}")
    return J.expand(Signature([(E, 2), (NEQ, 2)]), {E: [], NEQ: []})


# ---------------------------------------------------------------- reductions

@dataclass(frozen=True)
class Reduction:
    name: str
    source: Signature
    target: Signature
    fn: Callable[[FiniteStructure], FiniteStructure]

    def __call__(self, J: FiniteStructure) -> FiniteStructure:
        if set(J.signature) != set(self.source):
            raise ValueError(f"{self.name} expects {self.source}, got {J.signature}")
        out = self.fn(J)
        if set(out.signature) != set(self.target):
            raise AssertionError(f"{self.name} produced {out.signature}, declared {self.target}")
        return out


def compose_reductions(r1: Reduction, r2: Reduction) -> Reduction:
    """Apply ``r1`` first, then ``r2``."""
    if set(r1.target) != set(r2.source):
        raise ValueError(f"cannot compose: {r1.name} outputs {r1.target}, "
                         f"{r2.name} expects {r2.source}")
    return Reduction(f"{r2.name}.{r1.name}", r1.source, r2.target, lambda J: r2(r1(J)))


def identity_reduction(sig: Signature) -> Reduction:
    return Reduction("id", sig, sig, lambda J: J)


def expand_reduction(tau: Signature) -> Reduction:
    return Reduction("expand", tau, tau.union(Signature([(E, 2), (NEQ, 2)])), blowup_expand)


def star_reduction(tau: Signature) -> Reduction:
    return Reduction("star", tau.union(Signature([(E, 2), (NEQ, 2)])), tau,
                     lambda J: blowup_reduce_star(J, tau.names))


def i4_reduction(sig: Signature) -> Reduction:
    """``sig`` must contain I4; the target drops it."""
    rest = sig.restrict([n for n in sig.names if n != I4])
    return Reduction("i4", sig, rest, i4_quotient_reduce)


def full_power_reduction(sig: Signature, d: int) -> Reduction:
    from .construct import full_power_instance, full_power_signature
    return Reduction(f"power{d}", sig, full_power_signature(sig, d),
                     lambda J: full_power_instance(J, d))
