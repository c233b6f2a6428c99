import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from cspwb import oracles
from cspwb.agespec import all_structures
from cspwb.construct import E, I4, NEQ, finite_blowup_model, full_power_instance
from cspwb.datalog import (Database, DatalogError,
                           acyclicity_check, blowup_expand, blowup_reduce_star,
                           compose_reductions, equivalence_program, evaluate, evaluate_naive,
                           expand_reduction, full_power_reduction, goal_holds, i4_equivalence,
                           i4_quotient_reduce, i4_reduction, identity_reduction, parse_program,
                           star_reduction, transitive_closure_program)
from cspwb.library import chain, cycle, path
from cspwb.relcore import Signature, find_homomorphism, structure

LT = Signature([("<", 2)])
BLOWUP = [("<", 2), (E, 2), (NEQ, 2)]


def tc(J):
    p = transitive_closure_program()
    return sorted(evaluate(p, Database.from_structure(J)).get("T"))


def random_structure(rng, n, symbols):
    q = rng.random()
    rels = {}
    for s, k in symbols:
        p = q * q / (n ** (k - 2)) if k > 2 else q * q
        rels[s] = [t for t in itertools.product(range(n), repeat=k) if rng.random() < p]
    return structure(symbols, n, rels)


# ---------------------------------------------------------------- engine

def test_transitive_closure_examples():
    assert tc(path(3)) == [(0, 1), (0, 2), (1, 2)]
    assert tc(structure([("<", 2)], 2, {})) == []
    two = tc(cycle(2))
    assert (0, 0) in two and (1, 1) in two


def test_acyclicity_examples():
    assert acyclicity_check(chain(3))
    assert not acyclicity_check(cycle(3))
    assert acyclicity_check(structure([("<", 2)], 1, {}))
    with pytest.raises(ValueError):
        acyclicity_check(structure([("R", 2)], 1, {}))


def test_acyclicity_matches_chain_homomorphism_exhaustively():
    for n in range(1, 5):
        for J in all_structures(LT, n):
            assert acyclicity_check(J) == (find_homomorphism(J, chain(n)) is not None)


def test_acyclicity_sample_of_size_five():
    rng = random.Random(11)
    for _ in range(2000):
        J = random_structure(rng, 5, [("<", 2)])
        assert acyclicity_check(J) == oracles.brute_acyclic(J.tuples("<"), 5)


programs = st.sampled_from([
    "T(x,y) <- <(x,y).\nT(x,z) <- T(x,y), <(y,z).",
    "T(x,y) <- <(x,y).\nT(x,z) <- T(x,y), T(y,z).\nS(x) <- T(x,x).",
    "P(x,y) <- <(y,x).\nQ(x) <- P(x,y), <(x,z), P(z,w).\nP(x,x) <- Q(x).",
    "A(x) <- <(x,x).\nA(y) <- A(x), <(x,y).\nB(x,y) <- A(x), A(y), x = y.",
])


@settings(max_examples=80, deadline=None)
@given(programs, st.integers(1, 5), st.data())
def test_semi_naive_equals_naive_and_is_least(text, n, data):
    edges = data.draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                              max_size=10))
    p = parse_program(text, LT)
    db = Database(n, {"<": set(edges)})
    fast, slow = evaluate(p, db), evaluate_naive(p, db)
    for name in p.idb.names:
        assert fast.get(name) == slow.get(name)
    # idempotent: feeding the result back changes nothing
    again = evaluate(p, Database(n, dict(fast.facts)))
    for name in p.idb.names:
        assert again.get(name) >= fast.get(name)
    # minimal: dropping any derived fact leaves a set that some rule re-derives
    for name in p.idb.names:
        for fact in fast.get(name):
            facts = {k: set(v) for k, v in fast.facts.items()}
            facts[name].discard(fact)
            assert _not_closed(p, facts, name, fact)


def _not_closed(p, facts, name, fact):
    from cspwb.datalog import _fire
    return any(fact in _fire(r, [facts.get(a.pred, set()) for a in r.body])
               for r in p.rules if r.head.pred == name)


def test_unsafe_rule_rejected():
    with pytest.raises(DatalogError, match="unsafe"):
        parse_program("T(x,y) <- <(x,x).", LT)
    with pytest.raises(DatalogError):
        parse_program("T(x) <- Nope(x).", LT)
    with pytest.raises(DatalogError):
        parse_program("<(x,y) <- <(y,x).", LT)


def test_equality_atoms_unify():
    p = parse_program("D(x,y) <- <(x,z), <(y,w), z = w.", LT)
    res = evaluate(p, Database(3, {"<": {(0, 2), (1, 2), (2, 0)}}))
    assert res.get("D") == {(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)}


def test_goal_sentence():
    p = transitive_closure_program()
    assert goal_holds(p, evaluate(p, Database.from_structure(cycle(2))))
    assert not goal_holds(p, evaluate(p, Database.from_structure(chain(2))))


# ---------------------------------------------------------------- I4 closure

def i4_structure(n, facts):
    return structure([("<", 2), (I4, 4)], n, {I4: facts})


def test_i4_examples():
    assert i4_quotient_reduce(i4_structure(3, [(0, 0, 1, 2)])).size == 2
    assert i4_quotient_reduce(i4_structure(3, [])).size == 3
    Q = i4_quotient_reduce(i4_structure(5, [(0, 0, 1, 2), (1, 2, 3, 4)]))
    assert Q.size == 3
    assert i4_quotient_reduce(i4_structure(5, [(1, 2, 3, 4)])).size == 5


def test_i4_keep_domain_uses_preimages():
    J = structure([("<", 2), (I4, 4)], 3, {"<": [(0, 1)], I4: [(0, 0, 1, 2)]})
    K = i4_quotient_reduce(J, keep_domain=True)
    assert K.size == 3 and K.signature.names == ["<"]
    assert K.tuples("<") == [(0, 1), (0, 2)]


def test_i4_program_cross_check_and_idempotence():
    rng = random.Random(3)
    for _ in range(300):
        J = random_structure(rng, rng.randint(1, 5), [("<", 2), (I4, 4)])
        part = i4_equivalence(J, cross_check=True)
        Q = i4_quotient_reduce(J)
        assert Q.size == part.num_classes
        again = Q.expand(Signature([(I4, 4)]), {I4: []})
        assert i4_quotient_reduce(again) == Q


def test_equivalence_program_needs_domain_atom():
    p = equivalence_program(E, 2)
    res = evaluate(p, Database(3, {E: {(0, 1)}, "Dom": {(0,), (1,), (2,)}}))
    assert res.get("Sim") == {(0, 0), (1, 1), (2, 2), (0, 1), (1, 0)}


# ---------------------------------------------------------------- blowup reductions

def test_star_examples():
    J = structure(BLOWUP, 2, {E: [(0, 1)], "<": [(0, 1)]})
    out = blowup_reduce_star(J, ["<"])
    assert (0, 0) in out.tuples("<")
    assert not acyclicity_check(out)
    assert find_homomorphism(J, finite_blowup_model(chain(2), 2)) is None
    J = structure(BLOWUP, 1, {NEQ: [(0, 0)]})
    assert blowup_reduce_star(J, ["<"]).tuples("<") == [(0, 0)]
    J = structure(BLOWUP, 3, {"<": [(0, 1), (1, 2)]})
    assert blowup_reduce_star(J, ["<"]) == path(3).rename("x")


def test_expand_examples():
    X = blowup_expand(chain(2))
    assert X.signature.names == ["<", E, NEQ] and X.tuples(E) == [] and X.tuples(NEQ) == []
    assert blowup_expand(structure([("<", 2)], 0, {})).size == 0


def test_expand_then_star_is_identity_up_to_size_four():
    for n in range(5):
        for J in all_structures(LT, n):
            assert blowup_reduce_star(blowup_expand(J), ["<"], cross_check=False) == J


def test_reduction_equivalence_forward():
    model = finite_blowup_model(chain(4), 4)
    for n in range(1, 4):
        for J in all_structures(LT, n):
            assert acyclicity_check(J) == (find_homomorphism(blowup_expand(J), model) is not None)
    rng = random.Random(8)
    for _ in range(300):
        J = random_structure(rng, 4, [("<", 2)])
        assert acyclicity_check(J) == (find_homomorphism(blowup_expand(J), model) is not None)


def test_reduction_equivalence_backward():
    model = finite_blowup_model(chain(5), 5)
    rng = random.Random(9)
    for _ in range(800):
        J = random_structure(rng, rng.randint(1, 5), BLOWUP)
        assert acyclicity_check(blowup_reduce_star(J, ["<"])) == \
            (find_homomorphism(J, model) is not None)


# ---------------------------------------------------------------- composition

def test_compose_with_identity():
    r = compose_reductions(identity_reduction(LT), expand_reduction(LT))
    for J in all_structures(LT, 2):
        assert r(J) == blowup_expand(J)


def test_compose_i4_then_star_against_model():
    sig = Signature(BLOWUP + [(I4, 4)])
    chain_r = compose_reductions(i4_reduction(sig), star_reduction(LT))
    model = finite_blowup_model(chain(4), 4, with_I4=True)
    rng = random.Random(4)
    for _ in range(200):
        J = random_structure(rng, rng.randint(1, 4), BLOWUP + [(I4, 4)])
        assert acyclicity_check(chain_r(J)) == (find_homomorphism(J, model) is not None)


def test_compose_power_after_expand():
    r = compose_reductions(expand_reduction(LT), full_power_reduction(Signature(BLOWUP), 2))
    J = chain(2)
    assert r(J) == full_power_instance(blowup_expand(J), 2)


def test_compose_signature_mismatch():
    with pytest.raises(ValueError, match="cannot compose"):
        compose_reductions(expand_reduction(LT), expand_reduction(LT))
