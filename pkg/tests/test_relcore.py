import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cspwb import oracles
from cspwb.library import chain, clique, cycle, path
from cspwb.relcore import (CapExceeded, Caps, FiniteStructure, LabelRelation, Partition,
                           Signature, TupleRelation, caps_override, check_cap, decode,
                           direct_power, encode, enumerate_automorphisms, find_embedding,
                           find_homomorphism, get_caps, induced_substructure,
                           is_homomorphism, iter_homomorphisms, orbit_quotient_finite,
                           parse_caps, quotient, structure)


def digraphs(max_n=4):
    return st.integers(1, max_n).flatmap(
        lambda n: st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))).map(
            lambda e: structure([("<", 2)], n, {"<": sorted(e)})))


# ---------------------------------------------------------------- caps

def test_parse_caps_positional_and_keyed():
    c = parse_caps("10,20")
    assert (c.domain, c.tuples, c.types) == (10, 20, Caps().types)
    c = parse_caps("types=7, search_vars=3")
    assert (c.types, c.search_vars, c.domain) == (7, 3, Caps().domain)


@pytest.mark.parametrize("bad", ["0", "x=3", "1,2,3,4,5", "domain=-1"])
def test_parse_caps_rejects(bad):
    with pytest.raises(ValueError):
        parse_caps(bad)


def test_caps_from_environment(monkeypatch):
    monkeypatch.setenv("CSPWB_CAPS", "domain=5")
    assert get_caps().domain == 5
    with pytest.raises(CapExceeded) as e:
        check_cap("thing", 6, "domain", "stage")
    assert "stage" in str(e.value) and "6" in str(e.value)


def test_caps_override_restores():
    before = get_caps()
    with caps_override(tuples=3):
        assert get_caps().tuples == 3
    assert get_caps() == before


# ---------------------------------------------------------------- signatures and relations

def test_signature_basics():
    s = Signature([("<", 2), ("U", 1)])
    assert s.names == ["<", "U"] and s.max_arity == 2 and "U" in s
    assert s.union(Signature([("U", 1), ("T", 3)])).names == ["<", "U", "T"]
    assert s.restrict(["U"]).names == ["U"]
    with pytest.raises(ValueError):
        Signature([("a", 1), ("a", 2)])
    with pytest.raises(KeyError):
        s.restrict(["nope"])


def test_tuple_relation_membership():
    r = TupleRelation(2, 3, [(0, 1), (2, 2)])
    assert (0, 1) in r and (1, 0) not in r
    assert r.contains_many(np.array([[0, 1], [1, 1], [2, 2]])).tolist() == [True, False, True]
    assert r.loop_mask().tolist() == [False, False, True]
    with pytest.raises(ValueError):
        TupleRelation(2, 3, [(0, 3)])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.data())
def test_label_relation_matches_explicit_tuples(n, data):
    labs = [data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n)) for _ in range(2)]
    equality = data.draw(st.booleans())
    allowed = None if equality else data.draw(
        st.sets(st.tuples(st.integers(0, 2), st.integers(0, 2))))
    rel = LabelRelation(n, [(("a",), labs[0]), (("b",), labs[1])], allowed)
    explicit = [(x, y) for x in range(n) for y in range(n)
                if (labs[0][x] == labs[1][y] if equality else (labs[0][x], labs[1][y]) in allowed)]
    assert rel.tuples() == explicit
    assert len(rel) == len(explicit)
    grid = np.array(list(itertools.product(range(n), repeat=2)))
    assert rel.contains_many(grid).tolist() == [tuple(t) in set(explicit) for t in grid.tolist()]


# ---------------------------------------------------------------- homomorphisms

@settings(max_examples=150, deadline=None)
@given(digraphs(4), digraphs(3))
def test_find_homomorphism_agrees_with_brute_force(J, A):
    h = find_homomorphism(J, A)
    assert (h is not None) == oracles.brute_homomorphism_exists(J, A)
    if h is not None:
        assert h.replay(J, A)
        # the search returns the lexicographically least homomorphism
        assert h.map == oracles.brute_homomorphism(J, A)


@settings(max_examples=60, deadline=None)
@given(digraphs(3), digraphs(3))
def test_iter_homomorphisms_counts_all(J, A):
    brute = sum(1 for h in itertools.product(range(A.size), repeat=J.size)
                if is_homomorphism(J, A, h))
    assert len(set(iter_homomorphisms(J, A))) == brute


def test_is_homomorphism_rejects_bad_maps():
    C = chain(3)
    assert is_homomorphism(C, C, (0, 1, 2))
    assert not is_homomorphism(C, C, (0, 0, 2))
    assert not is_homomorphism(C, C, (0, 1))
    assert not is_homomorphism(C, C, (0, 1, 5))


def test_automorphism_counts():
    assert len(enumerate_automorphisms(clique(3))) == 6
    assert len(enumerate_automorphisms(chain(4))) == 1
    assert len(enumerate_automorphisms(cycle(4))) == 4


def test_embedding_requires_reflection():
    # a path embeds into a chain only as a homomorphism, not as an induced copy
    assert find_homomorphism(path(3), chain(3)) is not None
    assert find_embedding(path(3), chain(3)) is None
    assert find_embedding(chain(2), chain(3)).map == (0, 1)


def test_injective_search():
    K2 = clique(2)
    assert find_homomorphism(K2, K2, injective=True) is not None
    empty3 = structure([("E", 2)], 3, {})
    assert find_homomorphism(empty3, K2, injective=True) is None


# ---------------------------------------------------------------- constructions

def test_encode_decode_roundtrip():
    for i in range(27):
        assert encode(decode(i, 3, 3), 3) == i
    assert decode(5, 2, 3) == (1, 0, 1)


def test_direct_power_relation_sizes():
    C = chain(3)
    P = direct_power(C, 2)
    assert P.size == 9 and len(P.rel("<")) == len(C.rel("<")) ** 2
    # componentwise order: (0,0) < (1,2)
    assert P.holds("<", (encode((0, 0), 3), encode((1, 2), 3)))
    assert not P.holds("<", (encode((0, 1), 3), encode((1, 1), 3)))


def test_direct_power_projection_is_homomorphism():
    C = cycle(3)
    P = direct_power(C, 2)
    proj = [decode(i, 3, 2)[1] for i in range(P.size)]
    assert is_homomorphism(P, C, proj)


def test_partition_normalizes():
    p = Partition(4, (3, 3, 2, 2))
    assert p.class_of == (0, 0, 2, 2)
    assert p.classes() == [[0, 1], [2, 3]] and p.num_classes == 2
    assert Partition.from_classes(4, [[1, 3]]).class_of == (0, 1, 2, 1)


def test_quotient_and_substructure():
    C = chain(3)
    Q = quotient(C, Partition.from_classes(3, [[0, 1]]))
    assert Q.size == 2 and Q.tuples("<") == [(0, 0), (0, 1)]
    S = induced_substructure(C, [0, 2])
    assert S.size == 2 and S.tuples("<") == [(0, 1)]


def test_orbit_quotient():
    C = cycle(4)
    rot = (1, 2, 3, 0)
    Q = orbit_quotient_finite(C, [rot])
    assert Q.size == 1 and Q.tuples("<") == [(0, 0)]
    with pytest.raises(ValueError, match="not an automorphism"):
        orbit_quotient_finite(chain(2), [(1, 0)])


def test_structure_rejects_unknown_symbols():
    with pytest.raises(ValueError):
        FiniteStructure(Signature([("<", 2)]), 2, {"R": [(0, 1)]})
