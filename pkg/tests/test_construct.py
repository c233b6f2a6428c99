import itertools

import numpy as np
import pytest

from cspwb.agespec import all_structures, builtin_linear_order, in_age
from cspwb.construct import (E, INNER, NEQ, SUPER, blowup_spec, build_pcsp, choose_d,
                             compat_name, finite_blowup_model, full_power_finite,
                             full_power_signature, hat_name, hat_substructure,
                             parse_full_power_name, superpose_specs, unary_name, wreath_finite,
                             wreath_spec)
from cspwb.library import chain, clique, cycle
from cspwb.relcore import (FiniteStructure, Signature, decode, find_embedding,
                           induced_substructure, is_homomorphism,
                           iter_homomorphisms, structure)


def wreath_linear():
    return wreath_spec(builtin_linear_order(INNER), builtin_linear_order())


def test_wreath_finite_shape():
    W = wreath_finite(chain(2, INNER), chain(2))
    assert W.size == 4 and W.signature.names == [INNER, E, "<"]
    # (a, b) is b*2 + a: inner order within a class, outer order between classes
    assert W.holds(INNER, (0, 1)) and not W.holds(INNER, (0, 2))
    assert W.holds("<", (1, 2)) and not W.holds("<", (0, 1))
    assert len(W.tuples(E)) == 8


def test_wreath_finite_is_in_wreath_age():
    assert in_age(wreath_linear(), wreath_finite(chain(3, INNER), chain(2)))


def test_wreath_spec_matches_embeddings_up_to_size_two():
    # every structure with at most two points in the age embeds into chain2 wr chain2
    spec = wreath_linear()
    W = wreath_finite(chain(2, INNER), chain(2))
    for n in range(3):
        for F in all_structures(spec.signature, n):
            assert in_age(spec, F) == (find_embedding(F, W) is not None)


def test_wreath_spec_sample_of_size_three():
    spec = wreath_linear()
    W = wreath_finite(chain(3, INNER), chain(3))
    rng = np.random.default_rng(5)
    sig = spec.signature
    for _ in range(300):
        rels = {n: [t for t in itertools.product(range(3), repeat=2) if rng.random() < 0.4]
                for n in sig.names}
        F = structure(sig, 3, rels)
        assert in_age(spec, F) == (find_embedding(F, W) is not None)
    # substructures of the finite wreath product are always members
    for S in itertools.combinations(range(9), 3):
        assert in_age(spec, induced_substructure(W, S))


def test_wreath_rejects_shared_symbols():
    with pytest.raises(ValueError):
        wreath_spec(builtin_linear_order(), builtin_linear_order())
    with pytest.raises(ValueError):
        wreath_finite(chain(2), chain(2))


def test_blowup_spec_accepts_finite_model():
    spec, tau_up = blowup_spec(builtin_linear_order(), ["<"])
    assert tau_up == ["<", E, NEQ]
    M = finite_blowup_model(chain(3), 3)
    # add the inner order: index order inside each class
    m = 3
    inner = [(x, y) for x in range(9) for y in range(9) if x // m == y // m and x % m < y % m]
    full = M.expand(Signature([(INNER, 2)]), {INNER: inner})
    full = FiniteStructure(spec.signature, 9, {n: full.rel(n) for n in spec.signature.names})
    assert in_age(spec, full)


def test_blowup_with_i4_has_larger_bound():
    spec, tau_up = blowup_spec(builtin_linear_order(), ["<"], with_I4=True)
    assert tau_up[-1] == "I4" and spec.max_bound_size == 4


def test_superposition_reducts():
    s = superpose_specs(builtin_linear_order(), builtin_linear_order(SUPER))
    for F in all_structures(s.signature, 2):
        member = in_age(s, F)
        parts = (in_age(builtin_linear_order(), F.reduct(["<"]))
                 and in_age(builtin_linear_order(SUPER), F.reduct([SUPER])))
        assert member == parts


def test_choose_d_for_demo():
    spec_up, _ = blowup_spec(builtin_linear_order(), ["<"])
    spec_hat = superpose_specs(spec_up, builtin_linear_order(SUPER))
    assert choose_d(spec_hat) == 4


def test_full_power_names_roundtrip():
    assert parse_full_power_name(unary_name("<", (2, 1))) == ("u", "<", (2, 1), None, 2)
    assert parse_full_power_name(hat_name("<", (1, 1))) == ("h", "<", (1, 1), None, 2)
    assert parse_full_power_name(compat_name((1, 2), (2, 1))) == ("c", None, (1, 2), (2, 1), 2)
    with pytest.raises(ValueError):
        parse_full_power_name("plain")


def test_full_power_signature_size():
    sig = full_power_signature(Signature([("<", 2)]), 3)
    # 6 injections, 9 functions, and compatibility for k = 1, 2
    assert len(sig) == 6 + 9 + 3 * 3 + 9 * 9


def test_full_power_relation_semantics():
    C = chain(3)
    d = 2
    FP = full_power_finite(C, d)
    assert FP.size == 9
    coords = [decode(i, 3, d) for i in range(9)]
    for x in range(9):
        assert FP.holds(unary_name("<", (1, 2)), (x,)) == (coords[x][0] < coords[x][1])
        for y in range(9):
            assert FP.holds(hat_name("<", (2, 1)), (x, y)) == (coords[x][1] < coords[y][0])
            assert FP.holds(compat_name((1,), (2,)), (x, y)) == (coords[x][0] == coords[y][1])
            assert FP.holds(compat_name((1, 2), (2, 1)), (x, y)) == \
                (coords[x] == coords[y][::-1])


def test_full_power_endomorphisms_are_componentwise():
    for S in (chain(2), clique(2), structure([("U", 1)], 2, {"U": [(1,)]})):
        FP = full_power_finite(S, 2)
        endos = set(iter_homomorphisms(FP, FP))
        coords = [decode(i, S.size, 2) for i in range(FP.size)]
        index = {c: i for i, c in enumerate(coords)}
        actions = {tuple(index[tuple(e[x] for x in c)] for c in coords)
                   for e in iter_homomorphisms(S, S)}
        assert endos == actions


def test_hat_substructure():
    H = hat_substructure(chain(3), ["<"])
    assert H.signature.names == ["<", E, NEQ]
    assert H.tuples(E) == [(0, 0), (1, 1), (2, 2)] and len(H.tuples(NEQ)) == 6


def test_finite_blowup_model_encoding():
    M = finite_blowup_model(chain(2), 3)
    assert M.size == 6
    # element (row i, point a) is a*3 + i
    assert M.holds("<", (0, 5)) and not M.holds("<", (3, 0))
    assert M.holds(E, (0, 2)) and not M.holds(E, (2, 3))


def test_demo_pipeline(demo):
    assert demo.d == 4
    assert demo.S1.size == 81 and demo.S2.size == 5529
    assert demo.verify()
    assert is_homomorphism(demo.S1, demo.S2, demo.quotient_map)
    assert len(demo.type_table) == 5529


def test_pipeline_rejects_small_or_foreign_inputs():
    with pytest.raises(ValueError):
        build_pcsp(builtin_linear_order(), ["<"], chain(2))
    with pytest.raises(ValueError):
        build_pcsp(builtin_linear_order(), ["<"], cycle(3))
    with pytest.raises(ValueError):
        build_pcsp(builtin_linear_order(), ["<"], chain(3), d_override=3)
