import pytest
from hypothesis import given, settings, strategies as st

from cspwb import oracles
from cspwb.agespec import (BoundSpec, Clause, all_structures, builtin_linear_order, clause,
                           enumerate_d_types, forbidden_bounds, in_age, lit,
                           restricted_growth_strings, type_of_tuple, violated_clause)
from cspwb.library import chain, cycle
from cspwb.relcore import Signature, structure

LT = Signature([("<", 2)])


def is_strict_linear_order(F):
    rel = set(F.tuples("<"))
    n = F.size
    return (all((x, x) not in rel for x in range(n))
            and all(((x, y) in rel) != ((y, x) in rel) for x in range(n) for y in range(x + 1, n))
            and all((x, z) in rel for (x, y) in rel for (y2, z) in rel if y == y2))


def test_linear_order_has_three_clauses():
    spec = builtin_linear_order()
    assert len(spec.clauses) == 3 and spec.max_bound_size == 3


def test_membership_examples():
    spec = builtin_linear_order()
    assert in_age(spec, chain(4))
    assert not in_age(spec, cycle(3))
    assert not in_age(spec, structure([("<", 2)], 1, {"<": [(0, 0)]}))
    assert in_age(spec, structure([("<", 2)], 0, {}))
    assert violated_clause(spec, structure([("<", 2)], 2, {})) is not None


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 4).flatmap(lambda n: st.tuples(
    st.just(n), st.sets(st.tuples(st.integers(0, max(n - 1, 0)), st.integers(0, max(n - 1, 0)))))))
def test_membership_matches_definition(data):
    n, edges = data
    F = structure([("<", 2)], n, {"<": sorted(edges) if n else []})
    assert in_age(builtin_linear_order(), F) == is_strict_linear_order(F)


def test_forbidden_bounds_of_linear_order():
    bounds = forbidden_bounds(builtin_linear_order(), 3)
    sizes = sorted((B.size, len(B.tuples("<"))) for B in bounds)
    # loop, two incomparable points, 2-cycle, 3-cycle
    assert sizes == [(1, 1), (2, 0), (2, 2), (3, 3)]


def test_forbidden_backend_agrees_with_clauses():
    spec = builtin_linear_order()
    both = BoundSpec(LT, spec.clauses, tuple(forbidden_bounds(spec, 3)), "both", 3)
    for n in range(4):
        for F in all_structures(LT, n):
            assert in_age(both, F) == is_strict_linear_order(F)


def test_clause_validation():
    with pytest.raises(ValueError):
        BoundSpec(LT, (clause(lit("R", 0, 1)),), None, "bad", 2)
    with pytest.raises(ValueError):
        BoundSpec(LT, (clause(lit("<", 0, 1, 2)),), None, "bad", 3)
    with pytest.raises(ValueError):
        Clause(1, (lit("<", 0, 1),))


def test_restricted_growth_strings_are_bell_numbers():
    assert [len(restricted_growth_strings(d)) for d in range(1, 6)] == [1, 2, 5, 15, 52]


@pytest.mark.parametrize("d,count", [(1, 1), (2, 3), (3, 13), (4, 75)])
def test_type_counts_match_weak_orders(d, count):
    assert len(enumerate_d_types(builtin_linear_order(), d)) == count
    assert oracles.count_weak_orders(d) == count


def test_type_of_tuple_and_restrict():
    spec = builtin_linear_order()
    T = enumerate_d_types(spec, 3)
    C = chain(3)
    i = type_of_tuple(T, spec, C, (2, 0, 2))
    assert T.pattern(i) == (0, 1, 0)
    assert T.holds(i, "<", (1, 0)) and not T.holds(i, "<", (0, 1))
    assert T.restrict(i, [1, 2]) == ((0, 1), (((0, 1),),))
    with pytest.raises(ValueError):
        type_of_tuple(T, spec, cycle(3), (0, 1, 2))


def test_every_type_is_realized_by_its_representative():
    spec = builtin_linear_order()
    T = enumerate_d_types(spec, 3)
    for i in range(len(T)):
        rep = T.structure(i)
        assert in_age(spec, rep)
        assert type_of_tuple(T, spec, rep, T.pattern(i)) == i


def test_type_table_of_two_orders():
    # two independent linear orders: types of pairs = (equal) + 2 * 2 orientations
    spec = BoundSpec(Signature([("<", 2), ("<<", 2)]),
                     builtin_linear_order("<").clauses + builtin_linear_order("<<").clauses,
                     None, "two", 3)
    assert len(enumerate_d_types(spec, 2)) == 1 + 4


def test_all_structures_count():
    assert sum(1 for _ in all_structures(LT, 2)) == 16
