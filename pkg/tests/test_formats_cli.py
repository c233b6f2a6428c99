import pytest
from hypothesis import given, settings, strategies as st

from cspwb.agespec import all_structures, builtin_linear_order, in_age
from cspwb.cli import main
from cspwb.formats import (FormatError, emit_op, emit_spec, emit_structure, parse_op,
                           parse_spec, parse_structure, parse_structures)
from cspwb.library import builtin_spec, chain, clique
from cspwb.polyfind import OperationTable
from cspwb.relcore import LabelRelation, structure

K3_TEXT = """\
# the triangle
signature E/2
structure K3 {
  elements r g b;
  E(r g) E(g r) E(r b) E(b r) E(g b) E(b g)
}
"""


# ---------------------------------------------------------------- structures

def test_parse_k3():
    K = parse_structure(K3_TEXT)
    assert K.size == 3 and K.name == "K3"
    assert K.tuples("E") == clique(3).tuples("E")
    assert K.label(1) == "g"


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 4).flatmap(lambda n: st.tuples(
    st.just(n), st.sets(st.tuples(st.integers(0, max(n - 1, 0)), st.integers(0, max(n - 1, 0)))),
    st.sets(st.integers(0, max(n - 1, 0))))))
def test_structure_roundtrip(data):
    n, edges, unary = data
    F = structure([("<", 2), ("U", 1)], n,
                  {"<": sorted(edges) if n else [], "U": [(u,) for u in sorted(unary)] if n else []})
    text = emit_structure(F)
    G = parse_structure(text)
    assert G == F
    assert emit_structure(G) == text


def test_label_relation_roundtrip():
    eq = LabelRelation(3, [(("a",), [0, 1, 1]), (("b",), [1, 1, 0])], None)
    tab = LabelRelation(3, [(("a",), [0, 1, 1]), (("b",), [2, 0, 0])], {(0, 2), (1, 0)})
    F = structure([("S", 2), ("R", 2)], 3, {"S": eq, "R": tab})
    text = emit_structure(F)
    assert "labels m0" in text and "~ eq" in text and "~ table" in text
    G = parse_structure(text)
    assert G.tuples("S") == F.tuples("S") and G.tuples("R") == F.tuples("R")
    assert emit_structure(G) == text


def test_symbol_names_with_brackets_survive():
    F = structure([("S@c{1}[1|2]", 2)], 2, {"S@c{1}[1|2]": [(0, 1)]})
    assert parse_structure(emit_structure(F)) == F


def test_several_structures_share_a_signature():
    text = "signature </2\nstructure A { elements x; }\nstructure B { elements x y; <(x y) }\n"
    A, B = parse_structures(text)
    assert A.size == 1 and B.tuples("<") == [(0, 1)]


@pytest.mark.parametrize("text,line,col", [
    ("signature </2\nstructure A { elements x; <(x z) }", 2, 31),
    ("signature </2\nstructure A { elements x; R(x x) }", 2, 27),
    ("signature </2\nstructure A { elements x; <(x) }", 2, 30),
    ("signature <\n", 1, 11),
])
def test_structure_errors_have_positions(text, line, col):
    with pytest.raises(FormatError) as e:
        parse_structure(text)
    assert (e.value.line, e.value.col) == (line, col)


# ---------------------------------------------------------------- specs and tables

def test_linear_spec_roundtrip():
    spec = builtin_linear_order()
    text = emit_spec(spec)
    assert text.count("clause") == 3 and "bound 3;" in text
    again = parse_spec(text)
    assert again.clauses == spec.clauses and again.max_bound_size == 3
    for n in range(4):
        for F in all_structures(spec.signature, n):
            assert in_age(again, F) == in_age(spec, F)


def test_spec_with_unknown_symbol():
    text = "spec S {\n  signature </2;\n  bound 2;\n  clause !R(x y)\n}\n"
    with pytest.raises(FormatError) as e:
        parse_spec(text)
    assert e.value.line == 4 and "R" in str(e.value)


def test_builtin_specs_parse():
    assert builtin_spec("qlt").clauses == builtin_linear_order().clauses
    assert builtin_spec("nothing") is None


def test_op_roundtrip():
    f = OperationTable.from_function(min, 2, 3)
    assert parse_op(emit_op(f)) == f
    g = OperationTable(2, 2, [0, 3, 1, 2], 4)
    assert parse_op(emit_op(g)) == g
    with pytest.raises(FormatError):
        parse_op("op arity=2 domain=2\n0 1 1")


# ---------------------------------------------------------------- command line

@pytest.fixture
def files(tmp_path):
    (tmp_path / "k3.txt").write_text(K3_TEXT)
    (tmp_path / "c3.txt").write_text(emit_structure(chain(3)))
    cyc = structure([("<", 2)], 3, {"<": [(0, 1), (1, 2), (2, 0)]}, name="cyc")
    (tmp_path / "cyc.txt").write_text(emit_structure(cyc))
    (tmp_path / "tc.dl").write_text("T(x,y) <- <(x,y).\nT(x,z) <- T(x,y), <(y,z).\n"
                                    "goal T(x,x).\n")
    return tmp_path


def test_cli_solve(files, capsys):
    assert main(["solve", "csp", "--template", "qlt", "--instance", str(files / "cyc.txt")]) == 1
    assert capsys.readouterr().out.strip() == "UNSAT"
    assert main(["solve", "csp", "--template", "qlt", "--instance", str(files / "c3.txt")]) == 0
    assert main(["solve", "csp", "--template", "k3", "--instance", str(files / "k3.txt")]) == 0
    assert main(["solve", "csp", "--template", "k3", "--instance", "k4"]) == 1


def test_cli_types_and_polysearch(capsys):
    assert main(["types", "--spec", "linear", "--d", "3"]) == 0
    assert capsys.readouterr().out.strip() == "13"
    assert main(["polysearch", "--s1", "chain3", "--arity", "2", "--kind", "commutative"]) == 0
    assert parse_op(capsys.readouterr().out) == OperationTable.from_function(min, 2, 3)
    assert main(["polysearch", "--s1", "k3", "--arity", "2", "--kind", "commutative"]) == 1
    assert main(["polysearch", "--s1", "k3", "--arity", "3", "--kind", "siggers"]) == 2


def test_cli_datalog_goal(files, capsys):
    assert main(["datalog", "--program", str(files / "tc.dl"),
                 "--instance", str(files / "cyc.txt")]) == 0
    assert "goal: holds" in capsys.readouterr().out
    assert main(["datalog", "--program", str(files / "tc.dl"),
                 "--instance", str(files / "c3.txt")]) == 1


def test_cli_reduce_expand_then_star(files, capsys):
    out1 = files / "up.txt"
    assert main(["reduce", "expand", "--instance", str(files / "c3.txt"), "--out", str(out1)]) == 0
    assert "neq/2" in out1.read_text()
    capsys.readouterr()
    assert main(["reduce", "star", "--instance", str(out1)]) == 0
    assert parse_structure(capsys.readouterr().out).tuples("<") == chain(3).tuples("<")


def test_cli_build_pcsp_and_fullpower(tmp_path, capsys):
    assert main(["build", "fullpower", "--s", "chain2", "--d", "2"]) == 0
    F = parse_structure(capsys.readouterr().out)
    assert F.size == 4
    out = tmp_path / "pcsp"
    assert main(["build", "pcsp", "--spec", "linear", "--tau", "<", "--s", "chain3",
                 "--out", str(out)]) == 0
    assert parse_structure((out / "S1.txt").read_text()).size == 81


def test_cli_errors(files, capsys, monkeypatch):
    assert main(["solve", "csp", "--template", "qlt", "--instance", str(files / "nope")]) == 2
    bad = files / "bad.txt"
    bad.write_text("signature </2\nstructure A { elements x; <(x y) }\n")
    assert main(["solve", "csp", "--template", "qlt", "--instance", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["--caps", "bogus=1", "types", "--spec", "linear", "--d", "2"]) == 2
    assert main(["--caps", "types=5", "types", "--spec", "linear", "--d", "3"]) == 3
    monkeypatch.setenv("CSPWB_CAPS", "types=5")
    assert main(["types", "--spec", "linear", "--d", "3"]) == 3
    assert "cap exceeded" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        main(["solve"])
    assert e.value.code == 2
