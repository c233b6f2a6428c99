"""Text formats for structures, specs and operation tables.

Structure files::

    # comment
    signature </2 E/2
    structure Chain { elements a b c; <(a b) <(a c) <(b c) }

Relations stored as label tables are written with label maps::

    labels m0 : 0 1 1;
    S ~ eq m0 m1;
    R ~ table m0 m1 : (0 1) (1 1);

Spec files::

    spec Linear {
      signature </2;
      bound 3;
      clause !<(x x)
      clause <(x y) | <(y x) | =(x y)
    }

Operation tables: ``op arity=2 domain=3`` followed by the value array.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .agespec import EQ, BoundSpec, Clause, Literal
from .polyfind import OperationTable
from .relcore import FiniteStructure, LabelRelation, Signature


class FormatError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        super().__init__(f"line {line}, column {col}: {msg}" if line else msg)


@dataclass
class _Tok:
    text: str
    line: int
    col: int


_TOKEN = re.compile(r"[();]|[^\s();]+")


def _tokenize(text: str) -> list:
    out = []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        for m in _TOKEN.finditer(line):
            out.append(_Tok(m.group(), ln, m.start() + 1))
    return out


class _Stream:
    def __init__(self, toks: list):
        self.toks, self.i = toks, 0

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str = "token") -> _Tok:
        t = self.peek()
        if t is None:
            last = self.toks[-1] if self.toks else _Tok("", 1, 1)
            raise FormatError(f"unexpected end of input, expected {what}", last.line, last.col)
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.next(repr(text))
        if t.text != text:
            raise FormatError(f"expected {text!r}, found {t.text!r}", t.line, t.col)
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text


def _parse_symbol(tok: _Tok) -> tuple:
    name, sep, ar = tok.text.rpartition("/")
    if not sep or not name or not ar.isdigit() or int(ar) < 1:
        raise FormatError(f"malformed symbol declaration {tok.text!r} (want name/arity)",
                          tok.line, tok.col)
    return name, int(ar)


# ---------------------------------------------------------------- structures

def parse_structures(text: str) -> list:
    s = _Stream(_tokenize(text))
    s.expect("signature")
    symbols = []
    while s.peek() is not None and s.peek().text != "structure":
        symbols.append(_parse_symbol(s.next()))
    try:
        sig = Signature(symbols)
    except ValueError as e:
        raise FormatError(str(e), 1, 1) from None
    out = []
    while s.peek() is not None:
        out.append(_parse_structure_block(s, sig))
    if not out:
        raise FormatError("no structure block")
    return out


def parse_structure(text: str) -> FiniteStructure:
    out = parse_structures(text)
    if len(out) != 1:
        raise FormatError(f"expected one structure, found {len(out)}")
    return out[0]


def _parse_structure_block(s: _Stream, sig: Signature) -> FiniteStructure:
    s.expect("structure")
    name = s.next("structure name").text
    s.expect("{")
    s.expect("elements")
    labels = []
    while not s.at(";"):
        t = s.next("element name or ';'")
        if t.text in labels:
            raise FormatError(f"duplicate element {t.text!r}", t.line, t.col)
        labels.append(t.text)
    s.expect(";")
    index = {x: i for i, x in enumerate(labels)}
    n = len(labels)
    facts = {nm: [] for nm in sig.names}
    maps: dict = {}
    label_rels: dict = {}
    while True:
        t = s.next("fact or '}'")
        if t.text == "}":
            break
        if t.text == "labels":
            mname = s.next("map name").text
            s.expect(":")
            vals = []
            while not s.at(";"):
                v = s.next("label value")
                if not v.text.isdigit():
                    raise FormatError(f"label value {v.text!r} is not a natural number",
                                      v.line, v.col)
                vals.append(int(v.text))
            s.expect(";")
            if len(vals) != n:
                raise FormatError(f"label map {mname} has {len(vals)} values for {n} elements",
                                  t.line, t.col)
            maps[mname] = np.array(vals, dtype=np.int64)
            continue
        sym = t.text
        if sym not in sig:
            raise FormatError(f"unknown symbol {sym!r}", t.line, t.col)
        k = sig.arity(sym)
        if s.at("~"):
            s.next()
            label_rels[sym] = _parse_label_relation(s, sym, k, maps, n)
            continue
        s.expect("(")
        args = []
        while not s.at(")"):
            a = s.next("element or ')'")
            if a.text not in index:
                raise FormatError(f"unknown element {a.text!r}", a.line, a.col)
            args.append(index[a.text])
        close = s.expect(")")
        if len(args) != k:
            raise FormatError(f"{sym} has arity {k} but the fact has {len(args)} arguments",
                              close.line, close.col)
        facts[sym].append(tuple(args))
    rels = {}
    for nm in sig.names:
        if nm in label_rels:
            if facts[nm]:
                raise FormatError(f"{nm} is given both as facts and as a label table")
            rels[nm] = label_rels[nm]
        else:
            rels[nm] = facts[nm]
    return FiniteStructure(sig, n, rels, labels, name)


def _parse_label_relation(s: _Stream, sym: str, k: int, maps: dict, n: int) -> LabelRelation:
    kind = s.next("'eq' or 'table'")
    names = []
    while not s.at(";") and not s.at(":"):
        t = s.next("map name")
        if t.text not in maps:
            raise FormatError(f"unknown label map {t.text!r}", t.line, t.col)
        names.append(t.text)
    if len(names) != k:
        raise FormatError(f"{sym} has arity {k} but {len(names)} label maps", kind.line, kind.col)
    labels = [(("map", m), maps[m]) for m in names]
    if kind.text == "eq":
        s.expect(";")
        if k != 2:
            raise FormatError("equality label relations are binary", kind.line, kind.col)
        return LabelRelation(n, labels, None)
    if kind.text != "table":
        raise FormatError(f"expected 'eq' or 'table', found {kind.text!r}", kind.line, kind.col)
    s.expect(":")
    rows = []
    while not s.at(";"):
        s.expect("(")
        row = []
        while not s.at(")"):
            v = s.next("label")
            if not v.text.isdigit():
                raise FormatError(f"label {v.text!r} is not a natural number", v.line, v.col)
            row.append(int(v.text))
        close = s.expect(")")
        if len(row) != k:
            raise FormatError(f"label row of length {len(row)} for arity {k}", close.line, close.col)
        rows.append(tuple(row))
    s.expect(";")
    return LabelRelation(n, labels, rows)


def _safe_name(name: str, default: str) -> str:
    return re.sub(r"[\s();{}]", "_", name) or default


def emit_signature(sig: Signature) -> str:
    return "signature " + " ".join(f"{n}/{a}" for n, a in sig)


def emit_structure(A: FiniteStructure, with_signature: bool = True) -> str:
    names = [A.label(i) for i in range(A.size)]
    lines = [emit_signature(A.signature)] if with_signature else []
    lines.append(f"structure {_safe_name(A.name, 'A')} {{")
    lines.append("  elements " + " ".join(names) + ";" if names else "  elements ;")
    map_names: dict = {}
    for sym in A.signature.names:
        rel = A.rel(sym)
        if isinstance(rel, LabelRelation):
            ms = []
            for arr in rel.maps:
                text = " ".join(str(int(v)) for v in arr.tolist())
                if text not in map_names:
                    map_names[text] = f"m{len(map_names)}"
                    lines.append(f"  labels {map_names[text]} : {text};")
                ms.append(map_names[text])
            ms = " ".join(ms)
            if rel.is_equality:
                lines.append(f"  {sym} ~ eq {ms};")
            else:
                rows = " ".join("(" + " ".join(map(str, r)) + ")" for r in sorted(rel.allowed))
                lines.append(f"  {sym} ~ table {ms} : {rows};")
        else:
            for t in rel.tuples():
                lines.append(f"  {sym}(" + " ".join(names[x] for x in t) + ")")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- specs

def parse_spec(text: str) -> BoundSpec:
    s = _Stream(_tokenize(text))
    s.expect("spec")
    name = s.next("spec name").text
    s.expect("{")
    s.expect("signature")
    symbols = []
    while not s.at(";"):
        symbols.append(_parse_symbol(s.next("symbol")))
    s.expect(";")
    sig = Signature(symbols)
    bound = None
    if s.at("bound"):
        s.next()
        t = s.next("bound size")
        if not t.text.isdigit():
            raise FormatError(f"bound size {t.text!r} is not a number", t.line, t.col)
        bound = int(t.text)
        s.expect(";")
    clauses = []
    while True:
        t = s.next("'clause' or '}'")
        if t.text == "}":
            break
        if t.text != "clause":
            raise FormatError(f"expected 'clause', found {t.text!r}", t.line, t.col)
        clauses.append(_parse_clause(s, sig))
    if s.peek() is not None:
        t = s.peek()
        raise FormatError(f"trailing input {t.text!r}", t.line, t.col)
    width = max((c.variable_count for c in clauses), default=1)
    if bound is not None and bound < width:
        raise FormatError(f"bound {bound} is smaller than a clause with {width} variables")
    return BoundSpec(sig, tuple(clauses), None, name, bound or max(width, 1))


def _parse_clause(s: _Stream, sig: Signature) -> Clause:
    variables: dict = {}
    lits = []
    while True:
        t = s.next("literal")
        positive = not t.text.startswith("!")
        sym = t.text if positive else t.text[1:]
        if sym != EQ and sym not in sig:
            raise FormatError(f"unknown symbol {sym!r} in clause", t.line, t.col)
        k = 2 if sym == EQ else sig.arity(sym)
        s.expect("(")
        args = []
        while not s.at(")"):
            v = s.next("variable")
            args.append(variables.setdefault(v.text, len(variables)))
        close = s.expect(")")
        if len(args) != k:
            raise FormatError(f"{sym} takes {k} arguments, got {len(args)}", close.line, close.col)
        lits.append(Literal(positive, sym, tuple(args)))
        if not s.at("|"):
            break
        s.next()
    return Clause(max(len(variables), 1), tuple(lits))


def emit_spec(spec: BoundSpec) -> str:
    if spec.clauses is None:
        raise ValueError("only clause specs have a text form")
    lines = [f"spec {_safe_name(spec.name, 'spec')} {{",
             "  signature " + " ".join(f"{n}/{a}" for n, a in spec.signature) + ";",
             f"  bound {spec.max_bound_size};"]
    for c in spec.clauses:
        lits = []
        for l in c.literals:
            sign = "" if l.positive else "!"
            lits.append(f"{sign}{l.symbol}(" + " ".join(f"x{a}" for a in l.args) + ")")
        lines.append("  clause " + " | ".join(lits))
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- operation tables

def parse_op(text: str) -> OperationTable:
    s = _Stream(_tokenize(text))
    s.expect("op")
    fields = {}
    while s.peek() is not None and "=" in s.peek().text:
        t = s.next()
        key, _, val = t.text.partition("=")
        if key not in ("arity", "domain", "codomain") or not val.isdigit():
            raise FormatError(f"bad header field {t.text!r}", t.line, t.col)
        fields[key] = int(val)
    for key in ("arity", "domain"):
        if key not in fields:
            raise FormatError(f"missing header field {key!r}")
    values = []
    while s.peek() is not None:
        t = s.next()
        if not t.text.isdigit():
            raise FormatError(f"table value {t.text!r} is not a natural number", t.line, t.col)
        values.append(int(t.text))
    try:
        return OperationTable(fields["arity"], fields["domain"], values, fields.get("codomain"))
    except ValueError as e:
        raise FormatError(str(e)) from None


def emit_op(f: OperationTable) -> str:
    head = f"op arity={f.arity} domain={f.domain_size}"
    if f.codomain_size is not None and f.codomain_size != f.domain_size:
        head += f" codomain={f.codomain_size}"
    return head + "\n" + " ".join(map(str, f.values)) + "\n"
