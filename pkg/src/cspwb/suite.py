"""Acceptance suites.  Each suite returns a :class:`SuiteResult` with the
artifacts it emitted; ``run_suites`` writes those to disk so two runs can be
compared byte for byte.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import random
import resource
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import oracles
from .agespec import all_structures, builtin_linear_order, enumerate_d_types
from .construct import (E, NEQ, build_pcsp, finite_blowup_model, full_power_finite,
                        full_power_instance)
from .datalog import acyclicity_check, blowup_expand, blowup_reduce_star, i4_quotient_reduce
from .formats import emit_op, emit_structure
from .library import chain, clique, parity_structure
from .polyfind import (IdentityKind, OperationTable, check_essentially_injective,
                       find_polymorphism, i4_preserved, lift_homomorphism, preserves,
                       satisfies_identity)
from .relcore import Signature, find_homomorphism, iter_homomorphisms, structure


@dataclass
class SuiteResult:
    key: str
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0
    budget: float = 0.0
    artifacts: dict = field(default_factory=dict)


class _Context:
    """Shared state between suites (the demo template is built once)."""

    def __init__(self, seed: int):
        self.seed = seed
        self._pcsp = None

    def pcsp(self):
        if self._pcsp is None:
            self._pcsp = build_pcsp(builtin_linear_order(), ["<"], chain(3))
        return self._pcsp


def _digest(lines) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()


def _random_structure(rng: random.Random, n: int, symbols) -> "structure":
    q = rng.random()
    rels = {}
    for s, k in symbols:
        p = q * q / (n ** (k - 2)) if k > 2 else q * q
        rels[s] = [t for t in itertools.product(range(n), repeat=k) if rng.random() < p]
    return structure(symbols, n, rels)


# ---------------------------------------------------------------- suites

def suite_datalog(ctx: _Context) -> SuiteResult:
    rng = random.Random(ctx.seed * 1000 + 1)
    sig = Signature([("<", 2)])
    instances = [X for n in range(1, 4) for X in all_structures(sig, n)]
    instances += [_random_structure(rng, rng.randint(1, 5), [("<", 2)]) for _ in range(100_000)]
    bad, yes, log = 0, 0, []
    for J in instances:
        a = acyclicity_check(J)
        b = find_homomorphism(J, chain(J.size)) is not None
        bad += a != b
        yes += a
        log.append(f"{J.canonical_form()} {int(a)}")
    detail = f"{len(instances)} instances, {yes} acyclic, {bad} disagreements"
    return SuiteResult("1", "Datalog acyclicity vs homomorphism into the |J|-chain", bad == 0,
                       detail, budget=60,
                       artifacts={"decisions.sha256": _digest(log) + "\n",
                                  "summary.txt": detail + "\n"})


def suite_blowup_reduction(ctx: _Context) -> SuiteResult:
    rng = random.Random(ctx.seed * 1000 + 2)
    model = finite_blowup_model(chain(5), 5)
    bad, yes, log = 0, 0, []
    for _ in range(10_000):
        J = _random_structure(rng, rng.randint(1, 5), [("<", 2), (E, 2), (NEQ, 2)])
        a = acyclicity_check(blowup_reduce_star(J, ["<"]))
        b = find_homomorphism(J, model) is not None
        bad += a != b
        yes += a
        log.append(f"{J.canonical_form()} {int(a)}")
    detail = f"10000 instances, {yes} positive, {bad} disagreements"
    return SuiteResult("2", "blowup reduction vs finite blowup model", bad == 0, detail, budget=120,
                       artifacts={"decisions.sha256": _digest(log) + "\n",
                                  "summary.txt": detail + "\n"})


def suite_i4_reduction(ctx: _Context) -> SuiteResult:
    rng = random.Random(ctx.seed * 1000 + 3)
    model = finite_blowup_model(chain(5), 5, with_I4=True)
    bad, yes, log = 0, 0, []
    merged = 0
    for _ in range(1_000):
        J = _random_structure(rng, rng.randint(1, 5), [("<", 2), (E, 2), (NEQ, 2), ("I4", 4)])
        Q = i4_quotient_reduce(J)
        merged += Q.size < J.size
        a = acyclicity_check(blowup_reduce_star(Q, ["<"]))
        b = find_homomorphism(J, model) is not None
        bad += a != b
        yes += a
        log.append(f"{J.canonical_form()} {int(a)}")
    detail = f"1000 instances, {merged} with merges, {yes} positive, {bad} disagreements"
    return SuiteResult("3", "I4 quotient reduction vs blowup model with I4", bad == 0, detail,
                       budget=120, artifacts={"decisions.sha256": _digest(log) + "\n",
                                              "summary.txt": detail + "\n"})


def suite_identities(ctx: _Context) -> SuiteResult:
    K3, A1, C3 = clique(3), parity_structure(), chain(3)
    notes, ok, arts = [], True, {}
    f = find_polymorphism(K3, K3, 2, IdentityKind.commutative())
    sym = sum(oracles.table_preserves(t, 2, K3, K3) for t in oracles.symmetric_binary_tables(3))
    ok &= f is None and sym == 0
    notes.append(f"(a) K3 commutative: search {'none' if f is None else 'found'}, "
                 f"exhaustive 729 tables -> {sym} polymorphisms")
    f = find_polymorphism(K3, K3, 3, IdentityKind.cyclic(3))
    ok &= f is None
    notes.append(f"(b) K3 cyclic ternary: {'none' if f is None else 'found'}")
    f = find_polymorphism(A1, A1, 3, IdentityKind.cyclic(3))
    good = f is not None and preserves(f, A1) and satisfies_identity(f, IdentityKind.cyclic(3))
    ok &= good
    notes.append(f"(c) A1 cyclic ternary: {'verified' if good else 'missing'}")
    if f is not None:
        arts["a1_cyclic3.op"] = emit_op(f)
    f = find_polymorphism(C3, C3, 2, IdentityKind.commutative())
    good = f is not None and preserves(f, C3) and satisfies_identity(f, IdentityKind.commutative())
    ok &= good
    notes.append(f"(d) 3-chain commutative: {'verified' if good else 'missing'}")
    if f is not None:
        arts["chain3_commutative.op"] = emit_op(f)
    arts["summary.txt"] = "\n".join(notes) + "\n"
    return SuiteResult("4", "identity search regression", ok, "; ".join(notes), budget=30,
                       artifacts=arts)


def suite_pipeline(ctx: _Context) -> SuiteResult:
    P = ctx.pcsp()
    notes, ok = [], True
    ok &= P.d == 4
    notes.append(f"d={P.d}")
    ok &= P.S1.size == 81
    notes.append(f"|S1|={P.S1.size} |S2|={P.S2.size}")
    replay = P.verify()
    ok &= replay
    notes.append(f"S1->S2 replay {'ok' if replay else 'FAILED'}")
    for n in (2, 3):
        f = find_polymorphism(P.S1, P.S2, n, IdentityKind.cyclic(n))
        ok &= f is None
        notes.append(f"cyclic n={n}: {'none' if f is None else 'FOUND'}")
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024
    ok &= rss <= 1024
    notes.append(f"peak rss {rss:.0f} MiB")
    arts = {"S1.txt": emit_structure(P.S1), "S2.txt": emit_structure(P.S2),
            "types.txt": P.type_table.serialize(),
            "map.txt": " ".join(map(str, P.quotient_map)) + "\n",
            "summary.txt": "\n".join(n for n in notes if not n.startswith("peak")) + "\n"}
    return SuiteResult("5", "pipeline on the linear-order demo", ok, ", ".join(notes),
                       budget=600, artifacts=arts)


def suite_lifting(ctx: _Context) -> SuiteResult:
    P = ctx.pcsp()
    tau_up = ["<", E, NEQ]
    sig = Signature([("<", 2)])
    bad, pos, log, arts = 0, 0, [], {}
    for n in (1, 2, 3):
        for X in all_structures(sig, n):
            XD = full_power_instance(blowup_expand(X), P.d)
            h = find_homomorphism(XD, P.S2)
            acyclic = oracles.brute_acyclic(X.tuples("<"), X.size)
            if (h is not None) != acyclic:
                bad += 1
            if h is not None:
                pos += 1
                cert = lift_homomorphism(X, h, P.type_table, P.spec, tau_up, P.d, P.S2, XD)
                if not cert.positive:
                    bad += 1
                log.append(f"{X.canonical_form()} 1 {cert.hom_to_quotient}")
                arts[f"lift_{len(arts):02d}.txt"] = emit_structure(cert.quotient.rename(
                    f"lift{len(arts)}"))
            else:
                log.append(f"{X.canonical_form()} 0")
    detail = f"{len(log)} structures, {pos} with h, {bad} disagreements"
    arts["verdicts.txt"] = "\n".join(log) + "\n"
    return SuiteResult("6", "lifting equivalence for |X| <= 3", bad == 0, detail, budget=600,
                       artifacts=arts)


def suite_full_power_endos(ctx: _Context) -> SuiteResult:
    S, d = chain(2), 2
    FP = full_power_finite(S, d)
    coords = list(itertools.product(range(S.size), repeat=d))
    # element i of the full power has coordinate 1 as least significant digit
    index = {c[::-1]: i for i, c in enumerate(coords)}
    endos_fp = set(iter_homomorphisms(FP, FP))
    endos_s = list(iter_homomorphisms(S, S))
    actions = {tuple(index[tuple(e[x] for x in c[::-1])] for c in coords)
               for e in endos_s}
    ok = endos_fp == actions
    detail = f"{len(endos_fp)} endomorphisms of the full power, {len(actions)} componentwise actions"
    arts = {"endos.txt": "\n".join(" ".join(map(str, e)) for e in sorted(endos_fp)) + "\n"}
    return SuiteResult("7", "full power endomorphisms are componentwise", ok, detail, budget=60,
                       artifacts=arts)


def suite_type_counts(ctx: _Context) -> SuiteResult:
    spec = builtin_linear_order()
    counts = [len(enumerate_d_types(spec, d)) for d in range(1, 5)]
    oracle = [oracles.count_weak_orders(d) for d in range(1, 5)]
    ok = counts == oracle == [1, 3, 13, 75]
    detail = f"types {counts}, weak orders {oracle}"
    arts = {f"types_d{d}.txt": enumerate_d_types(spec, d).serialize() for d in range(1, 5)}
    return SuiteResult("8", "type counts of the linear order", ok, detail, budget=30,
                       artifacts=arts)


def suite_injectivity(ctx: _Context) -> SuiteResult:
    rng = np.random.default_rng(ctx.seed * 1000 + 9)
    tables = list(oracles.symmetric_binary_tables(3))
    tables += [tuple(int(v) for v in row) for row in rng.integers(0, 3, size=(100_000, 9))]
    bad, inj = 0, 0
    for vals in tables:
        f = OperationTable(2, 3, vals)
        a = check_essentially_injective(f, cross_check=False)
        b = i4_preserved(f)
        bad += a != b
        inj += a
    # spot check both routes against the plain-loop oracles
    for vals in tables[:729 + 200]:
        f = OperationTable(2, 3, vals)
        if check_essentially_injective(f, cross_check=False) != \
                oracles.brute_essentially_injective(vals, 2, 3):
            bad += 1
        if i4_preserved(f) != oracles.brute_i4_preserved(vals, 2, 3):
            bad += 1
    detail = f"{len(tables)} tables, {inj} essentially injective, {bad} exceptions"
    return SuiteResult("9", "essential injectivity iff I4 preserved", bad == 0, detail, budget=60,
                       artifacts={"summary.txt": detail + "\n"})


SUITES: dict = {
    "1": ("datalog", suite_datalog),
    "2": ("blowup", suite_blowup_reduction),
    "3": ("i4", suite_i4_reduction),
    "4": ("identities", suite_identities),
    "5": ("pipeline", suite_pipeline),
    "6": ("lifting", suite_lifting),
    "7": ("fullpower", suite_full_power_endos),
    "8": ("types", suite_type_counts),
    "9": ("injectivity", suite_injectivity),
}


def _selected(filt: Optional[str]) -> list:
    if not filt:
        return list(SUITES)
    wanted = {f.strip() for f in filt.split(",")}
    return [k for k, (name, _) in SUITES.items() if k in wanted or name in wanted]


def run_suites(filt: Optional[str] = None, out_dir: Optional[str] = None, seed: int = 0,
               echo: Optional[Callable[[str], None]] = None) -> list:
    ctx = _Context(seed)
    results = []
    for key in _selected(filt):
        name, fn = SUITES[key]
        t = time.perf_counter()
        try:
            r = fn(ctx)
        except Exception as e:      # a crashing suite is a failing suite
            r = SuiteResult(key, name, False, f"{type(e).__name__}: {e}")
        r.seconds = time.perf_counter() - t
        if r.budget and r.seconds > r.budget:
            r.passed = False
            r.detail += f" (over budget: {r.seconds:.1f}s > {r.budget:.0f}s)"
        results.append(r)
        if echo:
            echo(format_result(r))
        if out_dir:
            base = Path(out_dir) / "artifacts" / f"{key}-{name}"
            base.mkdir(parents=True, exist_ok=True)
            for fname, text in sorted(r.artifacts.items()):
                (base / fname).write_text(text)
    if out_dir:
        report = [{"key": r.key, "title": r.title, "passed": r.passed, "detail": r.detail,
                   "seconds": round(r.seconds, 2)} for r in results]
        Path(out_dir, "report.json").write_text(json.dumps(report, indent=1) + "\n")
    return results


def format_result(r: SuiteResult) -> str:
    return f"[{'PASS' if r.passed else 'FAIL'}] criterion {r.key}: {r.title} -- {r.detail} " \
           f"({r.seconds:.1f}s)"


def compare_artifact_trees(a: str, b: str) -> list:
    """Relative paths whose bytes differ (or exist on one side only)."""
    pa, pb = Path(a), Path(b)
    fa = {p.relative_to(pa) for p in pa.rglob("*") if p.is_file()}
    fb = {p.relative_to(pb) for p in pb.rglob("*") if p.is_file()}
    diff = sorted(str(p) for p in fa ^ fb)
    for p in sorted(fa & fb):
        if (pa / p).read_bytes() != (pb / p).read_bytes():
            diff.append(str(p))
    return diff
