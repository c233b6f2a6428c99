"""Command line interface: ``python3 -m cspwb <command> ...``.

Exit codes: 0 success or decision "yes", 1 decision "no", 2 usage or input
error, 3 a size cap was exceeded.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .agespec import BoundSpec, enumerate_d_types
from .construct import (build_pcsp, finite_blowup_model, full_power_finite, blowup_spec,
                        superpose_specs, wreath_finite, wreath_spec)
from .datalog import (Database, DatalogError, acyclicity_check, blowup_expand,
                      blowup_reduce_star, evaluate, goal_holds, i4_quotient_reduce,
                      parse_program)
from .formats import (FormatError, emit_op, emit_spec, emit_structure, parse_spec,
                      parse_structure)
from .library import builtin_spec, builtin_structure
from .polyfind import IdentityKind, find_polymorphism
from .relcore import CapExceeded, Caps, caps_override, find_homomorphism, get_caps, parse_caps

log = logging.getLogger("cspwb")

EXIT_YES, EXIT_NO, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class WorkbenchConfig:
    caps: Caps
    seed: int = 0
    out: Optional[str] = None
    verbosity: int = 0


# ---------------------------------------------------------------- loading

def load_structure(ref: str):
    p = Path(ref)
    if p.is_file():
        return parse_structure(p.read_text())
    A = builtin_structure(ref)
    if A is None:
        raise UsageError(f"no structure file or builtin named {ref!r}")
    return A


def load_spec(ref: str) -> BoundSpec:
    p = Path(ref)
    if p.is_file():
        return parse_spec(p.read_text())
    spec = builtin_spec(ref)
    if spec is None:
        raise UsageError(f"no spec file or builtin named {ref!r}")
    return spec


def _names(text: str) -> list:
    return [t for t in text.replace(",", " ").split() if t]


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def cmd_build(args, cfg: WorkbenchConfig) -> int:
    what = args.what
    if what == "wreath":
        if args.a and args.b:
            _write(emit_structure(wreath_finite(load_structure(args.a), load_structure(args.b))),
                   args.out)
        elif args.spec_a and args.spec_b:
            _write(emit_spec(wreath_spec(load_spec(args.spec_a), load_spec(args.spec_b))), args.out)
        else:
            raise UsageError("build wreath needs --a/--b structures or --spec-a/--spec-b specs")
    elif what == "blowup":
        if args.s:
            m = args.m or load_structure(args.s).size
            _write(emit_structure(finite_blowup_model(load_structure(args.s), m, args.with_i4)),
                   args.out)
        elif args.spec and args.tau:
            spec, tau_up = blowup_spec(load_spec(args.spec), _names(args.tau), args.with_i4)
            _write(emit_spec(spec), args.out)
        else:
            raise UsageError("build blowup needs --s (finite model) or --spec with --tau")
    elif what == "superpose":
        if not (args.spec_a and args.spec_b):
            raise UsageError("build superpose needs --spec-a and --spec-b")
        _write(emit_spec(superpose_specs(load_spec(args.spec_a), load_spec(args.spec_b))), args.out)
    elif what == "fullpower":
        if not (args.s and args.d):
            raise UsageError("build fullpower needs --s and --d")
        _write(emit_structure(full_power_finite(load_structure(args.s), args.d)), args.out)
    elif what == "pcsp":
        if not (args.spec and args.tau and args.s):
            raise UsageError("build pcsp needs --spec, --tau and --s")
        try:
            P = build_pcsp(load_spec(args.spec), _names(args.tau), load_structure(args.s),
                           args.with_i4, args.d)
        except ValueError as e:
            raise UsageError(str(e)) from None
        print(f"d = {P.d}")
        print(f"S1: {P.S1.size} elements")
        print(f"S2: {P.S2.size} elements")
        print(f"symbols: {len(P.S1.signature)}")
        print(f"S1 -> S2 replay: {'ok' if P.verify() else 'FAILED'}")
        out = args.out or cfg.out
        if out:
            base = Path(out)
            base.mkdir(parents=True, exist_ok=True)
            (base / "S1.txt").write_text(emit_structure(P.S1))
            (base / "S2.txt").write_text(emit_structure(P.S2))
            (base / "types.txt").write_text(P.type_table.serialize())
            (base / "map.txt").write_text(" ".join(map(str, P.quotient_map)) + "\n")
            (base / "provenance.txt").write_text(
                "".join(f"{k}: {v}\n" for k, v in sorted(P.provenance.items())))
            print(f"wrote {base}")
    return EXIT_YES


def cmd_solve(args, cfg: WorkbenchConfig) -> int:
    J = load_structure(args.instance)
    if args.template in ("qlt", "linear"):
        ok = acyclicity_check(J)
    else:
        ok = find_homomorphism(J, load_structure(args.template)) is not None
    print("SAT" if ok else "UNSAT")
    return EXIT_YES if ok else EXIT_NO


def cmd_reduce(args, cfg: WorkbenchConfig) -> int:
    J = load_structure(args.instance)
    if args.how == "star":
        tau = _names(args.tau) if args.tau else [n for n in J.signature.names
                                                 if n not in ("E", "neq")]
        out = blowup_reduce_star(J, tau)
    elif args.how == "expand":
        out = blowup_expand(J)
    else:
        out = i4_quotient_reduce(J, keep_domain=args.keep_domain)
    _write(emit_structure(out), args.out)
    return EXIT_YES


def cmd_polysearch(args, cfg: WorkbenchConfig) -> int:
    S1 = load_structure(args.s1)
    S2 = load_structure(args.s2) if args.s2 else S1
    kind = IdentityKind.parse(args.kind, args.arity)
    if kind.arity != args.arity:
        raise UsageError(f"{args.kind} has arity {kind.arity}, not {args.arity}")
    f = find_polymorphism(S1, S2, args.arity, kind)
    if f is None:
        print("none")
        return EXIT_NO
    _write(emit_op(f), args.out)
    return EXIT_YES


def cmd_types(args, cfg: WorkbenchConfig) -> int:
    T = enumerate_d_types(load_spec(args.spec), args.d)
    print(len(T))
    if args.list:
        sys.stdout.write(T.serialize())
    return EXIT_YES


def cmd_datalog(args, cfg: WorkbenchConfig) -> int:
    J = load_structure(args.instance)
    p = parse_program(Path(args.program).read_text(), J.signature)
    res = evaluate(p, Database.from_structure(J))
    for name in p.idb.names:
        for t in sorted(res.get(name)):
            print(f"{name}(" + " ".join(J.label(x) for x in t) + ")")
    if p.goal is not None:
        ok = goal_holds(p, res)
        print(f"goal: {'holds' if ok else 'fails'}")
        return EXIT_YES if ok else EXIT_NO
    return EXIT_YES


def cmd_suite(args, cfg: WorkbenchConfig) -> int:
    from .suite import run_suites
    results = run_suites(args.filter, args.out or cfg.out, cfg.seed, echo=print)
    failed = [r.key for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_YES if not failed else EXIT_NO


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cspwb", description="finite CSP/PCSP template workbench")
    p.add_argument("--caps", help="cap overrides, e.g. 'types=1000,domain=50'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file or directory")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="run a construction")
    b.add_argument("what", choices=["wreath", "blowup", "superpose", "fullpower", "pcsp"])
    b.add_argument("--a")
    b.add_argument("--b")
    b.add_argument("--spec")
    b.add_argument("--spec-a")
    b.add_argument("--spec-b")
    b.add_argument("--tau", help="reduct symbols, comma or space separated")
    b.add_argument("--s", help="structure file or builtin")
    b.add_argument("--m", type=int, help="rows of the finite blowup model")
    b.add_argument("--d", type=int)
    b.add_argument("--with-i4", action="store_true")
    b.add_argument("--out")
    b.set_defaults(fn=cmd_build)

    s = sub.add_parser("solve", help="decide a CSP instance")
    s.add_argument("problem", choices=["csp"])
    s.add_argument("--template", required=True)
    s.add_argument("--instance", required=True)
    s.set_defaults(fn=cmd_solve)

    r = sub.add_parser("reduce", help="apply a reduction to an instance")
    r.add_argument("how", choices=["star", "expand", "i4"])
    r.add_argument("--instance", required=True)
    r.add_argument("--tau")
    r.add_argument("--keep-domain", action="store_true")
    r.add_argument("--out")
    r.set_defaults(fn=cmd_reduce)

    ps = sub.add_parser("polysearch", help="search for a polymorphism with identities")
    ps.add_argument("--s1", required=True)
    ps.add_argument("--s2")
    ps.add_argument("--arity", type=int, required=True)
    ps.add_argument("--kind", default="none",
                    choices=["cyclic", "commutative", "siggers", "olsak", "none"])
    ps.add_argument("--out")
    ps.set_defaults(fn=cmd_polysearch)

    t = sub.add_parser("types", help="count (and list) d-types of a spec")
    t.add_argument("--spec", required=True)
    t.add_argument("--d", type=int, required=True)
    t.add_argument("--list", action="store_true")
    t.set_defaults(fn=cmd_types)

    dl = sub.add_parser("datalog", help="evaluate a Datalog program on an instance")
    dl.add_argument("--program", required=True)
    dl.add_argument("--instance", required=True)
    dl.set_defaults(fn=cmd_datalog)

    su = sub.add_parser("suite", help="run the acceptance suites")
    su.add_argument("action", choices=["run"])
    su.add_argument("--filter")
    su.add_argument("--out")
    su.set_defaults(fn=cmd_suite)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        caps = parse_caps(args.caps, get_caps()) if args.caps else get_caps()
    except ValueError as e:
        print(f"error [caps]: {e}", file=sys.stderr)
        return EXIT_USAGE
    cfg = WorkbenchConfig(caps, args.seed, args.out, args.verbose)
    stage = args.command
    try:
        with caps_override(**{f: getattr(caps, f) for f in caps.__dataclass_fields__}):
            return args.fn(args, cfg)
    except CapExceeded as e:
        print(f"error [{stage}]: cap exceeded: {e}", file=sys.stderr)
        return EXIT_CAP
    except (UsageError, FormatError, DatalogError, FileNotFoundError) as e:
        print(f"error [{stage}]: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"error [{stage}]: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
