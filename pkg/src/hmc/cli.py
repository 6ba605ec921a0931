"""Command-line front end.

Commands:
  check      full pipeline: clone, translate, prove, extract, re-validate
  translate  print the IMP translation of a constraint file
  clone      print the cloned (read-write-once) constraint file
  exec       run the finite-domain oracle on a program or constraint file
  validate   check a solution file against a constraint file

Exit codes: 0 SAFE/SATISFIED, 1 UNSAFE/VIOLATED, 2 INCONCLUSIVE/UNKNOWN,
3 usage or I/O error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field as dc_field

from . import absint, clone as clone_mod, constraints, imp, translate as trans
from .logic import (
    INVALID,
    LogicError,
    OracleMode,
    SolverMode,
    SolverProtocolError,
    SolverUnavailable,
    UNKNOWN,
    VALID,
    ValueDomain,
)
from .sexpr import SexprError

EXIT_SAFE = 0
EXIT_UNSAFE = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 3
EXIT_SOLVER = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunReport:
    verdict: str = ""
    solution: dict = dc_field(default_factory=dict)
    invariant: str = ""
    trace: list | None = None
    timings: dict = dc_field(default_factory=dict)
    artifacts: list = dc_field(default_factory=list)
    detail: str = ""

    def to_json(self):
        return json.dumps(
            {
                "verdict": self.verdict,
                "solution": self.solution,
                "invariant": self.invariant,
                "trace": self.trace,
                "timings": self.timings,
                "artifacts": self.artifacts,
                "detail": self.detail,
            },
            indent=2,
        )


def _parse_range(text):
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError as exc:
        raise UsageError(f"bad range {text!r}, expected LO..HI") from exc


def _domain(args):
    int_range = _parse_range(args.int_range)
    ui_ranges = []
    for spec in args.ui_range or []:
        if "=" not in spec:
            raise UsageError(f"bad --ui-range {spec!r}, expected NAME=LO..HI")
        name, rng = spec.split("=", 1)
        ui_ranges.append((name, _parse_range(rng)))
    try:
        return ValueDomain(int_range, tuple(ui_ranges))
    except LogicError as exc:
        raise UsageError(str(exc)) from exc


def _solver_mode(args):
    cmd = getattr(args, "smt_cmd", None) or os.environ.get("HMC_SMT_CMD") or None
    return SolverMode(cmd, getattr(args, "emit_smt", None))


def _read(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from exc


def _load_constraints(path):
    text = _read(path)
    try:
        return constraints.normalize(constraints.parse_constraints(text))
    except (SexprError, constraints.ConstraintError, LogicError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _pipeline_program(args, cs):
    if args.no_clone:
        cloned, cm = cs, clone_mod.CloneMap()
    else:
        cloned, cm = clone_mod.clone(cs)
    p = trans.translate_set_of_constraints(cloned, cm)
    if getattr(args, "simplify", False):
        p = trans.simplify(p)
    return p, cloned, cm


def _add_domain_flags(sp):
    sp.add_argument("--int-range", default="-2..2", metavar="LO..HI")
    sp.add_argument("--ui-range", action="append", metavar="NAME=LO..HI")
    sp.add_argument("--table-budget", type=int, default=256)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--fuel", type=int, default=10_000)


def _add_solver_flags(sp):
    sp.add_argument("--smt-cmd", help="external solver command reading SMT-LIB on stdin")
    sp.add_argument("--emit-smt", metavar="DIR", help="dump every solver query to DIR")


def build_parser():
    ap = _Parser(prog="hmc", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("check", help="prove a constraint file and extract a solution")
    sp.add_argument("file")
    sp.add_argument("--no-clone", action="store_true")
    sp.add_argument("--oracle", action="store_true", help="hunt counterexamples with the finite-domain oracle")
    sp.add_argument("--preds", metavar="FILE", help="extra abstraction predicates")
    sp.add_argument("--emit-imp", metavar="PATH")
    sp.add_argument("--json", action="store_true")
    _add_domain_flags(sp)
    _add_solver_flags(sp)

    sp = sub.add_parser("translate", help="print the IMP translation")
    sp.add_argument("file")
    sp.add_argument("--no-clone", action="store_true")
    sp.add_argument("--simplify", action="store_true")
    sp.add_argument("--emit-imp", metavar="PATH")

    sp = sub.add_parser("clone", help="print the read-write-once cloning")
    sp.add_argument("file")

    sp = sub.add_parser("exec", help="run the finite-domain oracle")
    sp.add_argument("file", help=".imp program or .hmc constraint file")
    sp.add_argument("--semantics", choices=["relational", "imperative"], default="relational")
    sp.add_argument("--no-clone", action="store_true")
    sp.add_argument("--json", action="store_true")
    _add_domain_flags(sp)

    sp = sub.add_parser("validate", help="check a solution against constraints")
    sp.add_argument("file")
    sp.add_argument("--solution", required=True, metavar="FILE")
    sp.add_argument("--mode", choices=["solver", "oracle"], default="solver")
    sp.add_argument("--json", action="store_true")
    _add_domain_flags(sp)
    _add_solver_flags(sp)
    return ap


# ---------------------------------------------------------------------------
# Commands


def cmd_check(args, out):
    report = RunReport()
    t0 = time.monotonic()
    cs = _load_constraints(args.file)
    p, cloned, cm = _pipeline_program(args, cs)
    report.timings["translate"] = time.monotonic() - t0
    if args.emit_imp:
        with open(args.emit_imp, "w") as fh:
            fh.write(imp.print_imp(p))
        report.artifacts.append(args.emit_imp)
    extra = absint.parse_preds(_read(args.preds), p) if args.preds else None
    mode = _solver_mode(args)
    t1 = time.monotonic()
    preds = absint.harvest_predicates(p, extra)
    result = absint.solve(p, preds, mode)
    report.timings["solve"] = time.monotonic() - t1
    if result.status == absint.PROVED:
        sol = absint.extract_solution(result.invariant, preds, cloned.kvars)
        folded = clone_mod.fold_solution(sol, cm, cs)
        t2 = time.monotonic()
        sat = constraints.check_satisfied(cs, folded, mode)
        report.timings["validate"] = time.monotonic() - t2
        if sat.satisfied:
            report.verdict = "SAFE"
            report.invariant = absint.format_invariant(result.invariant, preds)
            report.solution = {
                k: constraints.print_solution(
                    constraints.Solution(constraints.INTENSIONAL, {k: q}), cs
                ).strip()
                for k, q in folded.entries.items()
            }
            _emit(args, out, report, _render_safe(report))
            return EXIT_SAFE
        label, verdict = sat.first_failure
        report.detail = f"extracted solution failed re-validation at {label}"
    else:
        f = result.failing
        report.detail = f"abstraction cannot prove {f.label}"
    if args.oracle:
        t3 = time.monotonic()
        verdict = imp.exec_program(
            p,
            _domain(args),
            "relational",
            args.table_budget,
            args.seed,
            args.fuel,
        )
        report.timings["oracle"] = time.monotonic() - t3
        if verdict.status == imp.UNSAFE:
            report.verdict = "UNSAFE"
            report.trace = verdict.trace
            _emit(args, out, report, f"UNSAFE\ntrace: {' -> '.join(verdict.trace)}")
            return EXIT_UNSAFE
    report.verdict = "INCONCLUSIVE"
    _emit(args, out, report, f"INCONCLUSIVE\n{report.detail}")
    return EXIT_INCONCLUSIVE


def _render_safe(report):
    lines = ["SAFE"]
    if report.invariant:
        lines.append("invariant:")
        lines.extend("  " + l for l in report.invariant.splitlines())
    if report.solution:
        lines.append("solution:")
        for k in sorted(report.solution):
            lines.append(f"  {report.solution[k]}")
    return "\n".join(lines)


def cmd_translate(args, out):
    cs = _load_constraints(args.file)
    p, _, _ = _pipeline_program(args, cs)
    text = imp.print_imp(p)
    if args.emit_imp:
        with open(args.emit_imp, "w") as fh:
            fh.write(text)
    out.write(text)
    return EXIT_SAFE


def cmd_clone(args, out):
    cs = _load_constraints(args.file)
    cloned, _ = clone_mod.clone(cs)
    out.write(constraints.print_constraints(cloned))
    return EXIT_SAFE


def cmd_exec(args, out):
    report = RunReport()
    if args.file.endswith(".imp"):
        try:
            p = imp.parse_imp(_read(args.file))
        except imp.ParseError as exc:
            raise UsageError(f"{args.file}: {exc}") from exc
    else:
        cs = _load_constraints(args.file)
        p, _, _ = _pipeline_program(args, cs)
    verdict = imp.exec_program(
        p, _domain(args), args.semantics, args.table_budget, args.seed, args.fuel
    )
    if verdict.status == imp.UNSAFE:
        report.verdict = "UNSAFE"
        report.trace = verdict.trace
        _emit(args, out, report, f"UNSAFE\ntrace: {' -> '.join(verdict.trace)}")
        return EXIT_UNSAFE
    if verdict.status == imp.SAFE:
        report.verdict = "SAFE"
        _emit(args, out, report, "SAFE")
        return EXIT_SAFE
    report.verdict = "INCONCLUSIVE"
    report.detail = "sampled interpretations only; no counterexample found"
    _emit(args, out, report, f"INCONCLUSIVE\n{report.detail}")
    return EXIT_INCONCLUSIVE


def cmd_validate(args, out):
    report = RunReport()
    cs = _load_constraints(args.file)
    try:
        sol = constraints.parse_solution(_read(args.solution))
    except (SexprError, constraints.ConstraintError) as exc:
        raise UsageError(f"{args.solution}: {exc}") from exc
    if args.mode == "solver":
        mode = _solver_mode(args)
    else:
        mode = OracleMode(_domain(args), args.table_budget, args.seed)
    sat = constraints.check_satisfied(cs, sol, mode)
    if sat.satisfied:
        report.verdict = "SATISFIED"
        _emit(args, out, report, "SATISFIED")
        return EXIT_SAFE
    label, verdict = sat.first_failure
    if verdict.status == INVALID:
        report.verdict = "VIOLATED"
        witness = dict(verdict.witness.var_values) if verdict.witness else {}
        report.detail = f"{label}: witness {witness}"
        _emit(args, out, report, f"VIOLATED({label})\nwitness: {witness}")
        return EXIT_UNSAFE
    report.verdict = "UNKNOWN"
    report.detail = f"{label}: solver returned unknown"
    _emit(args, out, report, f"UNKNOWN\n{report.detail}")
    return EXIT_INCONCLUSIVE


def _emit(args, out, report, text):
    if getattr(args, "json", False):
        out.write(report.to_json() + "\n")
    else:
        out.write(text + "\n")


COMMANDS = {
    "check": cmd_check,
    "translate": cmd_translate,
    "clone": cmd_clone,
    "exec": cmd_exec,
    "validate": cmd_validate,
}


def _join_range_flags(argv):
    """`--int-range -1..1` would be read as two flags; fold the value in."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in ("--int-range", "--ui-range") and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None, out=None):
    out = out or sys.stdout
    if argv is None:
        argv = sys.argv[1:]
    argv = _join_range_flags(list(argv))
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverUnavailable, SolverProtocolError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
