"""Refinement logic: base types, expressions, predicates, evaluation and
validity checking.

The logic is quantifier-free linear integer arithmetic plus uninterpreted
functions. Booleans are modeled as integers restricted to {0,1}; uninterpreted
types are opaque sorts that the finite-domain oracle models as integer ranges.
"""

from __future__ import annotations

import itertools
import os
import random
import shlex
import subprocess
from dataclasses import dataclass, field

from . import sexpr

VALUE_VAR = "v"


class LogicError(Exception):
    pass


class UnboundVariable(LogicError):
    pass


class TypeMismatch(LogicError):
    pass


class UnknownFunction(LogicError):
    pass


class NonBoolAtom(LogicError):
    pass


class MissingBinding(LogicError):
    pass


class SolverUnavailable(LogicError):
    pass


class SolverProtocolError(LogicError):
    pass


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class BaseType:
    kind: str  # "int" | "bool" | "ui"
    ui_name: str | None = None

    def __post_init__(self):
        if self.kind not in ("int", "bool", "ui"):
            raise TypeMismatch(f"bad type kind {self.kind!r}")
        if (self.kind == "ui") != (self.ui_name is not None):
            raise TypeMismatch("ui types carry a name; int/bool do not")


INT = BaseType("int")
BOOL = BaseType("bool")


def ui(name):
    return BaseType("ui", name)


def type_to_sexpr(t):
    if t.kind == "ui":
        return ["ui", t.ui_name]
    return t.kind


def type_from_sexpr(form):
    if form == "int":
        return INT
    if form == "bool":
        return BOOL
    if isinstance(form, list) and len(form) == 2 and form[0] == "ui":
        return ui(form[1])
    raise TypeMismatch(f"bad type syntax {sexpr.to_str(form)}")


@dataclass(frozen=True)
class FuncSig:
    name: str
    arg_types: tuple
    ret_type: BaseType


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class ScalarMul:
    coeff: int
    arg: object


@dataclass(frozen=True)
class App:
    func: str
    args: tuple


# ---------------------------------------------------------------------------
# Predicates

CMP_OPS = ("=", "/=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Cmp:
    op: str
    left: object
    right: object

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise TypeMismatch(f"bad comparison operator {self.op!r}")


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Implies:
    left: object
    right: object


@dataclass(frozen=True)
class BoolVar:
    name: str


@dataclass(frozen=True)
class TrueLit:
    pass


@dataclass(frozen=True)
class FalseLit:
    pass


TRUE = TrueLit()
FALSE = FalseLit()


def mk_and(*ps):
    """Right-nested conjunction; absorbs true, short-circuits false."""
    ps = [p for p in ps if p != TRUE]
    if any(p == FALSE for p in ps):
        return FALSE
    if not ps:
        return TRUE
    out = ps[-1]
    for p in reversed(ps[:-1]):
        out = And(p, out)
    return out


def mk_or(*ps):
    """Disjunction encoded as (not p) => q (the AST has no or-node)."""
    ps = [p for p in ps if p != FALSE]
    if any(p == TRUE for p in ps):
        return TRUE
    if not ps:
        return FALSE
    out = ps[-1]
    for p in reversed(ps[:-1]):
        out = Implies(Not(p), out)
    return out


# ---------------------------------------------------------------------------
# Syntax <-> sexpr


def expr_to_sexpr(e):
    if isinstance(e, Var):
        return e.name
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, Add):
        return ["+", expr_to_sexpr(e.left), expr_to_sexpr(e.right)]
    if isinstance(e, ScalarMul):
        return ["*", e.coeff, expr_to_sexpr(e.arg)]
    if isinstance(e, App):
        return [e.func] + [expr_to_sexpr(a) for a in e.args]
    raise TypeMismatch(f"not an expression: {e!r}")


def expr_from_sexpr(form):
    if isinstance(form, int):
        return IntLit(form)
    if isinstance(form, str):
        return Var(form)
    if not form:
        raise TypeMismatch("empty expression form")
    head = form[0]
    if head == "+":
        args = [expr_from_sexpr(f) for f in form[1:]]
        if len(args) < 2:
            raise TypeMismatch("+ needs at least two arguments")
        out = args[0]
        for a in args[1:]:
            out = Add(out, a)
        return out
    if head == "-":
        args = [expr_from_sexpr(f) for f in form[1:]]
        neg = lambda e: IntLit(-e.value) if isinstance(e, IntLit) else ScalarMul(-1, e)
        if len(args) == 1:
            return neg(args[0])
        if len(args) == 2:
            return Add(args[0], neg(args[1]))
        raise TypeMismatch("- takes one or two arguments")
    if head == "*":
        if len(form) != 3 or not isinstance(form[1], int):
            raise TypeMismatch("* is affine: (* INT expr)")
        return ScalarMul(form[1], expr_from_sexpr(form[2]))
    if isinstance(head, str):
        return App(head, tuple(expr_from_sexpr(f) for f in form[1:]))
    raise TypeMismatch(f"bad expression {sexpr.to_str(form)}")


def pred_to_sexpr(p):
    if p == TRUE:
        return "true"
    if p == FALSE:
        return "false"
    if isinstance(p, BoolVar):
        return p.name
    if isinstance(p, Cmp):
        return [p.op, expr_to_sexpr(p.left), expr_to_sexpr(p.right)]
    if isinstance(p, Not):
        return ["not", pred_to_sexpr(p.arg)]
    if isinstance(p, And):
        return ["and", pred_to_sexpr(p.left), pred_to_sexpr(p.right)]
    if isinstance(p, Implies):
        return ["=>", pred_to_sexpr(p.left), pred_to_sexpr(p.right)]
    raise TypeMismatch(f"not a predicate: {p!r}")


def pred_from_sexpr(form):
    if form == "true":
        return TRUE
    if form == "false":
        return FALSE
    if isinstance(form, str):
        return BoolVar(form)
    if isinstance(form, list) and form:
        head = form[0]
        if head in CMP_OPS:
            if len(form) != 3:
                raise TypeMismatch(f"{head} takes two arguments")
            return Cmp(head, expr_from_sexpr(form[1]), expr_from_sexpr(form[2]))
        if head == "not":
            return Not(pred_from_sexpr(form[1]))
        if head in ("and", "=>"):
            args = [pred_from_sexpr(f) for f in form[1:]]
            if len(args) < 2:
                raise TypeMismatch(f"{head} needs at least two arguments")
            out = args[-1]
            ctor = And if head == "and" else Implies
            for a in reversed(args[:-1]):
                out = ctor(a, out)
            return out
    raise TypeMismatch(f"bad predicate {sexpr.to_str(form)}")


def print_expr(e):
    return sexpr.to_str(expr_to_sexpr(e))


def print_pred(p):
    return sexpr.to_str(pred_to_sexpr(p))


# ---------------------------------------------------------------------------
# Traversals


def expr_vars(e, out=None):
    if out is None:
        out = set()
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, Add):
        expr_vars(e.left, out)
        expr_vars(e.right, out)
    elif isinstance(e, ScalarMul):
        expr_vars(e.arg, out)
    elif isinstance(e, App):
        for a in e.args:
            expr_vars(a, out)
    return out


def pred_vars(p, out=None):
    if out is None:
        out = set()
    if isinstance(p, Cmp):
        expr_vars(p.left, out)
        expr_vars(p.right, out)
    elif isinstance(p, Not):
        pred_vars(p.arg, out)
    elif isinstance(p, (And, Implies)):
        pred_vars(p.left, out)
        pred_vars(p.right, out)
    elif isinstance(p, BoolVar):
        out.add(p.name)
    return out


def pred_funcs(p, out=None):
    if out is None:
        out = set()
    if isinstance(p, Cmp):
        _expr_funcs(p.left, out)
        _expr_funcs(p.right, out)
    elif isinstance(p, Not):
        pred_funcs(p.arg, out)
    elif isinstance(p, (And, Implies)):
        pred_funcs(p.left, out)
        pred_funcs(p.right, out)
    return out


def _expr_funcs(e, out):
    if isinstance(e, Add):
        _expr_funcs(e.left, out)
        _expr_funcs(e.right, out)
    elif isinstance(e, ScalarMul):
        _expr_funcs(e.arg, out)
    elif isinstance(e, App):
        out.add(e.func)
        for a in e.args:
            _expr_funcs(a, out)
    return out


def subst_expr(e, mapping):
    """Simultaneous substitution of variables by expressions."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Add):
        return Add(subst_expr(e.left, mapping), subst_expr(e.right, mapping))
    if isinstance(e, ScalarMul):
        return ScalarMul(e.coeff, subst_expr(e.arg, mapping))
    if isinstance(e, App):
        return App(e.func, tuple(subst_expr(a, mapping) for a in e.args))
    return e


def subst_pred(p, mapping):
    if isinstance(p, Cmp):
        return Cmp(p.op, subst_expr(p.left, mapping), subst_expr(p.right, mapping))
    if isinstance(p, Not):
        return Not(subst_pred(p.arg, mapping))
    if isinstance(p, And):
        return And(subst_pred(p.left, mapping), subst_pred(p.right, mapping))
    if isinstance(p, Implies):
        return Implies(subst_pred(p.left, mapping), subst_pred(p.right, mapping))
    if isinstance(p, BoolVar):
        repl = mapping.get(p.name)
        if repl is None:
            return p
        if isinstance(repl, Var):
            return BoolVar(repl.name)
        # non-variable replacement: fall back to the desugared form
        return Cmp("=", repl, IntLit(1))
    return p


def rename_pred(p, mapping):
    return subst_pred(p, {k: Var(v) for k, v in mapping.items()})


# ---------------------------------------------------------------------------
# Environments


@dataclass(frozen=True)
class TypeEnv:
    bindings: tuple = ()

    def __post_init__(self):
        names = [n for n, _ in self.bindings]
        if len(names) != len(set(names)):
            raise TypeMismatch("duplicate binding in type environment")

    def lookup(self, name):
        for n, t in self.bindings:
            if n == name:
                return t
        raise UnboundVariable(name)

    def has(self, name):
        return any(n == name for n, _ in self.bindings)

    def extend(self, name, typ):
        return TypeEnv(self.bindings + ((name, typ),))

    @staticmethod
    def of(*pairs):
        return TypeEnv(tuple(pairs))


def typecheck_expr(env, e, sigs=None):
    """Return the base type of `e` under `env`; sigs maps function names to
    FuncSig."""
    sigs = sigs or {}
    if isinstance(e, Var):
        return env.lookup(e.name)
    if isinstance(e, IntLit):
        return INT
    if isinstance(e, (Add, ScalarMul)):
        parts = (e.left, e.right) if isinstance(e, Add) else (e.arg,)
        for part in parts:
            t = typecheck_expr(env, part, sigs)
            if t != INT:
                raise TypeMismatch(f"arithmetic over non-int operand {print_expr(part)}")
        return INT
    if isinstance(e, App):
        sig = sigs.get(e.func)
        if sig is None:
            raise UnknownFunction(e.func)
        if len(e.args) != len(sig.arg_types):
            raise TypeMismatch(
                f"{e.func} expects {len(sig.arg_types)} args, got {len(e.args)}"
            )
        for a, want in zip(e.args, sig.arg_types):
            got = typecheck_expr(env, a, sigs)
            if got != want:
                raise TypeMismatch(f"argument {print_expr(a)} of {e.func}")
        return sig.ret_type
    raise TypeMismatch(f"not an expression: {e!r}")


def typecheck_pred(env, p, sigs=None):
    sigs = sigs or {}
    if isinstance(p, (TrueLit, FalseLit)):
        return
    if isinstance(p, BoolVar):
        t = env.lookup(p.name)
        if t != BOOL:
            raise NonBoolAtom(p.name)
        return
    if isinstance(p, Cmp):
        lt = typecheck_expr(env, p.left, sigs)
        rt = typecheck_expr(env, p.right, sigs)
        if p.op in ("=", "/="):
            # ui-sorted terms may be equated with ints: the oracle and the
            # solver both model uninterpreted sorts by integers
            int_like = lambda t: t == INT or t.kind == "ui"
            if lt != rt and not (int_like(lt) and int_like(rt)):
                raise TypeMismatch(f"comparison between {lt} and {rt}")
        else:
            if lt != INT or rt != INT:
                raise TypeMismatch("ordered comparison over non-int operands")
        return
    if isinstance(p, Not):
        typecheck_pred(env, p.arg, sigs)
        return
    if isinstance(p, (And, Implies)):
        typecheck_pred(env, p.left, sigs)
        typecheck_pred(env, p.right, sigs)
        return
    raise TypeMismatch(f"not a predicate: {p!r}")


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class Interpretation:
    var_values: dict = field(default_factory=dict)
    func_tables: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ValueDomain:
    int_range: tuple = (-2, 2)
    ui_ranges: tuple = ()  # ((name, (lo, hi)), ...)

    def __post_init__(self):
        lo, hi = self.int_range
        if lo > hi or not (lo <= 0 and 1 <= hi):
            raise LogicError("int_range must be non-empty and contain 0 and 1")
        for _, (ulo, uhi) in self.ui_ranges:
            if ulo > uhi:
                raise LogicError("empty ui range")

    def ui_range(self, name):
        for n, r in self.ui_ranges:
            if n == name:
                return r
        return self.int_range

    def values(self, t):
        if t == BOOL:
            return range(0, 2)
        if t.kind == "ui":
            lo, hi = self.ui_range(t.ui_name)
        else:
            lo, hi = self.int_range
        return range(lo, hi + 1)

    def min_value(self, t):
        return self.values(t)[0]


def eval_expr(interp, e):
    if isinstance(e, Var):
        if e.name not in interp.var_values:
            raise MissingBinding(e.name)
        return interp.var_values[e.name]
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, Add):
        return eval_expr(interp, e.left) + eval_expr(interp, e.right)
    if isinstance(e, ScalarMul):
        return e.coeff * eval_expr(interp, e.arg)
    if isinstance(e, App):
        table = interp.func_tables.get(e.func)
        if table is None:
            raise MissingBinding(e.func)
        key = tuple(eval_expr(interp, a) for a in e.args)
        if key not in table:
            raise MissingBinding(f"{e.func}{key}")
        return table[key]
    raise TypeMismatch(f"not an expression: {e!r}")


_CMP_FUN = {
    "=": lambda a, b: a == b,
    "/=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def eval_pred(interp, p):
    if isinstance(p, TrueLit):
        return True
    if isinstance(p, FalseLit):
        return False
    if isinstance(p, BoolVar):
        return eval_expr(interp, Var(p.name)) == 1
    if isinstance(p, Cmp):
        return _CMP_FUN[p.op](eval_expr(interp, p.left), eval_expr(interp, p.right))
    if isinstance(p, Not):
        return not eval_pred(interp, p.arg)
    if isinstance(p, And):
        return eval_pred(interp, p.left) and eval_pred(interp, p.right)
    if isinstance(p, Implies):
        return (not eval_pred(interp, p.left)) or eval_pred(interp, p.right)
    raise TypeMismatch(f"not a predicate: {p!r}")


# ---------------------------------------------------------------------------
# Interpretation enumeration (oracle machinery)


def enumerate_valuations(env, domain):
    names = [n for n, _ in env.bindings]
    spaces = [list(domain.values(t)) for _, t in env.bindings]
    for combo in itertools.product(*spaces):
        yield dict(zip(names, combo))


def table_space(sig, domain):
    """Domain keys and codomain values of one function's finite tables."""
    keys = list(
        itertools.product(*[list(domain.values(t)) for t in sig.arg_types])
    )
    outs = list(domain.values(sig.ret_type))
    return keys, outs


def count_tables(sigs, domain):
    total = 1
    for sig in sigs:
        keys, outs = table_space(sig, domain)
        total *= len(outs) ** len(keys)
    return total


def enumerate_func_tables(sigs, domain, table_budget=256, seed=0):
    """Yield (tables, exhaustive). Tables assign each sig a total finite map.

    When the exhaustive count exceeds the budget, draws `table_budget`
    seeded uniform samples instead (exhaustive=False).
    """
    sigs = sorted(sigs, key=lambda s: s.name)
    if not sigs:
        return [({}, True)]
    spaces = [table_space(s, domain) for s in sigs]
    total = count_tables(sigs, domain)
    out = []
    if total <= table_budget:
        per_sig = []
        for sig, (keys, outs) in zip(sigs, spaces):
            per_sig.append(
                [dict(zip(keys, vals)) for vals in itertools.product(outs, repeat=len(keys))]
            )
        for combo in itertools.product(*per_sig):
            out.append(({s.name: t for s, t in zip(sigs, combo)}, True))
        return out
    rng = random.Random(seed)
    for _ in range(table_budget):
        tables = {}
        for sig, (keys, outs) in zip(sigs, spaces):
            tables[sig.name] = {k: rng.choice(outs) for k in keys}
        out.append((tables, False))
    return out


# ---------------------------------------------------------------------------
# Validity checking


@dataclass(frozen=True)
class OracleMode:
    domain: ValueDomain
    table_budget: int = 256
    seed: int = 0


@dataclass
class SolverMode:
    cmd: str | None = None  # None: built-in decision procedure, in process
    emit_dir: str | None = None
    _counter: int = 0


VALID = "valid"
INVALID = "invalid"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class Verdict:
    status: str
    witness: Interpretation | None = None

    def __bool__(self):
        return self.status == VALID


def check_valid(env, p, mode, sigs=None):
    """Decide validity of `p` under `env`.

    ORACLE mode enumerates the finite domain (function tables may be
    sampled, in which case a would-be VALID result degrades to UNKNOWN).
    SOLVER mode asks the decision procedure for unsatisfiability of the
    negation.
    """
    sigs = sigs or {}
    typecheck_pred(env, p, sigs)
    if isinstance(mode, OracleMode):
        return _check_valid_oracle(env, p, mode, sigs)
    return _check_valid_solver(env, p, mode, sigs)


def _check_valid_oracle(env, p, mode, sigs):
    used = pred_funcs(p)
    active = [sigs[f] for f in sorted(used)]
    tables = enumerate_func_tables(active, mode.domain, mode.table_budget, mode.seed)
    exhaustive = all(ex for _, ex in tables)
    for tab, _ in tables:
        for vals in enumerate_valuations(env, mode.domain):
            interp = Interpretation(vals, tab)
            if not eval_pred(interp, p):
                return Verdict(INVALID, interp)
    return Verdict(VALID) if exhaustive else Verdict(UNKNOWN)


def emit_solver_query(env, p, sigs=None):
    """Deterministic SMT-LIB 2 script asserting the negation of `p`."""
    sigs = sigs or {}
    lines = ["(set-logic QF_UFLIA)"]
    sorts = []

    def sort_name(t):
        if t.kind == "ui":
            if t.ui_name not in sorts:
                sorts.append(t.ui_name)
            return t.ui_name
        return "Int"

    decls = []
    ranges = []
    for name, t in env.bindings:
        decls.append(f"(declare-fun {name} () {sort_name(t)})")
        if t == BOOL:
            ranges.append(f"(assert (and (<= 0 {name}) (<= {name} 1)))")
    fdecls = []
    for fname in sorted(pred_funcs(p)):
        sig = sigs.get(fname)
        if sig is None:
            raise UnknownFunction(fname)
        args = " ".join(sort_name(t) for t in sig.arg_types)
        fdecls.append(f"(declare-fun {sig.name} ({args}) {sort_name(sig.ret_type)})")
    for s in sorts:
        lines.append(f"(declare-sort {s} 0)")
    lines.extend(decls)
    lines.extend(fdecls)
    lines.extend(ranges)
    lines.append(f"(assert (not {_smt_pred(p)}))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


def _smt_expr(e):
    if isinstance(e, Var):
        return e.name
    if isinstance(e, IntLit):
        return str(e.value) if e.value >= 0 else f"(- {-e.value})"
    if isinstance(e, Add):
        return f"(+ {_smt_expr(e.left)} {_smt_expr(e.right)})"
    if isinstance(e, ScalarMul):
        c = str(e.coeff) if e.coeff >= 0 else f"(- {-e.coeff})"
        return f"(* {c} {_smt_expr(e.arg)})"
    if isinstance(e, App):
        if not e.args:
            return e.func
        return f"({e.func} {' '.join(_smt_expr(a) for a in e.args)})"
    raise TypeMismatch(f"not an expression: {e!r}")


def _smt_pred(p):
    if isinstance(p, TrueLit):
        return "(= 0 0)"
    if isinstance(p, FalseLit):
        return "(= 0 1)"
    if isinstance(p, BoolVar):
        return f"(= {p.name} 1)"
    if isinstance(p, Cmp):
        l, r = _smt_expr(p.left), _smt_expr(p.right)
        if p.op == "/=":
            return f"(not (= {l} {r}))"
        return f"({p.op} {l} {r})"
    if isinstance(p, Not):
        return f"(not {_smt_pred(p.arg)})"
    if isinstance(p, And):
        return f"(and {_smt_pred(p.left)} {_smt_pred(p.right)})"
    if isinstance(p, Implies):
        return f"(=> {_smt_pred(p.left)} {_smt_pred(p.right)})"
    raise TypeMismatch(f"not a predicate: {p!r}")


def _check_valid_solver(env, p, mode, sigs):
    script = emit_solver_query(env, p, sigs)
    if mode.emit_dir:
        os.makedirs(mode.emit_dir, exist_ok=True)
        path = os.path.join(mode.emit_dir, f"q_{mode._counter}.smt2")
        mode._counter += 1
        with open(path, "w") as fh:
            fh.write(script)
    if mode.cmd is None:
        from . import smt

        output = smt.solve_script(script)
    else:
        try:
            proc = subprocess.run(
                shlex.split(mode.cmd),
                input=script,
                capture_output=True,
                text=True,
                timeout=60,
            )
        except FileNotFoundError as exc:
            raise SolverUnavailable(str(exc)) from exc
        except subprocess.TimeoutExpired:
            return Verdict(UNKNOWN)
        output = proc.stdout
    tokens = output.split()
    if not tokens:
        raise SolverProtocolError("empty solver output")
    first = tokens[0]
    if first == "unsat":
        return Verdict(VALID)
    if first == "unknown":
        return Verdict(UNKNOWN)
    if first != "sat":
        raise SolverProtocolError(output.splitlines()[0])
    return Verdict(INVALID, _parse_model(output, env))


def _parse_model(output, env):
    """Pull variable assignments out of `(define-fun x () S v)` entries."""
    try:
        body = output[output.index("\n") :]
        forms = sexpr.parse_many(body)
    except (ValueError, sexpr.SexprError):
        return Interpretation()
    values = {}
    stack = list(forms)
    while stack:
        f = stack.pop()
        if not isinstance(f, list):
            continue
        if len(f) == 5 and f[0] == "define-fun" and f[2] == []:
            val = f[4]
            if isinstance(val, list) and len(val) == 2 and val[0] == "-":
                val = -val[1]
            if isinstance(val, int) and env.has(f[1]):
                values[f[1]] = val
        else:
            stack.extend(f)
    return Interpretation(values, {})
