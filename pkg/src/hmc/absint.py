"""Cartesian predicate abstraction over translated IMP programs.

Each relation variable k gets a fixed list of field predicates over its
fields k.0 ... k.n (k.0 is the written value, k.i the i-th parameter). The
abstract invariant tracks, per relation variable, the set of reachable
"cubes": truth assignments to its predicate list (None = unconstrained).

Blocks are executed symbolically: havoc/assume/assign build an SSA path
formula; a get conjoins the source invariant with fields renamed to the
tuple temps; an assert is checked as path => assertion; a set classifies
each target predicate as forced true, forced false or unknown and records
the resulting cube. A fixpoint over blocks either proves every assert or
reports the first one that may fail.

Predicates come from two deterministic sources: harvesting (atomic
comparisons from any block rewritten through each write's argument map) and
mining (per write, the block's linear path constraints projected onto the
written fields by Fourier-Motzkin elimination, plus pairwise sums).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import sexpr
from .logic import (
    Add,
    And,
    App,
    BOOL,
    Cmp,
    FALSE,
    INT,
    IntLit,
    Implies,
    Not,
    ScalarMul,
    TRUE,
    TypeEnv,
    VALID,
    Var,
    check_valid,
    expr_to_sexpr,
    mk_and,
    mk_or,
    pred_to_sexpr,
    print_pred,
    rename_pred,
    subst_expr,
    subst_pred,
    typecheck_pred,
)
from .constraints import INTENSIONAL, Solution
from .imp import Assert, Assign, Assume, Get, Havoc, Set

MAX_PREDS_PER_KVAR = 14
MAX_MINED_INEQS = 64

HOLDS = "holds"
MAY_FAIL = "may-fail"


def field_var(kvar, i):
    return f"{kvar}.{i}"


@dataclass(frozen=True)
class FieldPredicate:
    kvar: str
    formula: object  # Pred over the kvar's field variables


@dataclass
class AbstractInvariant:
    cubes: dict = field(default_factory=dict)  # kvar -> set of cubes

    def copy(self):
        return AbstractInvariant({k: set(v) for k, v in self.cubes.items()})

    def __eq__(self, other):
        return self.cubes == other.cubes


# ---------------------------------------------------------------------------
# Symbolic execution of a block


@dataclass
class SymItem:
    kind: str  # "conj" | "assert" | "get" | "set"
    payload: object


class SymExec:
    def __init__(self, p):
        self.p = p
        self.env = {}
        self.types = {}
        self.counter = 0
        self.items = []

    def fresh(self, var, t):
        s = f"{var}%{self.counter}"
        self.counter += 1
        self.env[var] = s
        self.types[s] = t
        return s

    def sym_of(self, var):
        if var not in self.env:
            self.fresh(var, self.p.base_types.get(var, INT))
        return self.env[var]

    def rename_expr(self, e):
        from .logic import expr_vars

        return subst_expr(e, {x: Var(self.sym_of(x)) for x in expr_vars(e)})

    def rename_pred(self, q):
        from .logic import pred_vars

        return subst_pred(q, {x: Var(self.sym_of(x)) for x in pred_vars(q)})

    def run(self, block):
        for i in block.instrs:
            if isinstance(i, Havoc):
                self.fresh(i.var, self.p.base_types.get(i.var, INT))
            elif isinstance(i, Assign):
                e = self.rename_expr(i.expr)
                s = self.fresh(i.var, self.p.base_types.get(i.var, INT))
                self.items.append(SymItem("conj", Cmp("=", Var(s), e)))
            elif isinstance(i, Assume):
                self.items.append(SymItem("conj", self.rename_pred(i.pred)))
            elif isinstance(i, Assert):
                self.items.append(SymItem("assert", self.rename_pred(i.pred)))
            elif isinstance(i, Get):
                sig = self.p.relvar_sigs[i.relvar]
                syms = tuple(
                    self.fresh(x, t) for x, t in zip(i.targets, sig)
                )
                self.items.append(SymItem("get", (i.relvar, syms)))
            elif isinstance(i, Set):
                syms = tuple(self.sym_of(x) for x in i.args)
                self.items.append(SymItem("set", (i.relvar, syms)))
        return self


# ---------------------------------------------------------------------------
# Predicate discovery


def _atoms(q, out):
    if isinstance(q, Cmp):
        out.append(q)
    elif isinstance(q, Not):
        _atoms(q.arg, out)
    elif isinstance(q, (And, Implies)):
        _atoms(q.left, out)
        _atoms(q.right, out)
    return out


def _block_atoms(block):
    out = []
    for i in block.instrs:
        if isinstance(i, (Assume, Assert)):
            _atoms(i.pred, out)
    return out


def _write_maps(p):
    """[(kvar, {block var -> field index})] in block order."""
    maps = []
    for _, block in p.blocks:
        for i in block.instrs:
            if isinstance(i, Set):
                m = {}
                for idx, x in enumerate(i.args):
                    m.setdefault(x, idx)
                maps.append((i.relvar, m))
    return maps


def _map_expr(e, kvar, m):
    if isinstance(e, Var):
        if e.name not in m:
            return None
        return Var(field_var(kvar, m[e.name]))
    if isinstance(e, IntLit):
        return e
    if isinstance(e, Add):
        l, r = _map_expr(e.left, kvar, m), _map_expr(e.right, kvar, m)
        return None if l is None or r is None else Add(l, r)
    if isinstance(e, ScalarMul):
        a = _map_expr(e.arg, kvar, m)
        return None if a is None else ScalarMul(e.coeff, a)
    if isinstance(e, App):
        args = [_map_expr(a, kvar, m) for a in e.args]
        if any(a is None for a in args):
            return None
        return App(e.func, tuple(args))
    return None


def field_env(p, kvar):
    types = p.relvar_sigs[kvar]
    return TypeEnv(tuple((field_var(kvar, i), t) for i, t in enumerate(types)))


def _well_typed(p, kvar, formula):
    try:
        typecheck_pred(field_env(p, kvar), formula, p.func_sigs)
        return True
    except Exception:
        return False


def _split_eq(p, kvar, q):
    """Split an int equality predicate into its two inequalities."""
    tenv = field_env(p, kvar)
    if isinstance(q, Cmp) and q.op == "=":
        from .logic import typecheck_expr

        try:
            lt = typecheck_expr(tenv, q.left, p.func_sigs)
            rt = typecheck_expr(tenv, q.right, p.func_sigs)
        except Exception:
            return [q]
        if lt == INT and rt == INT:
            return [Cmp("<=", q.left, q.right), Cmp("<=", q.right, q.left)]
    return [q]


def harvest_predicates(p, extra=None, mine=True):
    """Ordered FieldPredicate list per kvar: harvested atoms first (every
    block's atoms through every write's argument map), then mined
    projections, then user extras."""
    preds = {k: [] for k in p.relvar_sigs}
    seen = {k: set() for k in p.relvar_sigs}

    def add(kvar, formula):
        if len(preds[kvar]) >= MAX_PREDS_PER_KVAR:
            return
        if not _well_typed(p, kvar, formula):
            return
        key = print_pred(formula)
        if key in seen[kvar]:
            return
        seen[kvar].add(key)
        preds[kvar].append(FieldPredicate(kvar, formula))

    maps = _write_maps(p)
    all_atoms = []
    for _, block in p.blocks:
        all_atoms.extend(_block_atoms(block))
    for kvar, m in maps:
        for atom in all_atoms:
            mapped_l = _map_expr(atom.left, kvar, m)
            mapped_r = _map_expr(atom.right, kvar, m)
            if mapped_l is None or mapped_r is None:
                continue
            for q in _split_eq(p, kvar, Cmp(atom.op, mapped_l, mapped_r)):
                add(kvar, q)
    if mine:
        for kvar, formula in mined_predicates(p):
            add(kvar, formula)
    for kvar, formula in extra or []:
        if kvar in preds:
            add(kvar, formula)
    return preds


# -- mining: linear projection of per-block path formulas onto write fields


def _expr_lin(e, keys):
    """Expression over syms -> {key: coeff}; apps become atomic keys."""
    if isinstance(e, Var):
        return {("var", e.name): 1}
    if isinstance(e, IntLit):
        return {None: e.value} if e.value else {}
    if isinstance(e, Add):
        out = dict(_expr_lin(e.left, keys))
        for k, v in _expr_lin(e.right, keys).items():
            out[k] = out.get(k, 0) + v
            if not out[k]:
                del out[k]
        return out
    if isinstance(e, ScalarMul):
        return {k: v * e.coeff for k, v in _expr_lin(e.arg, keys).items()}
    if isinstance(e, App):
        key = ("app", e.func, tuple(sexpr.to_str(expr_to_sexpr(a)) for a in e.args))
        keys[key] = e
        return {key: 1}
    raise ValueError(e)


def _lin_le(l, r, keys, extra_const=0):
    out = dict(_expr_lin(l, keys))
    for k, v in _expr_lin(r, keys).items():
        out[k] = out.get(k, 0) - v
        if not out[k]:
            del out[k]
    if extra_const:
        out[None] = out.get(None, 0) + extra_const
    return out


def _path_ineqs(items, upto):
    """Linear inequalities (lin <= 0) from the conjuncts before item `upto`."""
    keys = {}
    les = []
    for item in items[:upto]:
        if item.kind != "conj":
            continue
        flat = []
        _atoms_conj(item.payload, flat)
        for atom in flat:
            try:
                if atom.op == "<=":
                    les.append(_lin_le(atom.left, atom.right, keys))
                elif atom.op == "<":
                    les.append(_lin_le(atom.left, atom.right, keys, 1))
                elif atom.op == ">=":
                    les.append(_lin_le(atom.right, atom.left, keys))
                elif atom.op == ">":
                    les.append(_lin_le(atom.right, atom.left, keys, 1))
                elif atom.op == "=":
                    les.append(_lin_le(atom.left, atom.right, keys))
                    les.append(_lin_le(atom.right, atom.left, keys))
            except ValueError:
                continue
    return les, keys


def _atoms_conj(q, out):
    """Top-level conjunction atoms only (under-approximating the path)."""
    if isinstance(q, Cmp):
        out.append(q)
    elif isinstance(q, And):
        _atoms_conj(q.left, out)
        _atoms_conj(q.right, out)


def _project(les, keep):
    """Fourier-Motzkin elimination of every key not in `keep`."""
    les = [l for l in les if l]
    while True:
        drop = None
        for lin in les:
            for k in lin:
                if k is not None and k not in keep:
                    drop = k
                    break
            if drop:
                break
        if drop is None:
            return les
        lowers, uppers, rest = [], [], []
        for lin in les:
            c = lin.get(drop, 0)
            if c > 0:
                uppers.append(lin)
            elif c < 0:
                lowers.append(lin)
            else:
                rest.append(lin)
        for lo in lowers:
            for up in uppers:
                a, b = up[drop], -lo[drop]
                comb = {}
                for k, v in up.items():
                    comb[k] = comb.get(k, 0) + b * v
                for k, v in lo.items():
                    comb[k] = comb.get(k, 0) + a * v
                comb = {k: v for k, v in comb.items() if v}
                if comb.get(drop):
                    continue
                rest.append(comb)
        les = rest[:MAX_MINED_INEQS]


def _lin_to_pred(lin, rename):
    """{key: coeff} (lin <= 0) -> Cmp over field expressions."""
    import math

    ks = [k for k in lin if k is not None]
    if not ks:
        return None
    g = math.gcd(*(abs(lin[k]) for k in ks))
    if g > 1:
        lin = {k: (v // g if k is not None else -((-v) // g)) for k, v in lin.items()}

    def term(k, c):
        e = rename[k]
        return e if c == 1 else ScalarMul(c, e)

    pos = [term(k, lin[k]) for k in sorted(ks, key=str) if lin[k] > 0]
    neg = [term(k, -lin[k]) for k in sorted(ks, key=str) if lin[k] < 0]
    c = lin.get(None, 0)
    if c > 0:
        pos.append(IntLit(c))
    elif c < 0:
        neg.append(IntLit(-c))

    def side(parts):
        if not parts:
            return IntLit(0)
        out = parts[0]
        for t in parts[1:]:
            out = Add(out, t)
        return out

    return Cmp("<=", side(pos), side(neg))


def mined_predicates(p):
    """(kvar, formula) candidates from projecting each write's path formula
    onto the written fields, plus pairwise sums of the projection basis."""
    out = []
    for _, block in p.blocks:
        trace = SymExec(p).run(block)
        for idx, item in enumerate(trace.items):
            if item.kind != "set":
                continue
            kvar, syms = item.payload
            les, keys = _path_ineqs(trace.items, idx)
            fieldof = {}
            for i, s in enumerate(syms):
                fieldof.setdefault(("var", s), Var(field_var(kvar, i)))
            rename = dict(fieldof)
            keep = set(fieldof)
            for key, app in keys.items():
                if all(("var", a.name) in fieldof for a in app.args if isinstance(a, Var)) and all(
                    isinstance(a, (Var, IntLit)) for a in app.args
                ):
                    keep.add(key)
                    rename[key] = App(
                        app.func,
                        tuple(
                            fieldof[("var", a.name)] if isinstance(a, Var) else a
                            for a in app.args
                        ),
                    )
            basis = _project(les, keep)
            sums = []
            for i in range(len(basis)):
                for j in range(i + 1, len(basis)):
                    comb = dict(basis[i])
                    for k, v in basis[j].items():
                        comb[k] = comb.get(k, 0) + v
                    sums.append({k: v for k, v in comb.items() if v})
            for lin in basis + sums:
                q = _lin_to_pred(lin, rename)
                if q is not None:
                    out.append((kvar, q))
    return out


def parse_preds(text, p):
    """User predicate file: .sol-style. The value variable `v` names field 0;
    the remaining fields are addressed as k.1, k.2, ... directly. Each
    entry's top-level conjunction is split into individual predicates."""
    from .constraints import parse_solution

    sol = parse_solution(text)
    out = []
    for kvar, pred in sorted(sol.entries.items()):
        flat = []
        _flatten_and(rename_pred(pred, {"v": field_var(kvar, 0)}), flat)
        for q in flat:
            out.append((kvar, q))
    return out


def _flatten_and(q, out):
    if isinstance(q, And):
        _flatten_and(q.left, out)
        _flatten_and(q.right, out)
    else:
        out.append(q)


# ---------------------------------------------------------------------------
# Abstract execution


@dataclass
class AssertStatus:
    label: str
    status: str  # HOLDS | MAY_FAIL
    query: object | None = None  # the unproven implication, on MAY_FAIL


class Engine:
    def __init__(self, p, preds, mode):
        self.p = p
        self.preds = preds
        self.mode = mode
        self.memo = {}

    def valid(self, tenv, q):
        key = (tuple(tenv.bindings), print_pred(q))
        if key not in self.memo:
            self.memo[key] = check_valid(tenv, q, self.mode, self.p.func_sigs).status
        return self.memo[key]

    def cube_pred(self, kvar, cube, syms):
        parts = []
        for fp, bit in zip(self.preds[kvar], cube):
            if bit is None:
                continue
            q = rename_pred(
                fp.formula,
                {field_var(kvar, i): s for i, s in enumerate(syms)},
            )
            parts.append(q if bit else Not(q))
        return mk_and(*parts)

    def invariant_pred(self, kvar, inv, syms):
        return mk_or(
            *(self.cube_pred(kvar, c, syms) for c in sorted(inv.cubes.get(kvar, ()), key=str))
        )

    def abstract_post(self, label, block, inv):
        """Returns (statuses, new cubes as [(kvar, cube)])."""
        trace = SymExec(self.p).run(block)
        tenv = TypeEnv(tuple(sorted(trace.types.items())))
        path = []
        statuses = []
        new = []
        for item in trace.items:
            if item.kind == "conj":
                path.append(item.payload)
            elif item.kind == "assert":
                if item.payload == TRUE:
                    statuses.append(AssertStatus(label, HOLDS))
                    continue
                q = _implies(path, item.payload)
                if self.valid(tenv, q) == VALID:
                    statuses.append(AssertStatus(label, HOLDS))
                else:
                    statuses.append(AssertStatus(label, MAY_FAIL, q))
            elif item.kind == "get":
                kvar, syms = item.payload
                if not inv.cubes.get(kvar):
                    # nothing written yet: the relation is empty, the block
                    # halts here (remaining asserts vacuously hold)
                    return statuses, new
                path.append(self.invariant_pred(kvar, inv, syms))
            elif item.kind == "set":
                kvar, syms = item.payload
                if path and self.valid(tenv, _implies(path, FALSE)) == VALID:
                    continue  # the write is unreachable on this path
                cube = []
                for fp in self.preds[kvar]:
                    q = rename_pred(
                        fp.formula,
                        {field_var(kvar, i): s for i, s in enumerate(syms)},
                    )
                    if self.valid(tenv, _implies(path, q)) == VALID:
                        cube.append(True)
                    elif self.valid(tenv, _implies(path, Not(q))) == VALID:
                        cube.append(False)
                    else:
                        cube.append(None)
                new.append((kvar, tuple(cube)))
        return statuses, new


def _implies(path, q):
    hyp = mk_and(*path)
    return q if hyp == TRUE else Implies(hyp, q)


PROVED = "proved"
INCONCLUSIVE = "inconclusive"


@dataclass
class SolveResult:
    status: str
    invariant: AbstractInvariant
    statuses: list
    failing: AssertStatus | None = None


def solve(p, preds, mode):
    engine = Engine(p, preds, mode)
    inv = AbstractInvariant({k: set() for k in p.relvar_sigs})
    changed = True
    while changed:
        changed = False
        for label, block in p.blocks:
            _, new = engine.abstract_post(label, block, inv)
            for kvar, cube in new:
                if cube not in inv.cubes[kvar]:
                    inv.cubes[kvar].add(cube)
                    changed = True
    statuses = []
    for label, block in p.blocks:
        st, _ = engine.abstract_post(label, block, inv)
        statuses.extend(st)
    for st in statuses:
        if st.status != HOLDS:
            return SolveResult(INCONCLUSIVE, inv, statuses, st)
    return SolveResult(PROVED, inv, statuses)


def extract_solution(inv, preds, kvar_sigs):
    """Per-kvar disjunction of reachable cubes, fields renamed to the kvar's
    value variable and parameter names. No cubes means the relation stays
    empty: false."""
    entries = {}
    for name, sig in kvar_sigs.items():
        cubes = inv.cubes.get(name, set())
        if not cubes:
            entries[name] = FALSE
            continue
        rename = {
            field_var(name, i): fld for i, fld in enumerate(sig.field_names)
        }
        disjuncts = []
        for cube in sorted(cubes, key=str):
            parts = []
            for fp, bit in zip(preds[name], cube):
                if bit is None:
                    continue
                q = rename_pred(fp.formula, rename)
                parts.append(q if bit else Not(q))
            disjuncts.append(mk_and(*parts))
        entries[name] = mk_or(*disjuncts)
    return Solution(INTENSIONAL, entries)


def format_invariant(inv, preds):
    """Human-readable per-kvar invariant in field notation."""
    lines = []
    for kvar in sorted(inv.cubes):
        cubes = inv.cubes[kvar]
        if not cubes:
            lines.append(f"{kvar}: false (never written)")
            continue
        rendered = []
        for cube in sorted(cubes, key=str):
            lits = []
            for fp, bit in zip(preds[kvar], cube):
                if bit is None:
                    continue
                txt = print_pred(fp.formula)
                lits.append(txt if bit else f"(not {txt})")
            rendered.append(" & ".join(lits) if lits else "true")
        lines.append(f"{kvar}: " + " | ".join(sorted(set(rendered))))
    return "\n".join(lines)
