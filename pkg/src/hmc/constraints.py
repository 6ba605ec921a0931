"""Refinement-type constraints.

A constraint set declares uninterpreted functions, refinement variables
(kvars, each with a value sort and pending-substitution parameters), and
subtyping constraints `G |- {v:b | r1} <: {v:b | r2}`. Refinements are either
concrete predicates over the value variable `v` (plus in-scope program
variables) or applications `(kapp k e1 ... en)` of a kvar to argument
expressions standing in for its parameters.

Solutions map kvars to predicates (intensional) or to finite tuple sets over
(v, params) (extensional). A solution satisfies the set when every
constraint's embedding `env /\\ lhs => rhs` is valid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import sexpr
from .logic import (
    BaseType,
    Cmp,
    FuncSig,
    IntLit,
    TRUE,
    TypeEnv,
    Var,
    check_valid,
    expr_from_sexpr,
    expr_to_sexpr,
    mk_and,
    mk_or,
    pred_from_sexpr,
    pred_to_sexpr,
    subst_pred,
    type_from_sexpr,
    type_to_sexpr,
    typecheck_expr,
    typecheck_pred,
)

VALUE_VAR = "v"


class ConstraintError(Exception):
    pass


@dataclass(frozen=True)
class KVarSig:
    name: str
    value_type: BaseType
    params: tuple  # ((name, BaseType), ...)

    @property
    def field_types(self):
        return (self.value_type,) + tuple(t for _, t in self.params)

    @property
    def field_names(self):
        return (VALUE_VAR,) + tuple(n for n, _ in self.params)


@dataclass(frozen=True)
class Concrete:
    pred: object


@dataclass(frozen=True)
class KApp:
    kvar: str
    args: tuple  # expressions, one per parameter after normalization


@dataclass(frozen=True)
class RefType:
    base: BaseType
    ref: object  # Concrete | KApp


@dataclass(frozen=True)
class SubConstraint:
    label: str
    env: tuple  # ((name, RefType), ...)
    lhs: RefType
    rhs: RefType


@dataclass
class ConstraintSet:
    uninterps: dict = field(default_factory=dict)  # name -> FuncSig
    kvars: dict = field(default_factory=dict)  # name -> KVarSig
    constraints: list = field(default_factory=list)


EXTENSIONAL = "extensional"
INTENSIONAL = "intensional"


@dataclass
class Solution:
    kind: str
    entries: dict  # kvar -> Pred (intensional) | frozenset of value tuples

    def pred_for(self, sig):
        """The entry as a predicate over (v, params)."""
        if self.kind == INTENSIONAL:
            return self.entries[sig.name]
        disjuncts = []
        for tup in sorted(self.entries[sig.name]):
            eqs = [
                Cmp("=", Var(n), IntLit(val))
                for n, val in zip(sig.field_names, tup)
            ]
            disjuncts.append(mk_and(*eqs))
        return mk_or(*disjuncts)

    def to_intensional(self, cs):
        if self.kind == INTENSIONAL:
            return self
        return Solution(
            INTENSIONAL,
            {k: self.pred_for(cs.kvars[k]) for k in self.entries},
        )


def trivial_solution(cs, pred=TRUE):
    return Solution(INTENSIONAL, {k: pred for k in cs.kvars})


# ---------------------------------------------------------------------------
# Normalization and well-formedness


def normalize(cs):
    """Fill omitted trailing kapp arguments with the identity substitution
    and typecheck everything. Returns a new ConstraintSet."""
    out = ConstraintSet(dict(cs.uninterps), dict(cs.kvars), [])
    for c in cs.constraints:
        env = []
        seen = set()
        scope = TypeEnv()
        for name, rt in c.env:
            if name in seen or name == VALUE_VAR:
                raise ConstraintError(f"{c.label}: bad binder {name}")
            seen.add(name)
            ref = _norm_ref(out, c.label, scope, rt)
            env.append((name, RefType(rt.base, ref)))
            scope = scope.extend(name, rt.base)
        if c.lhs.base != c.rhs.base:
            raise ConstraintError(f"{c.label}: sides have different base types")
        lhs = RefType(c.lhs.base, _norm_ref(out, c.label, scope, c.lhs))
        rhs = RefType(c.rhs.base, _norm_ref(out, c.label, scope, c.rhs))
        out.constraints.append(SubConstraint(c.label, tuple(env), lhs, rhs))
    return out


def _norm_ref(cs, label, scope, rt):
    inner = scope.extend(VALUE_VAR, rt.base)
    if isinstance(rt.ref, Concrete):
        try:
            typecheck_pred(inner, rt.ref.pred, cs.uninterps)
        except Exception as exc:
            raise ConstraintError(f"{label}: {exc}") from exc
        return rt.ref
    sig = cs.kvars.get(rt.ref.kvar)
    if sig is None:
        raise ConstraintError(f"{label}: unknown kvar {rt.ref.kvar}")
    if sig.value_type != rt.base:
        raise ConstraintError(f"{label}: {sig.name} refines {sig.value_type}")
    args = list(rt.ref.args)
    if len(args) > len(sig.params):
        raise ConstraintError(f"{label}: too many arguments to {sig.name}")
    for pname, _ in sig.params[len(args) :]:
        args.append(Var(pname))
    for arg, (pname, ptype) in zip(args, sig.params):
        try:
            got = typecheck_expr(inner, arg, cs.uninterps)
        except Exception as exc:
            raise ConstraintError(f"{label}: {exc}") from exc
        if got != ptype:
            raise ConstraintError(
                f"{label}: argument for {sig.name}.{pname} has type {got}"
            )
    return KApp(rt.ref.kvar, tuple(args))


def shape(cs):
    """The constraint set with every kvar application replaced by true."""
    out = ConstraintSet(dict(cs.uninterps), dict(cs.kvars), [])
    for c in cs.constraints:
        strip = lambda rt: RefType(
            rt.base, rt.ref if isinstance(rt.ref, Concrete) else Concrete(TRUE)
        )
        out.constraints.append(
            SubConstraint(
                c.label,
                tuple((n, strip(rt)) for n, rt in c.env),
                strip(c.lhs),
                strip(c.rhs),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Embedding


def ref_pred(cs, rt, sol):
    """The refinement as a predicate over `v` (and in-scope variables)."""
    if isinstance(rt.ref, Concrete):
        return rt.ref.pred
    if sol is None:
        raise ConstraintError(f"kvar {rt.ref.kvar} needs a solution to embed")
    sig = cs.kvars[rt.ref.kvar]
    base = sol.pred_for(sig)
    mapping = {n: e for (n, _), e in zip(sig.params, rt.ref.args)}
    return subst_pred(base, mapping)


def embed_env(cs, env, sol):
    """Conjunction of binding refinements, each with the binder for `v`."""
    parts = []
    for name, rt in env:
        p = ref_pred(cs, rt, sol)
        parts.append(subst_pred(p, {VALUE_VAR: Var(name)}))
    return mk_and(*parts)


def embed_sub(cs, c, sol):
    """(type env, predicate) whose validity is the constraint's truth."""
    from .logic import Implies

    tenv = TypeEnv(
        tuple((n, rt.base) for n, rt in c.env) + ((VALUE_VAR, c.lhs.base),)
    )
    g = embed_env(cs, c.env, sol)
    l = ref_pred(cs, c.lhs, sol)
    r = ref_pred(cs, c.rhs, sol)
    body = Implies(l, r)
    if g != TRUE:
        body = Implies(g, body)
    return tenv, body


def apply_solution(cs, sol):
    """Replace kvar applications by the solution's predicates everywhere."""
    sol = sol.to_intensional(cs)
    out = ConstraintSet(dict(cs.uninterps), {}, [])
    for c in cs.constraints:
        conc = lambda rt: RefType(rt.base, Concrete(ref_pred(cs, rt, sol)))
        out.constraints.append(
            SubConstraint(
                c.label,
                tuple((n, conc(rt)) for n, rt in c.env),
                conc(c.lhs),
                conc(c.rhs),
            )
        )
    return out


@dataclass
class SatReport:
    verdicts: list  # [(label, Verdict)]

    @property
    def satisfied(self):
        return all(v for _, v in self.verdicts)

    @property
    def first_failure(self):
        for label, v in self.verdicts:
            if not v:
                return label, v
        return None


def check_satisfied(cs, sol, mode):
    """Check every constraint's embedding under `sol`; missing kvar entries
    default to true."""
    sol = sol.to_intensional(cs)
    for k in cs.kvars:
        sol.entries.setdefault(k, TRUE)
    verdicts = []
    for c in cs.constraints:
        tenv, p = embed_sub(cs, c, sol)
        verdicts.append((c.label, check_valid(tenv, p, mode, cs.uninterps)))
    return SatReport(verdicts)


# ---------------------------------------------------------------------------
# Concrete syntax


def ref_to_sexpr(ref):
    if isinstance(ref, Concrete):
        return pred_to_sexpr(ref.pred)
    return ["kapp", ref.kvar] + [expr_to_sexpr(a) for a in ref.args]


def ref_from_sexpr(form):
    if isinstance(form, list) and form and form[0] == "kapp":
        if len(form) < 2 or not isinstance(form[1], str):
            raise ConstraintError(f"bad kapp {sexpr.to_str(form)}")
        return KApp(form[1], tuple(expr_from_sexpr(f) for f in form[2:]))
    return Concrete(pred_from_sexpr(form))


def parse_constraints(text):
    cs = ConstraintSet()
    for form in sexpr.parse_many(text):
        if not isinstance(form, list) or not form:
            raise ConstraintError(f"bad form {sexpr.to_str(form)}")
        head = form[0]
        if head == "uninterp":
            for decl in form[1:]:
                name, argtys, retty = decl
                sig = FuncSig(
                    name,
                    tuple(type_from_sexpr(t) for t in argtys),
                    type_from_sexpr(retty),
                )
                if name in cs.uninterps:
                    raise ConstraintError(f"duplicate function {name}")
                cs.uninterps[name] = sig
        elif head == "kvar":
            name = form[1]
            vpart = form[2]
            if vpart[0] != VALUE_VAR:
                raise ConstraintError(f"kvar {name}: first field must be v")
            params = tuple((p[0], type_from_sexpr(p[1])) for p in form[3:])
            if name in cs.kvars:
                raise ConstraintError(f"duplicate kvar {name}")
            cs.kvars[name] = KVarSig(name, type_from_sexpr(vpart[1]), params)
        elif head == "sub":
            label = form[1]
            parts = {f[0]: f for f in form[2:]}
            env = []
            for b in parts.get("env", ["env"])[1:]:
                name, ty, ref = b[0], type_from_sexpr(b[1]), ref_from_sexpr(b[2])
                env.append((name, RefType(ty, ref)))
            lhs = parts["lhs"]
            rhs = parts["rhs"]
            cs.constraints.append(
                SubConstraint(
                    label,
                    tuple(env),
                    RefType(type_from_sexpr(lhs[1]), ref_from_sexpr(lhs[2])),
                    RefType(type_from_sexpr(rhs[1]), ref_from_sexpr(rhs[2])),
                )
            )
        else:
            raise ConstraintError(f"unknown form {head}")
    return cs


def print_constraints(cs):
    lines = []
    for sig in cs.uninterps.values():
        lines.append(
            sexpr.to_str(
                [
                    "uninterp",
                    [
                        sig.name,
                        [type_to_sexpr(t) for t in sig.arg_types],
                        type_to_sexpr(sig.ret_type),
                    ],
                ]
            )
        )
    for sig in cs.kvars.values():
        form = ["kvar", sig.name, [VALUE_VAR, type_to_sexpr(sig.value_type)]]
        form += [[n, type_to_sexpr(t)] for n, t in sig.params]
        lines.append(sexpr.to_str(form))
    for c in cs.constraints:
        form = ["sub", c.label]
        if c.env:
            form.append(
                ["env"]
                + [[n, type_to_sexpr(rt.base), ref_to_sexpr(rt.ref)] for n, rt in c.env]
            )
        form.append(["lhs", type_to_sexpr(c.lhs.base), ref_to_sexpr(c.lhs.ref)])
        form.append(["rhs", type_to_sexpr(c.rhs.base), ref_to_sexpr(c.rhs.ref)])
        lines.append(sexpr.to_str(form))
    return "\n".join(lines) + "\n"


def parse_solution(text):
    forms = sexpr.parse_many(text)
    if len(forms) != 1 or not isinstance(forms[0], list) or forms[0][0] != "solution":
        raise ConstraintError("expected a single (solution ...) form")
    entries = {}
    for e in forms[0][1:]:
        name, pred = e[0], pred_from_sexpr(e[1])
        if name in entries:
            raise ConstraintError(f"duplicate solution entry {name}")
        entries[name] = pred
    return Solution(INTENSIONAL, entries)


def print_solution(sol, cs=None):
    sol = sol if sol.kind == INTENSIONAL else sol.to_intensional(cs)
    form = ["solution"] + [
        [name, pred_to_sexpr(p)] for name, p in sorted(sol.entries.items())
    ]
    return sexpr.to_str(form) + "\n"
