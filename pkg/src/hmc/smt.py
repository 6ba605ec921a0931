"""Decision procedure for a QF_UFLIA subset of SMT-LIB 2.

Pipeline: parse script -> eliminate uninterpreted functions by
Ackermannization -> negation normal form -> satisfiability search over the
disjuncts (pruned lazily) -> omega test on each conjunction of linear
constraints, with model reconstruction by back-substitution.

Uninterpreted sorts are modeled as Int; that preserves quantifier-free
satisfiability because any model over an infinite carrier injects into Int.

Exposed both as a library (`solve_script`) and as the `hmc-smt` executable,
which reads a script on stdin and prints `sat`/`unsat` plus a model.
"""

from __future__ import annotations

import math
import sys

from . import sexpr


class SmtError(Exception):
    pass


# ---------------------------------------------------------------------------
# Linear expressions: dict mapping variable name -> coefficient, with the
# constant term under the key None.


def lin_const(c):
    return {None: c} if c else {}


def lin_var(name):
    return {name: 1}


def lin_add(a, b):
    out = dict(a)
    for k, v in b.items():
        nv = out.get(k, 0) + v
        if nv:
            out[k] = nv
        else:
            out.pop(k, None)
    return out


def lin_scale(a, c):
    if c == 0:
        return {}
    return {k: v * c for k, v in a.items()}


def lin_sub(a, b):
    return lin_add(a, lin_scale(b, -1))


def lin_vars(a):
    return [k for k in a if k is not None]


def eval_lin(lin, model):
    total = lin.get(None, 0)
    for k, c in lin.items():
        if k is None:
            continue
        model.setdefault(k, 0)
        total += c * model[k]
    return total


# ---------------------------------------------------------------------------
# Script parsing


class Script:
    def __init__(self):
        self.consts = {}  # name -> sort (0-ary declarations)
        self.funcs = {}  # name -> (arg sorts, ret sort)
        self.sorts = []
        self.asserts = []
        self.want_model = False


def parse_script(text):
    script = Script()
    for form in sexpr.parse_many(text):
        if not isinstance(form, list) or not form:
            raise SmtError(f"bad command {sexpr.to_str(form)}")
        head = form[0]
        if head in ("set-logic", "set-option", "set-info", "check-sat", "exit"):
            continue
        if head == "get-model":
            script.want_model = True
        elif head == "declare-sort":
            script.sorts.append(form[1])
        elif head == "declare-fun":
            name, args, ret = form[1], form[2], form[3]
            if args:
                script.funcs[name] = (args, ret)
            else:
                script.consts[name] = ret
        elif head == "declare-const":
            script.consts[form[1]] = form[2]
        elif head == "assert":
            script.asserts.append(form[1])
        else:
            raise SmtError(f"unsupported command {head}")
    return script


# ---------------------------------------------------------------------------
# Ackermannization: replace every distinct application of an uninterpreted
# function by a fresh constant, and assert functional consistency for each
# pair of applications of the same function.


def ackermannize(script):
    apps = {}  # canonical text -> (fresh name, func name, arg forms)
    counter = [0]

    def walk(form):
        if not isinstance(form, list) or not form:
            return form
        walked = [form[0]] + [walk(f) for f in form[1:]]
        if isinstance(form[0], str) and form[0] in script.funcs:
            key = sexpr.to_str(walked)
            if key not in apps:
                fresh = f".ack{counter[0]}"
                counter[0] += 1
                apps[key] = (fresh, form[0], walked[1:])
            return apps[key][0]
        return walked

    flat = [walk(a) for a in script.asserts]
    by_func = {}
    for fresh, fname, args in apps.values():
        by_func.setdefault(fname, []).append((fresh, args))
    congruence = []
    for fname, insts in by_func.items():
        for i in range(len(insts)):
            for j in range(i + 1, len(insts)):
                (v1, a1), (v2, a2) = insts[i], insts[j]
                same_args = ["and"] + [["=", x, y] for x, y in zip(a1, a2)]
                if len(same_args) == 2:
                    same_args = same_args[1]
                congruence.append(["=>", same_args, ["=", v1, v2]])
    return flat + congruence, [fresh for fresh, _, _ in apps.values()]


# ---------------------------------------------------------------------------
# Terms and NNF. Atoms are ("le", lin) for lin <= 0 and ("eq", lin) for
# lin = 0; disequalities are split into a disjunction of strict orderings.


def term_to_lin(form):
    if isinstance(form, int):
        return lin_const(form)
    if isinstance(form, str):
        return lin_var(form)
    if isinstance(form, list) and form:
        head = form[0]
        if head == "+":
            out = {}
            for f in form[1:]:
                out = lin_add(out, term_to_lin(f))
            return out
        if head == "-":
            if len(form) == 2:
                return lin_scale(term_to_lin(form[1]), -1)
            out = term_to_lin(form[1])
            for f in form[2:]:
                out = lin_sub(out, term_to_lin(f))
            return out
        if head == "*":
            args = [term_to_lin(f) for f in form[1:]]
            out = lin_const(1)
            for a in args:
                ka, ko = lin_vars(a), lin_vars(out)
                if ka and ko:
                    raise SmtError(f"nonlinear product {sexpr.to_str(form)}")
                if ka:
                    out = lin_scale(a, out.get(None, 0))
                else:
                    out = lin_scale(out, a.get(None, 0))
            return out
    raise SmtError(f"bad term {sexpr.to_str(form)}")


def _le(lin):
    return ("le", lin)


def _atom(op, l, r, positive):
    ll, rr = term_to_lin(l), term_to_lin(r)
    d = lin_sub(ll, rr)
    if op == "<=":
        pass
    elif op == "<":
        d = lin_add(d, lin_const(1))
    elif op == ">=":
        d = lin_scale(d, -1)
    elif op == ">":
        d = lin_add(lin_scale(d, -1), lin_const(1))
    elif op == "=":
        if positive:
            return ("eq", d)
        lt = _le(lin_add(d, lin_const(1)))
        gt = _le(lin_add(lin_scale(d, -1), lin_const(1)))
        return ("or", [lt, gt])
    else:
        raise SmtError(f"bad relation {op}")
    if not positive:
        # not (d <= 0)  <=>  -d + 1 <= 0
        d = lin_add(lin_scale(d, -1), lin_const(1))
    return _le(d)


def nnf(form, positive=True):
    if form in ("true", "false"):
        holds = (form == "true") == positive
        return ("and", []) if holds else ("or", [])
    if isinstance(form, str):
        # bare boolean symbol: treat as symbol = 1
        return _atom("=", form, 1, positive)
    if not isinstance(form, list) or not form:
        raise SmtError(f"bad formula {sexpr.to_str(form)}")
    head = form[0]
    if head == "not":
        return nnf(form[1], not positive)
    if head == "and":
        kids = [nnf(f, positive) for f in form[1:]]
        return ("and" if positive else "or", kids)
    if head == "or":
        kids = [nnf(f, positive) for f in form[1:]]
        return ("or" if positive else "and", kids)
    if head == "=>":
        *hyps, concl = form[1:]
        kids = [nnf(h, not positive) for h in hyps] + [nnf(concl, positive)]
        return ("or" if positive else "and", kids)
    if head in ("<=", "<", ">=", ">", "="):
        if len(form) != 3:
            raise SmtError(f"{head} takes two arguments")
        return _atom(head, form[1], form[2], positive)
    if head == "distinct":
        if len(form) != 3:
            raise SmtError("distinct takes two arguments")
        return _atom("=", form[1], form[2], not positive)
    raise SmtError(f"bad formula head {head}")


# ---------------------------------------------------------------------------
# Omega test


def _norm_le(lin):
    ks = lin_vars(lin)
    if not ks:
        return lin
    g = math.gcd(*(abs(lin[k]) for k in ks))
    if g <= 1:
        return lin
    out = {k: lin[k] // g for k in ks}
    c = lin.get(None, 0)
    tight = -((-c) // g)  # ceil(c/g): tightens to the integer hull
    if tight:
        out[None] = tight
    return out


def _norm_eq(lin):
    ks = lin_vars(lin)
    if not ks:
        return lin
    g = math.gcd(*(abs(lin[k]) for k in ks))
    if g <= 1:
        return lin
    c = lin.get(None, 0)
    if c % g != 0:
        return None  # no integer solution
    out = {k: lin[k] // g for k in ks}
    if c // g:
        out[None] = c // g
    return out


_sigma = [0]


def _fresh_sigma():
    _sigma[0] += 1
    return f".sig{_sigma[0]}"


def _mods(a, m):
    r = a % m
    if 2 * r > m:
        r -= m
    return r


def omega(constraints):
    """Decide a conjunction of ("le", lin) / ("eq", lin) constraints over the
    integers. Returns a satisfying model dict, or None."""
    les, eqs = [], []
    for kind, lin in constraints:
        if kind == "le":
            lin = _norm_le(lin)
            if lin_vars(lin):
                les.append(lin)
            elif lin.get(None, 0) > 0:
                return None
        else:
            lin = _norm_eq(lin)
            if lin is None:
                return None
            if lin_vars(lin):
                eqs.append(lin)
            elif lin.get(None, 0) != 0:
                return None
    if eqs:
        return _eliminate_equality(eqs, les)
    return _solve_ineqs(les)


def _eliminate_equality(eqs, les):
    # prefer an equation with a unit coefficient
    pick = None
    for i, eq in enumerate(eqs):
        for k in lin_vars(eq):
            if abs(eq[k]) == 1:
                pick = (i, k)
                break
        if pick:
            break
    if pick is None:
        # mod trick: introduce sigma and an equation that does have a unit
        # coefficient on the variable with the smallest one
        eq = eqs[0]
        k = min(lin_vars(eq), key=lambda v: abs(eq[v]))
        m = abs(eq[k]) + 1
        new = {v: _mods(c, m) for v, c in eq.items() if _mods(c, m)}
        new[_fresh_sigma()] = -m
        rest = [("eq", e) for e in eqs] + [("le", l) for l in les]
        return omega([("eq", new)] + rest)
    i, x = pick
    eq = eqs[i]
    a = eq[x]
    # a*x + r = 0  with a = +-1  =>  x = -r/a
    r = {v: c for v, c in eq.items() if v != x}
    repl = lin_scale(r, -1 if a == 1 else 1)
    sub = lambda lin: lin_add(
        {v: c for v, c in lin.items() if v != x}, lin_scale(repl, lin.get(x, 0))
    )
    rest = [("eq", sub(e)) for j, e in enumerate(eqs) if j != i]
    rest += [("le", sub(l)) for l in les]
    model = omega(rest)
    if model is None:
        return None
    model[x] = eval_lin(repl, model)
    return model


def _pick_variable(les):
    occurs = {}
    for lin in les:
        for v in lin_vars(lin):
            occurs.setdefault(v, []).append(lin[v])
    best = None
    for v, coeffs in sorted(occurs.items()):
        lows = [-c for c in coeffs if c < 0]
        ups = [c for c in coeffs if c > 0]
        exact = all(b == 1 or a == 1 for b in lows for a in ups)
        one_sided = not lows or not ups
        cost = (0 if one_sided else 1, 0 if exact else 1, len(lows) * len(ups))
        if best is None or cost < best[0]:
            best = (cost, v, exact or one_sided)
    return best[1], best[2]


def _assign_between(x, lowers, uppers, model):
    lo = None
    for b, r in lowers:  # b*x >= r
        v = eval_lin(r, model)
        bound = -((-v) // b)  # ceil(v/b)
        lo = bound if lo is None else max(lo, bound)
    hi = None
    for a, u in uppers:  # a*x <= u
        v = eval_lin(u, model)
        bound = v // a
        hi = bound if hi is None else min(hi, bound)
    if lo is not None:
        model[x] = lo
    elif hi is not None:
        model[x] = hi
    else:
        model[x] = 0
    return model


def _solve_ineqs(les):
    les = [l for l in (_norm_le(l) for l in les) if lin_vars(l) or l.get(None, 0) > 0]
    for l in les:
        if not lin_vars(l):
            return None
    if not les:
        return {}
    x, exact = _pick_variable(les)
    lowers, uppers, others = [], [], []
    for lin in les:
        a = lin.get(x, 0)
        if a == 0:
            others.append(lin)
        elif a > 0:  # a*x + r <= 0  =>  a*x <= -r
            uppers.append((a, lin_scale({v: c for v, c in lin.items() if v != x}, -1)))
        else:  # a*x + r <= 0  =>  (-a)*x >= r
            lowers.append((-a, {v: c for v, c in lin.items() if v != x}))
    if not lowers or not uppers:
        model = _solve_ineqs(others)
        if model is None:
            return None
        return _assign_between(x, lowers, uppers, model)
    shadow = list(others)
    dark_ok = True
    for b, r in lowers:
        for a, u in uppers:
            # real shadow: a*r <= a*b*x <= b*u
            real = lin_sub(lin_scale(r, a), lin_scale(u, b))
            if exact:
                shadow.append(real)
            else:
                slack = (a - 1) * (b - 1)
                shadow.append(lin_add(real, lin_const(slack)))
                if slack:
                    dark_ok = False
    model = _solve_ineqs(shadow)
    if model is not None:
        return _assign_between(x, lowers, uppers, model)
    if exact or dark_ok:
        return None
    # splinters: any solution missed by the dark shadow sits close above a
    # lower bound
    amax = max(a for a, _ in uppers)
    base = [("le", l) for l in les]
    for b, r in lowers:
        top = (amax * b - amax - b) // amax
        for j in range(top + 1):
            eq = lin_add({x: b}, lin_scale(lin_add(r, lin_const(j)), -1))
            model = omega(base + [("eq", eq)])
            if model is not None:
                return model
    return None


# ---------------------------------------------------------------------------
# Satisfiability search over the NNF tree (lazy DNF with pruning)


def sat_search(nodes, conj):
    while nodes:
        node, nodes = nodes[0], nodes[1:]
        tag = node[0]
        if tag == "and":
            nodes = node[1] + nodes
        elif tag == "or":
            for kid in node[1]:
                model = sat_search([kid] + nodes, list(conj))
                if model is not None:
                    return model
            return None
        else:
            conj.append(node)
    return omega(conj)


# ---------------------------------------------------------------------------
# Entry points


def solve_script(text):
    script = parse_script(text)
    forms, _ = ackermannize(script)
    tree = ("and", [nnf(f) for f in forms])
    model = sat_search([tree], [])
    if model is None:
        return "unsat\n"
    lines = ["sat"]
    if script.want_model:
        lines.append("(model")
        for name, sort in script.consts.items():
            val = model.get(name, 0)
            txt = str(val) if val >= 0 else f"(- {-val})"
            sname = sort if isinstance(sort, str) else sexpr.to_str(sort)
            lines.append(f"  (define-fun {name} () {sname} {txt})")
        lines.append(")")
    return "\n".join(lines) + "\n"


def main():
    try:
        text = sys.stdin.read()
        sys.stdout.write(solve_script(text))
    except (SmtError, sexpr.SexprError) as exc:
        sys.stdout.write(f"(error \"{exc}\")\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
