"""IMP: a single nondeterministic loop over straight-line blocks.

Programs are `loop { I1 [] ... [] In }`. Instructions act on base variables
and relation variables. Two ground-truth semantics are provided:

- Relational: each relation variable holds a growing set of tuples; `get`
  picks any member (halting on an empty relation), `set` inserts.
- Imperative: each relation variable holds one tuple or bottom; `get` reads
  it (halting on bottom), `set` overwrites.

A failing assert moves to the absorbing ERROR state. The reach computation
enumerates a finite value domain and finite function tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import sexpr
from .logic import (
    BaseType,
    FuncSig,
    Interpretation,
    TRUE,
    TrueLit,
    ValueDomain,
    enumerate_func_tables,
    eval_expr,
    eval_pred,
    expr_from_sexpr,
    expr_to_sexpr,
    pred_from_sexpr,
    pred_to_sexpr,
    type_from_sexpr,
    type_to_sexpr,
)


class ImpError(Exception):
    pass


class ParseError(ImpError):
    pass


# ---------------------------------------------------------------------------
# Instructions


@dataclass(frozen=True)
class Assign:
    var: str
    expr: object


@dataclass(frozen=True)
class Havoc:
    var: str


@dataclass(frozen=True)
class Get:
    relvar: str
    targets: tuple  # variable names receiving the tuple components


@dataclass(frozen=True)
class Set:
    relvar: str
    args: tuple  # variable names supplying the tuple components


@dataclass(frozen=True)
class Assume:
    pred: object


@dataclass(frozen=True)
class Assert:
    pred: object


@dataclass(frozen=True)
class Seq:
    instrs: tuple


SKIP = Assume(TRUE)


def seq_of(instrs):
    flat = []
    for i in instrs:
        if isinstance(i, Seq):
            flat.extend(i.instrs)
        else:
            flat.append(i)
    return Seq(tuple(flat))


@dataclass
class ImpProgram:
    relvar_sigs: dict = field(default_factory=dict)  # name -> (BaseType, ...)
    base_types: dict = field(default_factory=dict)  # name -> BaseType
    func_sigs: dict = field(default_factory=dict)  # name -> FuncSig
    blocks: list = field(default_factory=list)  # [(label, Seq)]
    clones: dict = field(default_factory=dict)  # clone relvar -> original


# ---------------------------------------------------------------------------
# States


class _ErrorState:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ERROR"


ERROR = _ErrorState()


@dataclass(frozen=True)
class RelState:
    base: tuple  # sorted ((name, value), ...)
    rels: tuple  # sorted ((relvar, frozenset of tuples), ...)

    @staticmethod
    def make(base, rels):
        return RelState(
            tuple(sorted(base.items())),
            tuple(sorted((k, frozenset(v)) for k, v in rels.items())),
        )

    def base_map(self):
        return dict(self.base)

    def rel_map(self):
        return {k: set(v) for k, v in self.rels}


@dataclass(frozen=True)
class ImpState:
    base: tuple
    rels: tuple  # sorted ((relvar, tuple | None), ...)

    @staticmethod
    def make(base, rels):
        return ImpState(
            tuple(sorted(base.items())), tuple(sorted(rels.items()))
        )

    def base_map(self):
        return dict(self.base)

    def rel_map(self):
        return dict(self.rels)


def initial_rel_state(p, domain):
    base = {x: domain.min_value(t) for x, t in p.base_types.items()}
    rels = {k: frozenset() for k in p.relvar_sigs}
    return RelState.make(base, rels)


def initial_imp_state(p, domain):
    base = {x: domain.min_value(t) for x, t in p.base_types.items()}
    rels = {k: None for k in p.relvar_sigs}
    return ImpState.make(base, rels)


# ---------------------------------------------------------------------------
# Post relations


@dataclass
class ExecContext:
    program: ImpProgram
    domain: ValueDomain
    tables: dict = field(default_factory=dict)  # function name -> finite map

    def interp(self, base_map):
        return Interpretation(base_map, self.tables)


def post_rel(state, instr, ctx):
    """Relational successors of one instruction. ERROR absorbs."""
    if state is ERROR:
        return {ERROR}
    if isinstance(instr, Seq):
        states = {state}
        for i in instr.instrs:
            states = set().union(*(post_rel(s, i, ctx) for s in states))
        return states
    base = state.base_map()
    if isinstance(instr, Assign):
        base[instr.var] = eval_expr(ctx.interp(base), instr.expr)
        return {RelState(tuple(sorted(base.items())), state.rels)}
    if isinstance(instr, Havoc):
        t = ctx.program.base_types[instr.var]
        out = set()
        for val in ctx.domain.values(t):
            b = dict(base)
            b[instr.var] = val
            out.add(RelState(tuple(sorted(b.items())), state.rels))
        return out
    if isinstance(instr, Assume):
        if eval_pred(ctx.interp(base), instr.pred):
            return {state}
        return set()
    if isinstance(instr, Assert):
        if eval_pred(ctx.interp(base), instr.pred):
            return {state}
        return {ERROR}
    if isinstance(instr, Get):
        rels = state.rel_map()
        out = set()
        for tup in rels[instr.relvar]:
            b = dict(base)
            for x, val in zip(instr.targets, tup):
                b[x] = val
            out.add(RelState(tuple(sorted(b.items())), state.rels))
        return out
    if isinstance(instr, Set):
        rels = state.rel_map()
        tup = tuple(base[x] for x in instr.args)
        rels[instr.relvar].add(tup)
        return {RelState.make(base, rels)}
    raise ImpError(f"bad instruction {instr!r}")


def post_imp(state, instr, ctx):
    """Imperative successors of one instruction. ERROR absorbs."""
    if state is ERROR:
        return {ERROR}
    if isinstance(instr, Seq):
        states = {state}
        for i in instr.instrs:
            states = set().union(*(post_imp(s, i, ctx) for s in states))
        return states
    base = state.base_map()
    if isinstance(instr, Assign):
        base[instr.var] = eval_expr(ctx.interp(base), instr.expr)
        return {ImpState(tuple(sorted(base.items())), state.rels)}
    if isinstance(instr, Havoc):
        t = ctx.program.base_types[instr.var]
        out = set()
        for val in ctx.domain.values(t):
            b = dict(base)
            b[instr.var] = val
            out.add(ImpState(tuple(sorted(b.items())), state.rels))
        return out
    if isinstance(instr, Assume):
        if eval_pred(ctx.interp(base), instr.pred):
            return {state}
        return set()
    if isinstance(instr, Assert):
        if eval_pred(ctx.interp(base), instr.pred):
            return {state}
        return {ERROR}
    if isinstance(instr, Get):
        tup = state.rel_map()[instr.relvar]
        if tup is None:
            return set()
        for x, val in zip(instr.targets, tup):
            base[x] = val
        return {ImpState(tuple(sorted(base.items())), state.rels)}
    if isinstance(instr, Set):
        rels = state.rel_map()
        rels[instr.relvar] = tuple(base[x] for x in instr.args)
        return {ImpState.make(base, rels)}
    raise ImpError(f"bad instruction {instr!r}")


POST = {"relational": post_rel, "imperative": post_imp}
INITIAL = {"relational": initial_rel_state, "imperative": initial_imp_state}


# ---------------------------------------------------------------------------
# Reachability


@dataclass
class ReachResult:
    states: set
    error_trace: list | None  # block labels leading to ERROR
    exhausted: bool  # False when the fuel cap stopped the fixpoint

    @property
    def safe(self):
        return self.error_trace is None


def reach(p, ctx, semantics="relational", fuel=10_000, stop_on_error=False):
    """All states reachable from the initial state by any block sequence under
    one fixed interpretation. Tracks a shortest block trace to ERROR. With
    `stop_on_error` the fixpoint is cut short once ERROR appears (the state
    set is then partial; only the verdict is meaningful)."""
    post = POST[semantics]
    init = INITIAL[semantics](p, ctx.domain)
    states = {init}
    traces = {init: []}
    frontier = [init]
    error_trace = None
    rounds = 0
    while frontier:
        rounds += 1
        if rounds > fuel or len(states) > fuel:
            return ReachResult(states, error_trace, False)
        nxt = []
        for s in frontier:
            if s is ERROR:
                continue
            for label, block in p.blocks:
                for s2 in post(s, block, ctx):
                    if s2 in states:
                        continue
                    states.add(s2)
                    traces[s2] = traces[s] + [label]
                    if s2 is ERROR:
                        if error_trace is None:
                            error_trace = traces[s2]
                        if stop_on_error:
                            return ReachResult(states, error_trace, False)
                    else:
                        nxt.append(s2)
        frontier = nxt
    return ReachResult(states, error_trace, True)


SAFE = "safe"
UNSAFE = "unsafe"
INCONCLUSIVE = "inconclusive"


@dataclass
class ExecVerdict:
    status: str
    trace: list | None = None
    tables: dict | None = None


def exec_program(p, domain, semantics="relational", table_budget=256, seed=0, fuel=10_000):
    """Safety over every interpretation of the uninterpreted functions. With
    sampled tables a clean run is INCONCLUSIVE rather than SAFE."""
    sigs = list(p.func_sigs.values())
    choices = enumerate_func_tables(sigs, domain, table_budget, seed)
    exhaustive = all(ex for _, ex in choices)
    for tables, _ in choices:
        r = reach(p, ExecContext(p, domain, tables), semantics, fuel, stop_on_error=True)
        if r.error_trace is not None:
            return ExecVerdict(UNSAFE, r.error_trace, tables)
        if not r.exhausted:
            exhaustive = False
    return ExecVerdict(SAFE if exhaustive else INCONCLUSIVE)


# ---------------------------------------------------------------------------
# Structure checks and the Relational/Imperative correspondence maps


@dataclass(frozen=True)
class Violation:
    label: str
    relvar: str
    kind: str  # "READS" | "WRITES"
    count: int


def is_rwo(p):
    """OK (None) or the first per-block read/write-once violation."""
    for label, block in p.blocks:
        reads, writes = {}, {}
        for i in block.instrs:
            if isinstance(i, Get):
                reads[i.relvar] = reads.get(i.relvar, 0) + 1
            elif isinstance(i, Set):
                writes[i.relvar] = writes.get(i.relvar, 0) + 1
        for k, n in sorted(reads.items()):
            if n > 1:
                return Violation(label, k, "READS", n)
        for k, n in sorted(writes.items()):
            if n > 1:
                return Violation(label, k, "WRITES", n)
    return None


def alpha(states):
    """Per-relvar union of relation contents over non-error Relational
    states, as an extensional solution mapping."""
    out = {}
    for s in states:
        if s is ERROR:
            continue
        for k, tuples in s.rels:
            out.setdefault(k, set()).update(tuples)
    return {k: frozenset(v) for k, v in out.items()}


def expand(state):
    """All Imperative states covered by a Relational state: each relation
    variable independently holds one of its tuples, or bottom when the
    relation is empty."""
    if state is ERROR:
        return {ERROR}
    names = [k for k, _ in state.rels]
    options = [sorted(tuples) if tuples else [None] for _, tuples in state.rels]
    out = set()
    stack = [(0, {})]
    while stack:
        i, chosen = stack.pop()
        if i == len(names):
            out.add(ImpState(state.base, tuple(sorted(chosen.items()))))
            continue
        for opt in options[i]:
            c = dict(chosen)
            c[names[i]] = opt
            stack.append((i + 1, c))
    return out


def expand_all(states):
    out = set()
    for s in states:
        out |= expand(s)
    return out


# ---------------------------------------------------------------------------
# Concrete syntax
#
#   ;; uninterp len ((ui obj)) int
#   ;; relvar k1 arity 3 types int int (ui obj)
#   ;; basevar v int
#   ;; clone k1.1 of k1
#   loop {
#     /*c1*/
#       havoc v;
#       assume (= v i);
#       set k1 (v, i, xs)
#   []
#     ...
#   }


def _scan(text):
    """Tokens: ('label', s) ('word', s) ('int', n) ('group', raw) and
    punctuation ('punct', one of {{ }} ; [] :=)."""
    toks = []
    i, n = 0, len(text)
    line = 1
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c.isspace():
            i += 1
            continue
        if text.startswith("/*", i):
            j = text.find("*/", i + 2)
            if j < 0:
                raise ParseError(f"line {line}: unterminated label")
            toks.append(("label", text[i + 2 : j].strip(), line))
            i = j + 2
            continue
        if text.startswith("[]", i):
            toks.append(("punct", "[]", line))
            i += 2
            continue
        if text.startswith(":=", i):
            toks.append(("punct", ":=", line))
            i += 2
            continue
        if c in "{};":
            toks.append(("punct", c, line))
            i += 1
            continue
        if c == "(":
            depth = 0
            j = i
            while j < n:
                if text[j] == "(":
                    depth += 1
                elif text[j] == ")":
                    depth -= 1
                    if depth == 0:
                        break
                elif text[j] == "\n":
                    line += 1
                j += 1
            if depth != 0:
                raise ParseError(f"line {line}: unbalanced parentheses")
            toks.append(("group", text[i : j + 1], line))
            i = j + 1
            continue
        j = i
        while j < n and (text[j].isalnum() or text[j] in "_.'-#"):
            j += 1
        if j == i:
            raise ParseError(f"line {line}: stray character {c!r}")
        word = text[i:j]
        try:
            toks.append(("int", int(word), line))
        except ValueError:
            toks.append(("word", word, line))
        i = j
    return toks


def _group_pred(raw):
    form = sexpr.parse_one(raw)
    if isinstance(form, list) and len(form) == 1 and isinstance(form[0], str):
        form = form[0]  # (true) and friends: grammar parens around an atom
    return pred_from_sexpr(form)


def _group_names(raw):
    inner = raw[1:-1]
    names = [part.strip() for part in inner.split(",")]
    if names == [""]:
        names = []
    for x in names:
        if not x or any(ch in x for ch in " ()"):
            raise ParseError(f"bad tuple component {x!r}")
    return tuple(names)


class _Toks:
    def __init__(self, toks):
        self.toks = toks
        self.pos = 0

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else ("eof", None, -1)

    def next(self):
        t = self.peek()
        self.pos += 1
        return t

    def expect(self, kind, value=None):
        k, v, line = self.next()
        if k != kind or (value is not None and v != value):
            raise ParseError(f"line {line}: expected {value or kind}, got {v!r}")
        return v


def _parse_instr(ts):
    kind, val, line = ts.next()
    if kind == "word" and val == "havoc":
        return Havoc(ts.expect("word"))
    if kind == "word" and val in ("get", "set"):
        relvar = ts.expect("word")
        k2, raw, _ = ts.next()
        if k2 != "group":
            raise ParseError(f"line {line}: {val} needs a tuple")
        names = _group_names(raw)
        if not names:
            raise ParseError(f"line {line}: {val} tuple must be non-empty")
        return Get(relvar, names) if val == "get" else Set(relvar, names)
    if kind == "word" and val in ("assume", "assert"):
        k2, raw, _ = ts.next()
        if k2 != "group":
            raise ParseError(f"line {line}: {val} needs a parenthesized predicate")
        pred = _group_pred(raw)
        return Assume(pred) if val == "assume" else Assert(pred)
    if kind == "word":
        ts.expect("punct", ":=")
        k2, v2, l2 = ts.next()
        if k2 == "int":
            expr = expr_from_sexpr(v2)
        elif k2 == "word":
            expr = expr_from_sexpr(v2)
        elif k2 == "group":
            expr = expr_from_sexpr(sexpr.parse_one(v2))
        else:
            raise ParseError(f"line {l2}: bad assignment right-hand side")
        return Assign(val, expr)
    raise ParseError(f"line {line}: bad instruction start {val!r}")


def parse_imp(text):
    p = ImpProgram()
    body_lines = []
    for raw_line in text.splitlines():
        stripped = raw_line.strip()
        if stripped.startswith(";;"):
            _parse_header(p, stripped[2:].strip())
        else:
            body_lines.append(raw_line)
    ts = _Toks(_scan("\n".join(body_lines)))
    ts.expect("word", "loop")
    ts.expect("punct", "{")
    if ts.peek()[:2] == ("punct", "}"):
        ts.next()
    else:
        while True:
            k, label, line = ts.next()
            if k != "label":
                raise ParseError(f"line {line}: expected /*label*/")
            instrs = [_parse_instr(ts)]
            while ts.peek()[:2] == ("punct", ";"):
                ts.next()
                instrs.append(_parse_instr(ts))
            p.blocks.append((label, seq_of(instrs)))
            k, v, line = ts.next()
            if (k, v) == ("punct", "}"):
                break
            if (k, v) != ("punct", "[]"):
                raise ParseError(f"line {line}: expected [] or }}")
    if ts.peek()[0] != "eof":
        raise ParseError("trailing input after program")
    _check_program(p)
    return p


def _parse_header(p, line):
    parts = line.split(None, 1)
    if not parts:
        return
    head = parts[0]
    rest = parts[1] if len(parts) > 1 else ""
    if head == "relvar":
        forms = sexpr.parse_many(rest)
        # NAME arity N types T0 ... Tn
        name, kw1, arity, kw2, *types = forms
        if kw1 != "arity" or kw2 != "types" or arity != len(types):
            raise ParseError(f"bad relvar header {line!r}")
        p.relvar_sigs[name] = tuple(type_from_sexpr(t) for t in types)
    elif head == "basevar":
        forms = sexpr.parse_many(rest)
        if len(forms) != 2:
            raise ParseError(f"bad basevar header {line!r}")
        p.base_types[forms[0]] = type_from_sexpr(forms[1])
    elif head == "uninterp":
        forms = sexpr.parse_many(rest)
        if len(forms) != 3:
            raise ParseError(f"bad uninterp header {line!r}")
        name, argtys, retty = forms
        p.func_sigs[name] = FuncSig(
            name,
            tuple(type_from_sexpr(t) for t in argtys),
            type_from_sexpr(retty),
        )
    elif head == "clone":
        forms = rest.split()
        if len(forms) != 3 or forms[1] != "of":
            raise ParseError(f"bad clone header {line!r}")
        p.clones[forms[0]] = forms[2]
    # unknown ;; lines are plain comments


def _check_program(p):
    for label, block in p.blocks:
        for i in block.instrs:
            if isinstance(i, (Get, Set)):
                sig = p.relvar_sigs.get(i.relvar)
                if sig is None:
                    raise ParseError(f"{label}: undeclared relvar {i.relvar}")
                names = i.targets if isinstance(i, Get) else i.args
                if len(names) != len(sig):
                    raise ParseError(
                        f"{label}: {i.relvar} has arity {len(sig)}, got {len(names)}"
                    )
                for x in names:
                    if x not in p.base_types:
                        raise ParseError(f"{label}: undeclared variable {x}")
            elif isinstance(i, (Havoc, Assign)):
                if i.var not in p.base_types:
                    raise ParseError(f"{label}: undeclared variable {i.var}")


def _print_pred_group(pred):
    form = pred_to_sexpr(pred)
    if isinstance(form, (str, int)):
        return f"({form})"
    return sexpr.to_str(form)


def print_instr(i):
    if isinstance(i, Havoc):
        return f"havoc {i.var}"
    if isinstance(i, Assign):
        return f"{i.var} := {sexpr.to_str(expr_to_sexpr(i.expr))}"
    if isinstance(i, Get):
        return f"get {i.relvar} ({', '.join(i.targets)})"
    if isinstance(i, Set):
        return f"set {i.relvar} ({', '.join(i.args)})"
    if isinstance(i, Assume):
        return f"assume {_print_pred_group(i.pred)}"
    if isinstance(i, Assert):
        return f"assert {_print_pred_group(i.pred)}"
    raise ImpError(f"bad instruction {i!r}")


def print_imp(p):
    lines = []
    for sig in p.func_sigs.values():
        args = sexpr.to_str([type_to_sexpr(t) for t in sig.arg_types])
        lines.append(f";; uninterp {sig.name} {args} {sexpr.to_str(type_to_sexpr(sig.ret_type))}")
    for name, types in p.relvar_sigs.items():
        ts = " ".join(sexpr.to_str(type_to_sexpr(t)) for t in types)
        lines.append(f";; relvar {name} arity {len(types)} types {ts}")
    for name, t in p.base_types.items():
        lines.append(f";; basevar {name} {sexpr.to_str(type_to_sexpr(t))}")
    for clone, orig in p.clones.items():
        lines.append(f";; clone {clone} of {orig}")
    lines.append("loop {")
    for bi, (label, block) in enumerate(p.blocks):
        if bi:
            lines.append("[]")
        lines.append(f"  /*{label}*/")
        for ii, instr in enumerate(block.instrs):
            sep = ";" if ii + 1 < len(block.instrs) else ""
            lines.append(f"    {print_instr(instr)}{sep}")
    lines.append("}")
    return "\n".join(lines) + "\n"
