"""Cloning kvars to make the translated program read-write-once.

A constraint reads a kvar once per kapp occurrence in its environment or on
its left-hand side, and writes it via a kapp on the right-hand side. When
some constraint reads k a maximum of n >= 2 times, k is split into clones
k.1 ... k.n: the i-th read occurrence in each constraint becomes k.i, and
every constraint writing k is replicated once per clone (labels suffixed
#i). Kvars read at most once are left untouched, so cloning is the identity
on already-RWO constraint sets.

A solution over the cloned set folds back to the original kvars by
intersection: conjunction of predicates (intensional) or intersection of
tuple sets (extensional).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .constraints import (
    ConstraintSet,
    INTENSIONAL,
    KApp,
    KVarSig,
    RefType,
    Solution,
    SubConstraint,
)
from .logic import TRUE, mk_and


@dataclass
class CloneMap:
    groups: dict = field(default_factory=dict)  # original -> [clone names]

    @property
    def identity(self):
        return not self.groups

    def clones_of(self, orig):
        return self.groups.get(orig, [orig])


def read_occurrences(cs):
    """Per-kvar maximum number of read occurrences in any one constraint."""
    out = {k: 0 for k in cs.kvars}
    for c in cs.constraints:
        counts = {}
        for _, rt in c.env:
            if isinstance(rt.ref, KApp):
                counts[rt.ref.kvar] = counts.get(rt.ref.kvar, 0) + 1
        if isinstance(c.lhs.ref, KApp):
            counts[c.lhs.ref.kvar] = counts.get(c.lhs.ref.kvar, 0) + 1
        for k, n in counts.items():
            out[k] = max(out.get(k, 0), n)
    return out


def clone_name(orig, i):
    return f"{orig}.{i}"


def clone(cs):
    """Returns (cloned ConstraintSet, CloneMap)."""
    reads = read_occurrences(cs)
    cm = CloneMap()
    kvars = {}
    for name, sig in cs.kvars.items():
        n = reads.get(name, 0)
        if n >= 2:
            names = [clone_name(name, i) for i in range(1, n + 1)]
            cm.groups[name] = names
            for cn in names:
                kvars[cn] = KVarSig(cn, sig.value_type, sig.params)
        else:
            kvars[name] = sig
    if cm.identity:
        return cs, cm
    out = ConstraintSet(dict(cs.uninterps), kvars, [])
    for c in cs.constraints:
        seen = {}

        def read_ref(rt):
            if not isinstance(rt.ref, KApp) or rt.ref.kvar not in cm.groups:
                return rt
            k = rt.ref.kvar
            i = seen.get(k, 0)
            seen[k] = i + 1
            return RefType(rt.base, KApp(cm.groups[k][i], rt.ref.args))

        env = tuple((n, read_ref(rt)) for n, rt in c.env)
        lhs = read_ref(c.lhs)
        if isinstance(c.rhs.ref, KApp) and c.rhs.ref.kvar in cm.groups:
            for i, cn in enumerate(cm.groups[c.rhs.ref.kvar], start=1):
                rhs = RefType(c.rhs.base, KApp(cn, c.rhs.ref.args))
                out.constraints.append(
                    SubConstraint(f"{c.label}#{i}", env, lhs, rhs)
                )
        else:
            out.constraints.append(SubConstraint(c.label, env, lhs, c.rhs))
    return out, cm


def fold_solution(sol, cm, cs):
    """Fold a solution over clones back to the original kvars.

    Intensional entries conjoin; extensional entries intersect. `cs` is the
    original (uncloned) constraint set, for its kvar listing.
    """
    if cm.identity:
        return sol
    if sol.kind == INTENSIONAL:
        entries = {}
        for k in cs.kvars:
            parts = [sol.entries.get(cn, TRUE) for cn in cm.clones_of(k)]
            entries[k] = mk_and(*parts)
        return Solution(INTENSIONAL, entries)
    entries = {}
    for k in cs.kvars:
        sets = [sol.entries.get(cn) for cn in cm.clones_of(k)]
        sets = [s for s in sets if s is not None]
        if not sets:
            continue
        acc = set(sets[0])
        for s in sets[1:]:
            acc &= s
        entries[k] = frozenset(acc)
    return Solution(sol.kind, entries)
