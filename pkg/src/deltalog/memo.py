"""Goal-directed pre-computation of selected body atoms.

Before materialization starts, the extensions of promising IDB body atoms are
computed top-down with recursive query-subquery evaluation (bound/free
adornments, input and answer tables, iterated to a global fixpoint). Atoms
whose pre-computation finishes within a per-atom deadline are promoted to the
base-fact layer: their answers become a fresh EDB predicate and every body
occurrence that is an instance of the memoized pattern is redirected to it.
Timed-out atoms leave the program untouched, so the transformation never
changes the materialized result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable

from .edb import EdbStore
from .errors import UnknownPredicateError
from .lang import (
    Atom,
    Const,
    PredKind,
    Predicate,
    Program,
    Rule,
    Substitution,
    apply_subst_atom,
    canonical_atom,
    match_atom,
)


@dataclass
class MemoOutcome:
    atom: Atom
    status: str  # "memoized" | "timed_out"
    facts: frozenset[tuple[int, ...]] | None
    elapsed_ms: float
    predicate: str | None = None  # fresh EDB predicate holding the answers


@dataclass
class MemoPlan:
    program: Program
    outcomes: list[MemoOutcome] = field(default_factory=list)
    elapsed_ms: float = 0.0

    @property
    def attempted(self) -> int:
        return len(self.outcomes)

    @property
    def memoized(self) -> int:
        return sum(1 for o in self.outcomes if o.status == "memoized")


class _Deadline:
    __slots__ = ("at",)

    def __init__(self, seconds: float):
        self.at = time.monotonic() + seconds

    def expired(self) -> bool:
        return time.monotonic() > self.at


class _TimedOut(Exception):
    pass


def select_memo_candidates(program: Program) -> list[Atom]:
    """IDB body atoms worth attempting, one per renaming class.

    Atoms equal up to variable renaming collapse to their first occurrence;
    candidates with more constants come first (they are the cheapest and most
    likely to finish), ties keep program order.
    """
    seen: dict[tuple, Atom] = {}
    order: list[tuple] = []
    for rule in program.rules:
        for atom in rule.body:
            if not atom.pred.is_idb:
                continue
            canon = canonical_atom(atom)
            key = (canon.pred.name, canon.terms)
            if key not in seen:
                seen[key] = atom
                order.append(key)
    candidates = [seen[k] for k in order]
    constants = {
        id(a): sum(isinstance(t, Const) for t in a.terms) for a in candidates
    }
    candidates.sort(key=lambda a: -constants[id(a)])
    return candidates


# ---------------------------------------------------------------------------
# Recursive query-subquery evaluation
# ---------------------------------------------------------------------------


def _adornment(atom: Atom) -> tuple[bool, ...]:
    return tuple(isinstance(t, Const) for t in atom.terms)


def _bound_values(atom: Atom, adornment: tuple[bool, ...]) -> tuple[int, ...]:
    return tuple(t.cid for t, b in zip(atom.terms, adornment) if b)


class _QsqState:
    def __init__(self, program: Program, db: EdbStore, deadline: _Deadline):
        self.rules_by_head: dict[str, list[Rule]] = {}
        for rule in program.rules:
            self.rules_by_head.setdefault(rule.head.pred.name, []).append(rule)
        self.db = db
        self.deadline = deadline
        self.inputs: dict[tuple[str, tuple[bool, ...]], set[tuple[int, ...]]] = {}
        self.answers: dict[str, set[tuple[int, ...]]] = {}
        self.changed = False

    def add_input(self, pred: str, adornment: tuple[bool, ...], bound: tuple[int, ...]) -> None:
        table = self.inputs.setdefault((pred, adornment), set())
        if bound not in table:
            table.add(bound)
            self.changed = True

    def add_answer(self, pred: str, fact: tuple[int, ...]) -> None:
        table = self.answers.setdefault(pred, set())
        if fact not in table:
            table.add(fact)
            self.changed = True

    def matches(self, atom: Atom) -> Iterable[Substitution]:
        """Bindings of the atom's variables against the answer table."""
        names = atom.vars()
        first: dict[str, int] = {}
        checks: list[tuple[int, int]] = []
        consts: list[tuple[int, int]] = []
        var_pos: dict[str, int] = {}
        for i, t in enumerate(atom.terms):
            if isinstance(t, Const):
                consts.append((i, t.cid))
            elif t.name in first:
                checks.append((i, first[t.name]))
            else:
                first[t.name] = i
                var_pos[t.name] = i
        # snapshot: recursion below an atom may grow the table; the global
        # fixpoint loop re-runs until no table changes, so nothing is lost
        for fact in list(self.answers.get(atom.pred.name, ())):
            if any(fact[i] != c for i, c in consts):
                continue
            if any(fact[i] != fact[fp] for i, fp in checks):
                continue
            yield {name: Const(fact[var_pos[name]]) for name in names}

    def eval_rule_for_input(self, rule: Rule, adornment: tuple[bool, ...],
                            bound: tuple[int, ...]) -> None:
        if self.deadline.expired():
            raise _TimedOut
        sigma: Substitution = {}
        pos = 0
        for term, is_bound in zip(rule.head.terms, adornment):
            if not is_bound:
                continue
            value = bound[pos]
            pos += 1
            if isinstance(term, Const):
                if term.cid != value:
                    return
            else:
                prior = sigma.get(term.name)
                if prior is not None and prior != Const(value):
                    return
                sigma[term.name] = Const(value)
        self._eval_body(rule, 0, sigma)

    def _eval_body(self, rule: Rule, index: int, sigma: Substitution) -> None:
        if self.deadline.expired():
            raise _TimedOut
        if index == len(rule.body):
            head = apply_subst_atom(rule.head, sigma)
            self.add_answer(head.pred.name, tuple(t.cid for t in head.terms))
            return
        atom = apply_subst_atom(rule.body[index], sigma)
        if not atom.pred.is_idb:
            names = atom.vars()
            for row in self.db.scan(atom):
                ext = dict(sigma)
                ext.update({n: Const(v) for n, v in zip(names, row)})
                self._eval_body(rule, index + 1, ext)
            return
        adornment = _adornment(atom)
        self.add_input(atom.pred.name, adornment, _bound_values(atom, adornment))
        for binding in self.matches(atom):
            ext = dict(sigma)
            ext.update(binding)
            self._eval_body(rule, index + 1, ext)


def qsqr_answer(query: Atom, program: Program, db: EdbStore,
                deadline_s: float) -> set[tuple[int, ...]] | None:
    """All ground instances of ``query`` in the program's fixpoint, or None
    when the deadline expires first (a normal outcome; partial answers are
    discarded)."""
    if not query.pred.is_idb:
        raise UnknownPredicateError(f"{query.pred.name!r} is not an IDB predicate")
    deadline = _Deadline(deadline_s)
    state = _QsqState(program, db, deadline)
    root_ad = _adornment(query)
    state.add_input(query.pred.name, root_ad, _bound_values(query, root_ad))
    try:
        while True:
            if deadline.expired():
                raise _TimedOut
            state.changed = False
            for (pred, adornment), table in list(state.inputs.items()):
                for bound in list(table):
                    for rule in state.rules_by_head.get(pred, ()):
                        state.eval_rule_for_input(rule, adornment, bound)
            if not state.changed:
                break
    except _TimedOut:
        return None

    out: set[tuple[int, ...]] = set()
    for fact in state.answers.get(query.pred.name, ()):
        first: dict[str, int] = {}
        ok = True
        for i, t in enumerate(query.terms):
            if isinstance(t, Const):
                ok = fact[i] == t.cid
            elif t.name in first:
                ok = fact[i] == fact[first[t.name]]
            else:
                first[t.name] = i
            if not ok:
                break
        if ok:
            out.add(fact)
    return out


# ---------------------------------------------------------------------------
# Program rewriting
# ---------------------------------------------------------------------------


def _fresh_memo_name(base: str, db: EdbStore, program: Program) -> str:
    k = 0
    while True:
        name = f"_memo{k}_{base}"
        if name not in program.predicates and not db.has_predicate(name):
            return name
        k += 1


def _rewrite_program(program: Program, memo_atom: Atom, memo_pred: Predicate) -> Program:
    predicates = dict(program.predicates)
    predicates[memo_pred.name] = memo_pred

    def rewrite_atom(atom: Atom) -> Atom:
        if atom.pred.name == memo_atom.pred.name and match_atom(memo_atom, atom) is not None:
            return Atom(memo_pred, atom.terms)
        return atom

    rules = tuple(
        Rule(rule.head, tuple(rewrite_atom(a) for a in rule.body))
        for rule in program.rules
    )
    return Program(rules, predicates, program.facts, program.dictionary)


def memoize(program: Program, db: EdbStore, timeout_per_atom_ms: float) -> MemoPlan:
    """Attempt pre-computation of every candidate atom and rewrite the program.

    Each candidate is answered top-down against the original program under the
    per-atom deadline. Successful candidates install their answers as a fresh
    EDB predicate in ``db`` and redirect matching body occurrences; the
    rewritten program materializes to the same facts per original predicate.
    """
    started = time.monotonic()
    plan = MemoPlan(program=program)
    current = program
    for atom in select_memo_candidates(program):
        t0 = time.monotonic()
        answers = qsqr_answer(atom, program, db, timeout_per_atom_ms / 1000.0)
        elapsed = (time.monotonic() - t0) * 1000.0
        if answers is None:
            plan.outcomes.append(MemoOutcome(atom, "timed_out", None, elapsed))
            continue
        name = _fresh_memo_name(atom.pred.name, db, current)
        memo_pred = Predicate(name, atom.pred.arity, PredKind.EDB)
        db.ensure_predicate(name, atom.pred.arity)
        for fact in sorted(answers):
            db.add_fact(name, fact)
        current = _rewrite_program(current, atom, memo_pred)
        plan.outcomes.append(
            MemoOutcome(atom, "memoized", frozenset(answers), elapsed, name)
        )
    plan.program = current
    plan.elapsed_ms = (time.monotonic() - started) * 1000.0
    return plan
