"""Per-block pruning decisions made while applying a rule.

Each candidate delta block carries the rule that produced it. A block can be
excluded from a join when no partial substitution gathered so far can match
facts the producer could have derived (mismatch), when every such match would
only rederive known facts (redundancy), or when the resolved rule is subsumed
by a rule already applied since the block was created. All decisions are pure
functions over immutable inputs and never change the materialization result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .columns import Relation, sorted_unique_rows
from .lang import (
    Atom,
    Const,
    Rule,
    Substitution,
    apply_subst,
    apply_subst_atom,
    is_trivially_redundant,
    rename_apart,
    resolve,
    subsumes,
    unify,
)

# Bounded fact lookup: matching variable-binding rows for an atom, or None
# when the atom cannot be enumerated within the given budget.
FactLookup = Callable[[Atom, int], "list[tuple[int, ...]] | None"]


def _no_lookup(atom: Atom, budget: int):
    return None


@dataclass
class PruneContext:
    """Inputs for one block decision while evaluating one rule position.

    ``partial`` is the join computed so far (bindings for the variables of
    the EDB prefix and the earlier IDB atoms). ``atom`` is the IDB body atom
    about to be joined, ``block_rule`` the rule that produced the candidate
    block. ``lookup`` lets the redundancy check extend partial substitutions
    with producer-side bindings, capped at ``limit`` rows.
    """

    rule: Rule
    body_index: int
    atom: Atom
    partial: Relation
    block_rule: Rule
    lookup: FactLookup = _no_lookup
    limit: int = 32


def distinct_projection(partial: Relation, var_names: Sequence[str]) -> list[Substitution]:
    """Distinct bindings of ``partial`` restricted to the given variables.

    Variables absent from the relation stay unbound. An empty attribute
    overlap yields the single empty substitution.
    """
    attrs = [a for a in var_names if a in partial.attrs]
    if not attrs:
        return [{}]
    matrix = sorted_unique_rows(np.column_stack([partial.col(a) for a in attrs]))
    return [
        {a: Const(int(v)) for a, v in zip(attrs, row)}
        for row in matrix.tolist()
    ]


def should_check_dynamic(partial: Relation, shared_vars: Sequence[str], limit: int = 32) -> bool:
    """Gate for the data-driven checks: distinct projection small enough.

    The boundary is inclusive: exactly ``limit`` distinct bindings still runs
    the dynamic checks.
    """
    attrs = [a for a in shared_vars if a in partial.attrs]
    if not attrs:
        return True
    matrix = sorted_unique_rows(np.column_stack([partial.col(a) for a in attrs]))
    return matrix.shape[0] <= limit


def prune_mismatch(ctx: PruneContext, dynamic: bool = True) -> bool:
    """Drop the block when its producer's head cannot match the body atom.

    Static form: the heads do not unify at all. Dynamic form: under every
    distinct binding from the partial join, the instantiated body atom fails
    to unify with the producer's head.
    """
    producer = rename_apart(ctx.block_rule, ctx.rule.vars())
    if unify(ctx.atom, producer.head) is None:
        return True
    if not dynamic:
        return False
    if not should_check_dynamic(ctx.partial, ctx.atom.vars(), ctx.limit):
        return False
    bindings = distinct_projection(ctx.partial, ctx.atom.vars())
    if not bindings:
        return True  # empty partial join: the block cannot contribute
    for sigma in bindings:
        if unify(apply_subst_atom(ctx.atom, sigma), producer.head) is not None:
            return False
    return True


def _redundant_under_extensions(rule: Rule, pos: int, hi: int,
                                lookup: FactLookup, budget: list[int]) -> bool | None:
    """Is the partially instantiated resolved rule redundant on every branch?

    Producer-derived body atoms in positions [pos, hi) are matched against the
    facts known at check time, a superset of whatever the block's inferences
    were built from. Triviality is tested before extending (a substitution
    cannot destroy head/body equality), so a redundant partial instantiation
    accepts its whole branch; a branch that exhausts the atoms without
    becoming redundant is a counterexample. Vacuous branches (an atom with no
    matches) cannot contribute inferences and accept. Returns None when the
    lookup budget runs out.
    """
    if is_trivially_redundant(rule):
        return True
    if pos == hi:
        return False
    atom = rule.body[pos]
    rows = lookup(atom, budget[0] if budget[0] > 0 else 1)
    if rows is None:
        return None
    if not rows:
        return True
    names = atom.vars()
    if not names:
        return _redundant_under_extensions(rule, pos + 1, hi, lookup, budget)
    for row in rows:
        budget[0] -= 1
        if budget[0] < 0:
            return None
        ext = {n: Const(int(v)) for n, v in zip(names, row)}
        verdict = _redundant_under_extensions(
            apply_subst(rule, ext), pos + 1, hi, lookup, budget
        )
        if verdict is not True:
            return verdict
    return True


def prune_redundant(ctx: PruneContext, dynamic: bool = True) -> bool:
    """Drop the block when joining it could only rederive earlier facts.

    The body atom is resolved against the producer rule; if the resolved rule
    is trivially redundant the block is dropped outright. Otherwise, under
    every distinct binding from the partial join (extended with bounded
    producer-side matches against the currently known facts), the
    instantiated resolved rule must be trivially redundant. The projection
    covers every bound variable the resolved rule mentions, not just the body
    atom's: triviality of the combined rule can hinge on variables bound by
    earlier atoms. Bindings under which the body atom no longer unifies with
    the producer's head cannot contribute matches and are skipped.
    """
    resolved = resolve(ctx.rule, ctx.body_index, ctx.block_rule)
    if resolved is None:
        return False
    if is_trivially_redundant(resolved):
        return True
    if not dynamic:
        return False
    relevant_vars = set(resolved.rule.vars()) | set(ctx.atom.vars())
    relevant = [a for a in ctx.partial.attrs if a in relevant_vars]
    if not should_check_dynamic(ctx.partial, relevant, ctx.limit):
        return False
    bindings = distinct_projection(ctx.partial, relevant)
    if not bindings:
        return True
    producer_head = rename_apart(ctx.block_rule, ctx.rule.vars()).head
    for sigma in bindings:
        if unify(apply_subst_atom(ctx.atom, sigma), producer_head) is None:
            continue
        instantiated = apply_subst(resolved.rule, sigma)
        verdict = _redundant_under_extensions(
            instantiated, resolved.inserted_lo, resolved.inserted_hi,
            ctx.lookup, [ctx.limit],
        )
        if verdict is not True:
            return False
    return True


def prune_subsumed_static(rule: Rule, body_index: int, producer: Rule,
                          applied_since: Iterable[Rule]) -> bool:
    """Drop the block when the resolved rule is subsumed by a rule already
    applied after the block was created. Conservative keep otherwise.

    The subsuming rule's body must map entirely into the atoms inherited from
    the block's producer: those stand for facts strictly older than the block,
    so every skipped inference was derivable by the subsuming rule from
    combinations it has already processed. Allowing the homomorphism to land
    on the applied rule's own remaining atoms would defer to fact
    combinations as new as the current step, and a rule deferring to its own
    future applications this way can re-skip the same block forever and lose
    inferences (found by randomized fixpoint fuzzing).
    """
    resolved = resolve(rule, body_index, producer)
    if resolved is None:
        return False
    inherited = Rule(
        resolved.rule.head,
        resolved.rule.body[resolved.inserted_lo: resolved.inserted_hi],
    )
    for other in applied_since:
        if subsumes(other, inherited):
            return True
    return False
