"""One-rule-per-step semi-naive materialization over delta blocks.

Each derivation step applies a single rule under a fair schedule and stores
the genuinely new facts in an immutable block annotated with the step number
and the producing rule. A rule with IDB body atoms q_1..q_m is evaluated as
m delta-restricted variants: variant l reads atoms before l from the full
history, atom l from the blocks created since the rule's last application,
and atoms after l from the blocks older than that, which partitions the fact
combinations by the last position holding a recent fact. Joins run left to
right starting from the base-fact join, stream their output in chunks, and
filter against the already-known facts while accumulating, so no
witness-scale intermediate is ever materialized.
"""

from __future__ import annotations

import random
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import columns as C
from .columns import (
    ConstantColumn,
    EdbProxyColumn,
    Relation,
    RowCodec,
    SharedColumn,
    SortedTable,
    encode_sorted_matrix,
    hash_join,
    merge_join,
    sort_relation,
    sorted_unique_rows,
)
from .edb import EdbStore
from .errors import UnknownPredicateError
from .lang import Atom, Const, Predicate, Program, Rule, Var
from .optimize import PruneContext, prune_mismatch, prune_redundant, prune_subsumed_static
from .stats import StatsReport

INT = C.INT


class _Timeout(Exception):
    pass


@dataclass
class MaterializeOptions:
    """Engine toggles; defaults match the reference configuration
    (mismatch and redundancy pruning on, memoization off)."""

    enable_mr: bool = True
    enable_rr: bool = True
    enable_sub: bool = False
    enable_memo: bool = False
    memo_timeout_ms: int = 1000
    dyn_check_limit: int = 32
    hash_left_max: int = 1000
    sorted_concat_max_blocks: int = 8
    max_steps: int | None = None
    timeout_ms: float | None = None
    debug_validate: bool = False
    schedule_seed: int | None = None
    chunk_rows: int = 1 << 19
    flush_rows: int = 1 << 20
    dense_limit: int = 1 << 26
    stats: StatsReport | None = None

    def __post_init__(self) -> None:
        for name in ("dyn_check_limit", "hash_left_max", "sorted_concat_max_blocks",
                     "chunk_rows", "flush_rows", "dense_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Block:
    """Facts first derived at one step, with the rule that derived them."""

    step: int
    rule_index: int
    table: SortedTable
    pred: str


class _DeltaAccumulator:
    """Collects join output chunks into the new-facts set of one application.

    Every chunk is filtered against the facts already known for the head
    predicate and against facts collected earlier in the same application,
    so the finalized matrix equals (union of chunk rows) minus known facts.
    Uses a dense membership table when the packed key space is small, a
    sorted key array otherwise, and python sets when rows are unpackable.
    """

    def __init__(self, arity: int, codec: RowCodec, known_keys: np.ndarray | None,
                 known_set: set | None, dense_limit: int, flush_rows: int):
        self.arity = arity
        self.codec = codec
        self.flush_rows = flush_rows
        self.produced = 0
        if codec.packable and codec.keyspace <= dense_limit:
            self.mode = "dense"
            self.seen = np.zeros(codec.keyspace, dtype=bool)
            if known_keys is not None and len(known_keys):
                self.seen[known_keys] = True
            self.collected: list[np.ndarray] = []
        elif codec.packable:
            self.mode = "sorted"
            self.known = known_keys if known_keys is not None else np.empty(0, dtype=INT)
            self.newset = np.empty(0, dtype=INT)
            self.buffer: list[np.ndarray] = []
            self.buffered = 0
        else:
            self.mode = "pyset"
            self.known_rows = known_set if known_set is not None else set()
            self.new_rows: set[tuple[int, ...]] = set()

    def add(self, matrix: np.ndarray) -> None:
        self.add_cols([matrix[:, c] for c in range(matrix.shape[1])], matrix.shape[0])

    def add_cols(self, cols: list[np.ndarray], n: int) -> None:
        if n == 0:
            return
        self.produced += n
        if self.mode == "pyset":
            matrix = C._as_matrix(np.column_stack(cols) if cols else np.empty((n, 0)), self.arity)
            for row in map(tuple, matrix.tolist()):
                if row not in self.known_rows and row not in self.new_rows:
                    self.new_rows.add(row)
            return
        keys = self.codec.pack_cols(cols, n)
        if self.mode == "dense":
            fresh = keys[~self.seen[keys]]
            if len(fresh):
                fresh = np.unique(fresh)
                self.seen[fresh] = True
                self.collected.append(fresh)
            return
        mask = ~_keys_in_sorted(keys, self.known)
        if len(self.newset):
            mask &= ~_keys_in_sorted(keys, self.newset)
        fresh = keys[mask]
        if len(fresh):
            self.buffer.append(fresh)
            self.buffered += len(fresh)
            if self.buffered >= self.flush_rows:
                self._flush()

    def _flush(self) -> None:
        if self.buffered:
            merged = np.unique(np.concatenate(self.buffer))
            self.newset = np.union1d(self.newset, merged)
            self.buffer, self.buffered = [], 0

    def finalize(self) -> np.ndarray:
        if self.mode == "pyset":
            return C._as_matrix(sorted(self.new_rows), self.arity)
        if self.mode == "dense":
            if not self.collected:
                return np.empty((0, self.arity), dtype=INT)
            keys = np.unique(np.concatenate(self.collected))
            return self.codec.unpack(keys)
        self._flush()
        return self.codec.unpack(self.newset)


def _keys_in_sorted(keys: np.ndarray, hay: np.ndarray) -> np.ndarray:
    if len(hay) == 0 or len(keys) == 0:
        return np.zeros(len(keys), dtype=bool)
    idx = np.searchsorted(hay, keys)
    idx[idx == len(hay)] = 0
    return hay[idx] == keys


class BlockStore:
    """Per-predicate block lists plus derived membership indexes.

    The set of facts of an IDB predicate is the disjoint union of its blocks'
    tables; ``known_matrix`` exposes that union sorted, maintained
    incrementally as blocks are sealed. Completed stores are immutable and
    safe to query concurrently.
    """

    def __init__(self, program: Program, dictionary):
        self.program = program
        self.dictionary = dictionary
        self.step = 0
        self.completed = False
        self.last_applied: dict[int, int] = {}
        self.applied_log: list[tuple[int, int]] = []
        self._rule_index = {id(r): i for i, r in enumerate(program.rules)}
        self._bits = max(1, max(0, len(dictionary) - 1).bit_length())
        self._codecs: dict[int, RowCodec] = {}
        self._blocks: dict[str, list[Block]] = {
            n: [] for n, p in program.predicates.items() if p.is_idb
        }
        self._known_keys: dict[str, np.ndarray] = {}
        self._known_sets: dict[str, set] = {}
        self._matrix_cache: dict[str, np.ndarray] = {}
        self.deadline: float | None = None

    # -- structure ------------------------------------------------------------

    def rule_index(self, rule: Rule) -> int:
        idx = self._rule_index.get(id(rule))
        if idx is None:
            idx = self.program.rules.index(rule)
        return idx

    def codec(self, arity: int) -> RowCodec:
        codec = self._codecs.get(arity)
        if codec is None:
            codec = self._codecs[arity] = RowCodec(arity, self._bits)
        return codec

    def _require_idb(self, pred: str) -> Predicate:
        p = self.program.predicates.get(pred)
        if p is None or not p.is_idb:
            raise UnknownPredicateError(
                f"{pred!r} is not an IDB predicate of this program"
            )
        return p

    def blocks(self, pred: str) -> list[Block]:
        self._require_idb(pred)
        return list(self._blocks[pred])

    def delta_range(self, pred: str, lo: int, hi: int) -> list[Block]:
        """Non-empty blocks of ``pred`` with lo <= step <= hi, in step order."""
        self._require_idb(pred)
        return [b for b in self._blocks[pred] if lo <= b.step <= hi]

    def add_block(self, block: Block) -> None:
        blocks = self._blocks[block.pred]
        if blocks and blocks[-1].step >= block.step:
            raise ValueError("blocks must be added in increasing step order")
        blocks.append(block)
        arity = block.table.arity
        codec = self.codec(arity)
        matrix = block.table.to_matrix()
        if codec.packable:
            keys = codec.pack(matrix)
            old = self._known_keys.get(block.pred)
            self._known_keys[block.pred] = (
                np.sort(keys) if old is None else np.union1d(old, keys)
            )
        else:
            self._known_sets.setdefault(block.pred, set()).update(map(tuple, matrix.tolist()))
        self._matrix_cache.pop(block.pred, None)

    def record_application(self, rule_index: int, step: int) -> None:
        self.last_applied[rule_index] = step
        self.applied_log.append((step, rule_index))

    # -- queries --------------------------------------------------------------

    def known_matrix(self, pred: str) -> np.ndarray:
        """All facts of an IDB predicate, lexicographically sorted."""
        p = self._require_idb(pred)
        cached = self._matrix_cache.get(pred)
        if cached is not None:
            return cached
        codec = self.codec(p.arity)
        if codec.packable:
            keys = self._known_keys.get(pred)
            matrix = (
                codec.unpack(keys) if keys is not None else np.empty((0, p.arity), dtype=INT)
            )
        else:
            matrix = C._as_matrix(sorted(self._known_sets.get(pred, ())), p.arity)
        self._matrix_cache[pred] = matrix
        return matrix

    def fact_count(self, pred: str) -> int:
        return self.known_matrix(pred).shape[0]

    def idb_fact_count(self) -> int:
        return sum(self.fact_count(p) for p in self._blocks)

    def facts(self, pred: str) -> set[tuple[int, ...]]:
        return {tuple(r) for r in self.known_matrix(pred).tolist()}

    def match_pattern(self, pattern: Atom) -> list[tuple[int, ...]]:
        """Full facts of an IDB predicate matching a query pattern, sorted."""
        matrix = self.known_matrix(pattern.pred.name)
        mask = np.ones(matrix.shape[0], dtype=bool)
        first: dict[str, int] = {}
        for i, t in enumerate(pattern.terms):
            if isinstance(t, Const):
                mask &= matrix[:, i] == t.cid
            elif t.name in first:
                mask &= matrix[:, i] == matrix[:, first[t.name]]
            else:
                first[t.name] = i
        return [tuple(r) for r in matrix[mask].tolist()]

    def make_accumulator(self, pred: str, opts: MaterializeOptions) -> _DeltaAccumulator:
        p = self._require_idb(pred)
        codec = self.codec(p.arity)
        return _DeltaAccumulator(
            p.arity,
            codec,
            self._known_keys.get(pred) if codec.packable else None,
            self._known_sets.get(pred) if not codec.packable else None,
            opts.dense_limit,
            opts.flush_rows,
        )

    def make_lookup(self, db: EdbStore) -> Callable[[Atom, int], list | None]:
        """Bounded fact lookup over base facts plus derived facts known now."""

        def lookup(atom: Atom, budget: int):
            if not atom.pred.is_idb:
                rows = db.scan(atom)
                return rows if len(rows) <= budget else None
            matrix = self.known_matrix(atom.pred.name)
            mask = np.ones(matrix.shape[0], dtype=bool)
            first: dict[str, int] = {}
            var_pos: list[int] = []
            for i, t in enumerate(atom.terms):
                if isinstance(t, Const):
                    mask &= matrix[:, i] == t.cid
                elif t.name in first:
                    mask &= matrix[:, i] == matrix[:, first[t.name]]
                else:
                    first[t.name] = i
                    var_pos.append(i)
            hits = matrix[mask]
            if hits.shape[0] > budget:
                return None
            return [tuple(r) for r in hits[:, var_pos].tolist()]

        return lookup

    def check_deadline(self) -> None:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Timeout


# ---------------------------------------------------------------------------
# Rule evaluation
# ---------------------------------------------------------------------------


@dataclass
class _EncodeHints:
    proxy: tuple[Atom, list[int | None]] | None = None
    shared: SortedTable | None = None


def _head_projector(head: Atom) -> Callable[[Relation], tuple[list[np.ndarray], int]]:
    def project(rel: Relation) -> tuple[list[np.ndarray], int]:
        n = rel.nrows
        cols = []
        for t in head.terms:
            if isinstance(t, Const):
                cols.append(np.full(n, t.cid, dtype=INT))
            else:
                cols.append(rel.col(t.name))
        return cols, n

    return project


def _variant_ranges(m: int, ell: int, i: int, j: int) -> list[tuple[int, int]]:
    out = []
    for k in range(1, m + 1):
        if k < ell:
            out.append((0, i))
        elif k == ell:
            out.append((max(j, 0), i))
        else:
            out.append((0, j - 1))
    return out


def _prune_blocks(rule: Rule, ridx: int, src_idx: int, atom: Atom, partial: Relation,
                  candidates: list[Block], store: BlockStore, db: EdbStore,
                  opts: MaterializeOptions, dynamic_enabled: bool, stats: StatsReport
                  ) -> tuple[list[Block], bool]:
    """Optimization filter for one body position; returns (kept, any dynamic drop)."""
    kept: list[Block] = []
    dynamic_dropped = False
    lookup = store.make_lookup(db)
    applied_since_cache: dict[int, list[Rule]] = {}

    def applied_since(step: int) -> list[Rule]:
        rules = applied_since_cache.get(step)
        if rules is None:
            seen: set[int] = set()
            for s, r in store.applied_log:
                if s > step:
                    seen.add(r)
            rules = [store.program.rules[r] for r in seen]
            applied_since_cache[step] = rules
        return rules

    for block in candidates:
        producer = store.program.rules[block.rule_index]
        ctx = PruneContext(
            rule=rule,
            body_index=src_idx,
            atom=atom,
            partial=partial,
            block_rule=producer,
            lookup=lookup,
            limit=opts.dyn_check_limit,
        )
        if opts.enable_mr:
            if prune_mismatch(ctx, dynamic=False):
                stats.incr("opt.mr.blocks_pruned")
                continue
            if dynamic_enabled and prune_mismatch(ctx, dynamic=True):
                stats.incr("opt.mr.blocks_pruned")
                dynamic_dropped = True
                continue
        if opts.enable_rr:
            if prune_redundant(ctx, dynamic=False):
                stats.incr("opt.rr.blocks_pruned")
                continue
            if dynamic_enabled and prune_redundant(ctx, dynamic=True):
                stats.incr("opt.rr.blocks_pruned")
                dynamic_dropped = True
                continue
        if opts.enable_sub and prune_subsumed_static(
            rule, src_idx, producer, applied_since(block.step)
        ):
            stats.incr("opt.sub.blocks_pruned")
            continue
        kept.append(block)
    return kept, dynamic_dropped


def _atom_relation(atom: Atom, blocks: list[Block], join_vars: list[str],
                   extra_vars: list[str], mode: str,
                   stats: StatsReport) -> Relation:
    """Consolidate block projections into a relation over the atom's variables.

    Constant and repeated-variable positions are included in the consolidated
    projection, used to select matching rows, then dropped.
    """
    first_pos: dict[str, int] = {}
    dup_pairs: list[tuple[int, int]] = []
    const_pos: list[tuple[int, int]] = []
    for i, t in enumerate(atom.terms):
        if isinstance(t, Const):
            const_pos.append((i, t.cid))
        elif t.name in first_pos:
            dup_pairs.append((i, first_pos[t.name]))
        else:
            first_pos[t.name] = i

    out_vars = list(join_vars) + list(extra_vars)
    needed = [first_pos[v] for v in out_vars]
    filter_cols = [i for i, _ in const_pos]
    for i, fp in dup_pairs:
        filter_cols.append(i)
        if fp not in needed and fp not in filter_cols:
            filter_cols.append(fp)  # dead variable still constrains via its dup
    needed_all = tuple(needed + filter_cols)
    key_cols = tuple(range(len(join_vars)))

    concat = C.concat_blocks(
        [b.table for b in blocks],
        needed_all,
        mode=mode,
        key_cols=key_cols if mode == "hashed" and join_vars else None,
    )
    if concat.zero_copy:
        stats.incr("concat.zero_copy")
    elif mode == "sorted":
        stats.incr("concat.sorted_builds")
    else:
        stats.incr("concat.hashed_builds")

    matrix = concat.matrix
    pos_in_needed = {p: ix for ix, p in enumerate(needed_all)}
    if filter_cols:
        mask = np.ones(matrix.shape[0], dtype=bool)
        for i, cid in const_pos:
            mask &= matrix[:, pos_in_needed[i]] == cid
        for i, fp in dup_pairs:
            mask &= matrix[:, pos_in_needed[i]] == matrix[:, pos_in_needed[fp]]
        matrix = matrix[mask]
    matrix = matrix[:, : len(out_vars)]
    sorted_by = tuple(out_vars) if concat.is_sorted else ()
    return Relation.from_matrix(out_vars, matrix, sorted_by)


def _unique_relation(rel: Relation) -> Relation:
    matrix = sorted_unique_rows(rel.to_matrix())
    return Relation.from_matrix(rel.attrs, matrix, rel.attrs)


def _eval_variant(rule: Rule, ridx: int, ranges: list[tuple[int, int]],
                  r_edb: Relation, idb: list[tuple[int, Atom]],
                  store: BlockStore, db: EdbStore, opts: MaterializeOptions,
                  accs: list[_DeltaAccumulator], dynamic_enabled: bool,
                  stats: StatsReport) -> bool:
    """Evaluate one delta-restricted variant, feeding head rows into ``accs``.

    Returns True when any dynamic pruning decision was taken.
    """
    m = len(idb)
    head_vars = set(rule.head.vars())
    project = _head_projector(rule.head)
    any_dynamic = False

    def feed(chunk: Relation) -> None:
        store.check_deadline()
        cols, n = project(chunk)
        for acc in accs:
            acc.add_cols(cols, n)

    R = r_edb
    for k in range(m):
        store.check_deadline()
        src_idx, atom = idb[k]
        lo, hi = ranges[k]
        candidates = store.delta_range(atom.pred.name, lo, hi) if lo <= hi else []
        if not candidates or R.nrows == 0:
            return any_dynamic
        kept, dyn = _prune_blocks(
            rule, ridx, src_idx, atom, R, candidates, store, db, opts,
            dynamic_enabled, stats,
        )
        any_dynamic |= dyn
        if not kept:
            return any_dynamic
        stats.incr(f"rule.{ridx}.blocks_joined", len(kept))

        live = set(head_vars)
        for _, later in idb[k + 1:]:
            live.update(later.vars())
        join_vars = [v for v in atom.vars() if v in R.attrs]
        extra_vars = [v for v in atom.vars() if v not in R.attrs and v in live]

        use_hash = (
            R.nrows < opts.hash_left_max
            or len(kept) > opts.sorted_concat_max_blocks
        )
        mode = "hashed" if (use_hash and join_vars) else "sorted"
        rel = _atom_relation(atom, kept, join_vars, extra_vars, mode, stats)

        last = k == m - 1

        if not R.attrs and R.nrows == 1:
            # joining with the unit relation is the identity
            if last:
                for start in range(0, rel.nrows, opts.chunk_rows):
                    feed(rel.take(np.arange(start, min(start + opts.chunk_rows, rel.nrows))))
                return any_dynamic
            R = rel
            continue

        sink = feed if last else None
        keep_attrs = head_vars if last else (live | set(join_vars))
        natural = len(join_vars) + sum(a not in join_vars for a in R.attrs) \
            + sum(a not in join_vars for a in rel.attrs)
        if use_hash or not join_vars:
            result = hash_join(R, rel, join_vars, sink=sink,
                               batch_rows=opts.chunk_rows, keep=keep_attrs)
        else:
            left = sort_relation(R, join_vars)
            right = (
                rel
                if rel.sorted_by[: len(join_vars)] == tuple(join_vars)
                else sort_relation(rel, join_vars)
            )
            result = merge_join(left, right, join_vars, sink=sink,
                                batch_rows=opts.chunk_rows, keep=keep_attrs)
        if last:
            return any_dynamic

        if len(result.attrs) < natural:
            R = _unique_relation(result)  # dropped columns may leave duplicates
        else:
            R = result

    return any_dynamic


def _shared_copy_candidate(rule: Rule, idb: list[tuple[int, Atom]],
                           kept_blocks: list[Block]) -> SortedTable | None:
    """The single source table when the rule is a plain column copy."""
    if len(idb) != 1 or rule.edb_atoms() or len(kept_blocks) != 1:
        return None
    _, atom = idb[0]
    if rule.head.terms != atom.terms:
        return None
    if any(not isinstance(t, Var) for t in atom.terms):
        return None
    if len(atom.vars()) != len(atom.terms):
        return None
    return kept_blocks[0].table


def _proxy_hint(rule: Rule, r_edb: Relation, delta: np.ndarray,
                db: EdbStore) -> tuple[Atom, list[int | None]] | None:
    """Proxy encoding applies when the new block mirrors one base-fact scan."""
    edb_atoms = rule.edb_atoms()
    if len(edb_atoms) != 1 or delta.shape[0] != r_edb.nrows:
        return None
    _, atom = edb_atoms[0]
    scan_vars = list(atom.vars())
    head_vars = [t.name for t in rule.head.terms if isinstance(t, Var)]
    if head_vars != scan_vars:
        return None
    mapping: list[int | None] = []
    for t in rule.head.terms:
        mapping.append(None if isinstance(t, Const) else scan_vars.index(t.name))
    return (atom, mapping)


def _encode_block_table(delta: np.ndarray, rule: Rule, hints: _EncodeHints,
                        db: EdbStore, stats: StatsReport) -> SortedTable:
    n, arity = delta.shape
    if hints.proxy is not None:
        atom, mapping = hints.proxy
        cols: list = []
        for pos, var_index in enumerate(mapping):
            if var_index is None:
                term = rule.head.terms[pos]
                cols.append(ConstantColumn(term.cid, n))
                stats.incr("columns.constant_installed")
            else:
                cols.append(EdbProxyColumn(db, atom, var_index, n))
                stats.incr("columns.edb_proxy_installed")
        return SortedTable(cols, n, arity)
    if hints.shared is not None and hints.shared.nrows == n:
        stats.incr("columns.shared_installed", arity)
        table = SortedTable([SharedColumn(c) for c in hints.shared.columns], n, arity)
        return table
    table = encode_sorted_matrix(delta)
    stats.incr(
        "columns.constant_installed",
        sum(isinstance(c, ConstantColumn) for c in table.columns),
    )
    return table


def apply_rule(rule: Rule, step: int, j: int, store: BlockStore, db: EdbStore,
               opts: MaterializeOptions) -> Block | None:
    """Evaluate one rule at ``step`` given its last application step ``j``
    (0 when never applied) and return the block of new facts, or None.

    The result equals the union of the rule's delta-restricted variants with
    every fact already derived for the head predicate subtracted.
    """
    assert j < step, "a rule cannot be applied twice in one step"
    stats = opts.stats if opts.stats is not None else StatsReport()
    if opts.stats is None:
        opts.stats = stats
    ridx = store.rule_index(rule)
    stats.incr(f"rule.{ridx}.applications")
    started = time.perf_counter()
    try:
        delta, hints = _evaluate_rule(rule, ridx, step, j, store, db, opts)
    finally:
        stats.incr(f"rule.{ridx}.time_ms", (time.perf_counter() - started) * 1000.0)
    if delta is None or delta.shape[0] == 0:
        return None
    table = _encode_block_table(delta, rule, hints, db, stats)
    return Block(step, ridx, table, rule.head.pred.name)


def _evaluate_rule(rule: Rule, ridx: int, step: int, j: int, store: BlockStore,
                   db: EdbStore, opts: MaterializeOptions
                   ) -> tuple[np.ndarray | None, _EncodeHints]:
    stats = opts.stats
    hints = _EncodeHints()
    idb = rule.idb_atoms()
    m = len(idb)

    if m == 0:
        if j > 0:
            return None, hints  # base facts cannot change during a run
        r_edb = db.join_edb(a for _, a in rule.edb_atoms())
        if r_edb.nrows == 0:
            return None, hints
        acc = store.make_accumulator(rule.head.pred.name, opts)
        stats.incr(f"rule.{ridx}.sne_variants")
        cols, n = _head_projector(rule.head)(r_edb)
        acc.add_cols(cols, n)
        delta = acc.finalize()
        stats.incr("dedup.rows_before", acc.produced)
        stats.incr("dedup.rows_after", delta.shape[0])
        stats.incr("dedup.rows_removed", acc.produced - delta.shape[0])
        hints.proxy = _proxy_hint(rule, r_edb, delta, db)
        return delta, hints

    r_edb = db.join_edb(a for _, a in rule.edb_atoms())
    if r_edb.nrows == 0:
        return None, hints

    i = step - 1
    acc = store.make_accumulator(rule.head.pred.name, opts)
    shared_source: SortedTable | None = None
    for ell in range(1, m + 1):
        store.check_deadline()
        stats.incr(f"rule.{ridx}.sne_variants")
        ranges = _variant_ranges(m, ell, i, j)
        if any(
            not store.delta_range(idb[k][1].pred.name, lo, hi)
            for k, (lo, hi) in enumerate(ranges)
        ):
            continue
        if m == 1:
            lo, hi = ranges[0]
            kept = store.delta_range(idb[0][1].pred.name, lo, hi)
            shared_source = _shared_copy_candidate(rule, idb, kept)
        if opts.debug_validate:
            scratch_a = store.make_accumulator(rule.head.pred.name, opts)
            dyn = _eval_variant(rule, ridx, ranges, r_edb, idb, store, db, opts,
                                [acc, scratch_a], dynamic_enabled=True, stats=stats)
            if dyn:
                scratch_b = store.make_accumulator(rule.head.pred.name, opts)
                _eval_variant(rule, ridx, ranges, r_edb, idb, store, db, opts,
                              [scratch_b], dynamic_enabled=False, stats=StatsReport())
                got = {tuple(r) for r in scratch_a.finalize().tolist()}
                want = {tuple(r) for r in scratch_b.finalize().tolist()}
                if got != want:
                    raise AssertionError(
                        f"dynamic pruning lost inferences for rule {ridx}: "
                        f"missing {sorted(want - got)[:5]}"
                    )
        else:
            _eval_variant(rule, ridx, ranges, r_edb, idb, store, db, opts,
                          [acc], dynamic_enabled=True, stats=stats)

    delta = acc.finalize()
    stats.incr("dedup.rows_before", acc.produced)
    stats.incr("dedup.rows_after", delta.shape[0])
    stats.incr("dedup.rows_removed", acc.produced - delta.shape[0])
    if shared_source is not None:
        hints.shared = shared_source
    return delta, hints


# ---------------------------------------------------------------------------
# The materialization loop
# ---------------------------------------------------------------------------


def materialize(program: Program, db: EdbStore, opts: MaterializeOptions | None = None
                ) -> tuple[BlockStore, StatsReport]:
    """Compute the least fixpoint of the program over the base facts.

    Rules are applied one per step under a fair schedule (strict round-robin
    by default, a seeded per-sweep permutation with ``schedule_seed``). The
    run terminates when every rule has been applied since the last new fact.
    On timeout or step-cap the partial store is returned with
    ``completed == False`` and the stats flag ``run.timed_out`` or
    ``run.step_capped`` set.
    """
    opts = opts if opts is not None else MaterializeOptions()
    stats = opts.stats if opts.stats is not None else StatsReport()
    opts.stats = stats
    started = time.monotonic()

    if opts.enable_memo:
        from .memo import memoize

        plan = memoize(program, db, opts.memo_timeout_ms)
        program = plan.program
        stats.incr("memo.atoms_attempted", plan.attempted)
        stats.incr("memo.atoms_memoized", plan.memoized)
        stats.incr("memo.time_ms", plan.elapsed_ms)

    store = BlockStore(program, db.dictionary)
    if opts.timeout_ms is not None:
        store.deadline = started + opts.timeout_ms / 1000.0

    rules = program.rules
    if rules:
        rng = random.Random(opts.schedule_seed) if opts.schedule_seed is not None else None
        queue: deque[int] = deque()
        applied_since_new: set[int] = set()
        try:
            while len(applied_since_new) < len(rules):
                store.check_deadline()
                if opts.max_steps is not None and store.step >= opts.max_steps:
                    stats.put("run.step_capped", 1)
                    break
                if not queue:
                    order = list(range(len(rules)))
                    if rng is not None:
                        rng.shuffle(order)
                    queue.extend(order)
                ridx = queue.popleft()
                store.step += 1
                j = store.last_applied.get(ridx, 0)
                block = apply_rule(rules[ridx], store.step, j, store, db, opts)
                store.record_application(ridx, store.step)
                if block is not None:
                    store.add_block(block)
                    stats.incr("blocks.total_created")
                    applied_since_new = set()
                else:
                    applied_since_new.add(ridx)
            else:
                store.completed = True
        except _Timeout:
            stats.put("run.timed_out", 1)
    else:
        store.completed = True

    stats.put("run.steps", store.step)
    stats.put("run.total_ms", (time.monotonic() - started) * 1000.0)
    stats.put("blocks.peak_count", sum(len(b) for b in store._blocks.values()))
    for pred in store._blocks:
        stats.put(f"facts.{pred}.count", store.fact_count(pred))
    return store, stats


def export_facts(store: BlockStore, dictionary, sink) -> int:
    """Write all derived facts as TSV, globally sorted per predicate.

    Output is deterministic: predicates appear in program registration order,
    rows in the id-lexicographic order of the store.
    """
    count = 0
    for name, pred in store.program.predicates.items():
        if not pred.is_idb:
            continue
        matrix = store.known_matrix(name)
        for row in matrix.tolist():
            sink.write(name + "\t" + "\t".join(dictionary.lookup(v) for v in row) + "\n")
            count += 1
    return count
