"""Columnar sorted tables, RLE compression, and relation joins.

Tables are immutable once built: rows are strictly lexicographically sorted
and duplicate-free, and every column is stored either run-length encoded, as
a constant, as a reference to another table's column, or as a query against
the base-fact store. Relations are the transient, attribute-named tuple sets
that flow through rule evaluation; joins are vectorized over int64 numpy
columns and can stream their output in chunks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

INT = np.int64


def _as_column(values) -> np.ndarray:
    arr = np.asarray(values, dtype=INT)
    if arr.ndim != 1:
        raise ValueError("column values must be one-dimensional")
    return arr


def _as_matrix(rows, arity: int | None = None) -> np.ndarray:
    """Rows (iterable of tuples or ndarray) to an (n, arity) int64 matrix."""
    if isinstance(rows, np.ndarray):
        m = rows.astype(INT, copy=False)
        if m.ndim != 2:
            raise ValueError("row matrix must be two-dimensional")
        return m
    rows = list(rows)
    if not rows:
        return np.empty((0, arity or 0), dtype=INT)
    return np.asarray(rows, dtype=INT).reshape(len(rows), -1)


# ---------------------------------------------------------------------------
# Row <-> integer key codec
# ---------------------------------------------------------------------------


class RowCodec:
    """Packs fixed-arity non-negative id rows into single int64 keys.

    Packing preserves lexicographic order. ``packable`` is False when the
    required bits exceed 63; callers must then use the tuple-based fallbacks.
    """

    def __init__(self, arity: int, bits: int):
        self.arity = arity
        self.bits = bits
        self.packable = arity * bits <= 63
        self.keyspace = (1 << (arity * bits)) if self.packable else 0

    @classmethod
    def for_max_id(cls, max_id: int, arity: int) -> "RowCodec":
        bits = max(1, int(max_id).bit_length())
        return cls(arity, bits)

    def pack(self, matrix: np.ndarray) -> np.ndarray:
        if not self.packable:
            raise ValueError("rows are not packable with this codec")
        return self.pack_cols([matrix[:, c] for c in range(self.arity)], matrix.shape[0])

    def pack_cols(self, cols: Sequence[np.ndarray], nrows: int) -> np.ndarray:
        if not self.packable:
            raise ValueError("rows are not packable with this codec")
        if not cols:
            return np.zeros(nrows, dtype=INT)
        keys = cols[0].astype(INT, copy=True)
        for col in cols[1:]:
            keys <<= self.bits
            keys |= col
        return keys

    def unpack(self, keys: np.ndarray) -> np.ndarray:
        mask = (1 << self.bits) - 1
        out = np.empty((len(keys), self.arity), dtype=INT)
        for c in range(self.arity - 1, -1, -1):
            out[:, c] = keys & mask
            keys = keys >> self.bits
        return out


def _data_codec(*matrices: np.ndarray) -> RowCodec | None:
    """Codec sized from actual data, shared across the given matrices."""
    arity = matrices[0].shape[1]
    max_id = 0
    for m in matrices:
        if m.shape[1] != arity:
            raise ValueError("matrices disagree on arity")
        if m.size:
            max_id = max(max_id, int(m.max()))
    codec = RowCodec.for_max_id(max_id, arity)
    return codec if codec.packable else None


def sorted_unique_rows(matrix: np.ndarray) -> np.ndarray:
    """Rows sorted lexicographically with duplicates removed."""
    if matrix.shape[0] <= 1:
        return matrix.copy()
    if matrix.shape[1] == 0:
        return matrix[:1].copy()
    codec = _data_codec(matrix)
    if codec is not None:
        return codec.unpack(np.unique(codec.pack(matrix)))
    order = np.lexsort(matrix.T[::-1])
    m = matrix[order]
    keep = np.ones(len(m), dtype=bool)
    keep[1:] = (m[1:] != m[:-1]).any(axis=1)
    return m[keep]


def rows_isin(matrix: np.ndarray, others: np.ndarray) -> np.ndarray:
    """Boolean mask: which rows of ``matrix`` occur in ``others``."""
    if matrix.shape[0] == 0 or others.shape[0] == 0:
        return np.zeros(matrix.shape[0], dtype=bool)
    if matrix.shape[1] == 0:
        return np.ones(matrix.shape[0], dtype=bool)
    codec = _data_codec(matrix, others)
    if codec is not None:
        hay = np.unique(codec.pack(others))
        keys = codec.pack(matrix)
        idx = np.searchsorted(hay, keys)
        idx[idx == len(hay)] = 0
        return hay[idx] == keys
    have = {tuple(r) for r in others.tolist()}
    return np.fromiter((tuple(r) in have for r in matrix.tolist()), dtype=bool, count=len(matrix))


def lex_argsort(matrix: np.ndarray) -> np.ndarray:
    if matrix.shape[1] == 0:
        return np.arange(matrix.shape[0])
    codec = _data_codec(matrix)
    if codec is not None:
        return np.argsort(codec.pack(matrix), kind="stable")
    return np.lexsort(matrix.T[::-1])


# ---------------------------------------------------------------------------
# Columns
# ---------------------------------------------------------------------------


def rle_encode(values) -> "RleColumn":
    """Maximal-run RLE: adjacent runs always carry distinct values."""
    arr = _as_column(values)
    if len(arr) == 0:
        return RleColumn(np.empty(0, dtype=INT), np.empty(0, dtype=INT))
    boundaries = np.flatnonzero(arr[1:] != arr[:-1])
    starts = np.concatenate(([0], boundaries + 1))
    ends = np.concatenate((boundaries + 1, [len(arr)]))
    return RleColumn(arr[starts], (ends - starts).astype(INT))


def rle_decode(column: "Column") -> np.ndarray:
    return column.values()


class Column:
    """Read-only view of one table column."""

    nrows: int

    def values(self) -> np.ndarray:
        raise NotImplementedError

    def pairs(self) -> list[tuple[int, int]]:
        """(value, run length) pairs of the maximal-run encoding."""
        return rle_encode(self.values()).pairs()

    def storage_cells(self) -> int:
        """Number of stored scalar cells, excluding O(1) bookkeeping."""
        raise NotImplementedError

    def __len__(self) -> int:
        return self.nrows


class RleColumn(Column):
    def __init__(self, run_values: np.ndarray, run_lengths: np.ndarray):
        self.run_values = _as_column(run_values)
        self.run_lengths = _as_column(run_lengths)
        self.nrows = int(self.run_lengths.sum()) if len(self.run_lengths) else 0

    def values(self) -> np.ndarray:
        return np.repeat(self.run_values, self.run_lengths)

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(v), int(n)) for v, n in zip(self.run_values, self.run_lengths)]

    def storage_cells(self) -> int:
        return 2 * len(self.run_values)


class ConstantColumn(Column):
    """Single repeated value; storage does not grow with the row count."""

    def __init__(self, value: int, nrows: int):
        self.value = int(value)
        self.nrows = nrows

    def values(self) -> np.ndarray:
        return np.full(self.nrows, self.value, dtype=INT)

    def pairs(self) -> list[tuple[int, int]]:
        return [(self.value, self.nrows)] if self.nrows else []

    def storage_cells(self) -> int:
        return 2


class SharedColumn(Column):
    """Reference to a column owned by another table."""

    def __init__(self, source: Column):
        while isinstance(source, SharedColumn):
            source = source.source
        self.source = source
        self.nrows = source.nrows

    def values(self) -> np.ndarray:
        return self.source.values()

    def pairs(self) -> list[tuple[int, int]]:
        return self.source.pairs()

    def storage_cells(self) -> int:
        return 1


class EdbProxyColumn(Column):
    """Column whose values are re-read from a base-fact scan on demand.

    ``store.scan(pattern)`` must be deterministic; ``var_index`` selects the
    scan output column this proxy stands for.
    """

    def __init__(self, store, pattern, var_index: int, nrows: int):
        self.store = store
        self.pattern = pattern
        self.var_index = var_index
        self.nrows = nrows

    def values(self) -> np.ndarray:
        rows = self.store.scan(self.pattern)
        out = np.fromiter((r[self.var_index] for r in rows), dtype=INT, count=len(rows))
        if len(out) != self.nrows:
            raise RuntimeError("base-fact store changed under a proxy column")
        return out

    def storage_cells(self) -> int:
        return 2


# ---------------------------------------------------------------------------
# Sorted tables
# ---------------------------------------------------------------------------


class SortedTable:
    """Immutable table: rows strictly lex-sorted and duplicate-free."""

    def __init__(self, columns: Sequence[Column], nrows: int, arity: int | None = None):
        self.columns = tuple(columns)
        self.nrows = nrows
        self.arity = len(self.columns) if arity is None else arity
        for col in self.columns:
            if col.nrows != nrows:
                raise ValueError("columns disagree on row count")
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return self.nrows

    def to_matrix(self) -> np.ndarray:
        if self._matrix is None:
            if self.arity == 0:
                self._matrix = np.empty((self.nrows, 0), dtype=INT)
            else:
                self._matrix = np.column_stack([c.values() for c in self.columns])
        return self._matrix

    def to_rows(self) -> list[tuple[int, ...]]:
        return [tuple(r) for r in self.to_matrix().tolist()]

    def row(self, i: int) -> tuple[int, ...]:
        return tuple(int(c.values()[i]) for c in self.columns)

    def storage_cells(self) -> int:
        return sum(c.storage_cells() for c in self.columns)

    def dump(self, sink) -> None:
        """Debug format: header ``arity rowcount``, then ids space-separated."""
        sink.write(f"{self.arity} {self.nrows}\n")
        for row in self.to_rows():
            sink.write(" ".join(str(v) for v in row) + "\n")


def encode_sorted_matrix(matrix: np.ndarray) -> SortedTable:
    """Encode an already sorted, duplicate-free matrix (constant or RLE)."""
    n, arity = matrix.shape
    columns: list[Column] = []
    for c in range(arity):
        col = matrix[:, c]
        if n and (col == col[0]).all():
            columns.append(ConstantColumn(int(col[0]), n))
        else:
            columns.append(rle_encode(col))
    table = SortedTable(columns, n, arity)
    table._matrix = np.ascontiguousarray(matrix)
    return table


def build_table(rows, arity: int | None = None) -> SortedTable:
    """Sort, deduplicate, and encode a row multiset into a table."""
    matrix = _as_matrix(rows, arity)
    if arity is not None and matrix.shape[0] and matrix.shape[1] != arity:
        raise ValueError(f"rows have arity {matrix.shape[1]}, expected {arity}")
    return encode_sorted_matrix(sorted_unique_rows(matrix))


def dedup_subtract(tmp: SortedTable, history: Sequence[SortedTable]) -> SortedTable:
    """Rows of ``tmp`` that occur in no history table, as a sorted table."""
    matrix = tmp.to_matrix()
    keep = np.ones(len(matrix), dtype=bool)
    for table in history:
        if table.nrows == 0 or not keep.any():
            continue
        keep &= ~rows_isin(matrix, table.to_matrix())
    return encode_sorted_matrix(matrix[keep])


# ---------------------------------------------------------------------------
# Relations
# ---------------------------------------------------------------------------


@dataclass
class Relation:
    """Transient tuple set with named attributes backed by int64 columns.

    ``sorted_by`` names a prefix of attributes the rows are known to be
    lexicographically sorted on (empty when unknown). The unit relation has
    no attributes and exactly one row.
    """

    attrs: tuple[str, ...]
    cols: tuple[np.ndarray, ...]
    nrows: int
    sorted_by: tuple[str, ...] = ()

    @classmethod
    def from_matrix(cls, attrs: Sequence[str], matrix: np.ndarray,
                    sorted_by: Sequence[str] = ()) -> "Relation":
        attrs = tuple(attrs)
        return cls(attrs, tuple(matrix[:, i] for i in range(len(attrs))),
                   matrix.shape[0], tuple(sorted_by))

    @classmethod
    def from_rows(cls, attrs: Sequence[str], rows: Iterable[tuple[int, ...]]) -> "Relation":
        attrs = tuple(attrs)
        return cls.from_matrix(attrs, _as_matrix(rows, len(attrs)))

    @classmethod
    def unit(cls) -> "Relation":
        return cls((), (), 1)

    @classmethod
    def empty(cls, attrs: Sequence[str] = ()) -> "Relation":
        attrs = tuple(attrs)
        return cls(attrs, tuple(np.empty(0, dtype=INT) for _ in attrs), 0, attrs)

    def col(self, attr: str) -> np.ndarray:
        return self.cols[self.attrs.index(attr)]

    def to_matrix(self) -> np.ndarray:
        if not self.attrs:
            return np.empty((self.nrows, 0), dtype=INT)
        return np.column_stack(self.cols)

    def to_rows(self) -> set[tuple[int, ...]]:
        return {tuple(r) for r in self.to_matrix().tolist()}

    def take(self, indices: np.ndarray, sorted_by: Sequence[str] = ()) -> "Relation":
        return Relation(self.attrs, tuple(c[indices] for c in self.cols),
                        len(indices), tuple(sorted_by))


def sort_relation(rel: Relation, on: Sequence[str]) -> Relation:
    """Rows reordered so the relation is sorted on the given attribute prefix."""
    on = tuple(on)
    if rel.sorted_by[: len(on)] == on or rel.nrows <= 1:
        return Relation(rel.attrs, rel.cols, rel.nrows, on)
    key = np.column_stack([rel.col(a) for a in on]) if on else np.empty((rel.nrows, 0), dtype=INT)
    return rel.take(lex_argsort(key), sorted_by=on)


def _is_sorted_on(rel: Relation, on: Sequence[str]) -> bool:
    if rel.nrows <= 1:
        return True
    keys = [rel.col(a) for a in on]
    if not keys:
        return True
    strictly_after = np.zeros(rel.nrows - 1, dtype=bool)
    tied = np.ones(rel.nrows - 1, dtype=bool)
    for col in keys:
        strictly_after |= tied & (col[1:] > col[:-1])
        tied &= col[1:] == col[:-1]
    return bool((strictly_after | tied).all())


def _group_slices(cols: Sequence[np.ndarray], nrows: int) -> np.ndarray:
    """Start offsets of equal-key groups in sorted key columns (ends with n)."""
    if nrows == 0:
        return np.zeros(1, dtype=np.int64)
    if not cols:
        return np.array([0, nrows], dtype=np.int64)
    change = np.zeros(nrows - 1, dtype=bool)
    for col in cols:
        change |= col[1:] != col[:-1]
    starts = np.flatnonzero(change) + 1
    return np.concatenate(([0], starts, [nrows]))


class _ProductBatcher:
    """Streams group cross products as value columns, flushed in batches.

    Left-side output columns repeat their group slice per right row; right
    columns tile theirs per left row, so no row-index arrays or gathers are
    needed on the witness-scale path.
    """

    def __init__(self, attrs: tuple[str, ...],
                 sources: list[tuple[str, np.ndarray]],
                 emit: Callable[[Relation], None], batch_rows: int,
                 sorted_by: tuple[str, ...]):
        self.attrs = attrs
        self.sources = sources  # ("l" | "r", value array) per output attr
        self.emit = emit
        self.batch_rows = batch_rows
        self.sorted_by = sorted_by
        self._bufs: list[list[np.ndarray]] = [[] for _ in sources]
        self._pending = 0

    def add_product(self, l0: int, l1: int, r0: int, r1: int) -> None:
        l0, l1, r0, r1 = int(l0), int(l1), int(r0), int(r1)
        nr = r1 - r0
        step = max(1, self.batch_rows // max(nr, 1))
        for s0 in range(l0, l1, step):
            s1 = min(s0 + step, l1)
            nl = s1 - s0
            for buf, (side, col) in zip(self._bufs, self.sources):
                if side == "l":
                    buf.append(np.repeat(col[s0:s1], nr))
                else:
                    buf.append(np.tile(col[r0:r1], nl))
            self._pending += nl * nr
            if self._pending >= self.batch_rows:
                self.flush()

    def flush(self) -> None:
        if not self._pending:
            return
        cols = tuple(np.concatenate(b) for b in self._bufs)
        self.emit(Relation(self.attrs, cols, self._pending, self.sorted_by))
        self._bufs = [[] for _ in self.sources]
        self._pending = 0


def _join_plan(left: Relation, right: Relation, on: tuple[str, ...],
               keep: "set[str] | None") -> tuple[tuple[str, ...], list[tuple[str, np.ndarray]]]:
    attrs: list[str] = []
    sources: list[tuple[str, np.ndarray]] = []
    for a in on:
        if keep is None or a in keep:
            attrs.append(a)
            sources.append(("l", left.col(a)))
    for a, c in zip(left.attrs, left.cols):
        if a not in on and (keep is None or a in keep):
            attrs.append(a)
            sources.append(("l", c))
    for a, c in zip(right.attrs, right.cols):
        if a not in on and (keep is None or a in keep):
            attrs.append(a)
            sources.append(("r", c))
    return tuple(attrs), sources


def _run_join(left: Relation, right: Relation, on: tuple[str, ...],
              pair_source: Callable[[_ProductBatcher], None],
              sink, batch_rows: int, sorted_by: tuple[str, ...],
              keep: "set[str] | None") -> Relation | None:
    attrs, sources = _join_plan(left, right, on, keep)
    chunks: list[Relation] = []
    emit = sink if sink is not None else chunks.append
    batcher = _ProductBatcher(attrs, sources, emit, batch_rows, sorted_by)
    pair_source(batcher)
    batcher.flush()
    if sink is not None:
        return None
    if not chunks:
        return Relation.empty(attrs)
    if len(chunks) == 1:
        return chunks[0]
    cols = tuple(
        np.concatenate([c.cols[i] for c in chunks]) for i in range(len(attrs))
    )
    return Relation(attrs, cols, sum(c.nrows for c in chunks), sorted_by)


def merge_join(left: Relation, right: Relation, on: Sequence[str],
               sink=None, batch_rows: int = 1 << 19,
               keep: "set[str] | None" = None) -> Relation | None:
    """Single-pass join of two relations sorted on the shared attributes.

    Emits per-group cross products; output is sorted on ``on``. When ``sink``
    is given, output chunks are streamed to it and None is returned. ``keep``
    restricts which output attributes are materialized.
    """
    on = tuple(on)
    assert _is_sorted_on(left, on), "merge_join: left input not sorted on join keys"
    assert _is_sorted_on(right, on), "merge_join: right input not sorted on join keys"
    lkeys = [left.col(a) for a in on]
    rkeys = [right.col(a) for a in on]
    lb = _group_slices(lkeys, left.nrows)
    rb = _group_slices(rkeys, right.nrows)
    # sortedness survives only through the leading kept join attributes
    prefix: list[str] = []
    for a in on:
        if keep is not None and a not in keep:
            break
        prefix.append(a)
    sorted_by = tuple(prefix)

    def pairs(batcher: _ProductBatcher) -> None:
        if left.nrows == 0 or right.nrows == 0:
            return
        i = j = 0
        nl, nr = len(lb) - 1, len(rb) - 1
        while i < nl and j < nr:
            lrow = tuple(int(k[lb[i]]) for k in lkeys)
            rrow = tuple(int(k[rb[j]]) for k in rkeys)
            if lrow < rrow:
                i += 1
            elif rrow < lrow:
                j += 1
            else:
                batcher.add_product(lb[i], lb[i + 1], rb[j], rb[j + 1])
                i += 1
                j += 1

    return _run_join(left, right, on, pairs, sink, batch_rows, sorted_by, keep)


def hash_join(left: Relation, right: Relation, on: Sequence[str],
              sink=None, batch_rows: int = 1 << 19,
              keep: "set[str] | None" = None) -> Relation | None:
    """Join without a sort precondition; same tuples as merge_join, any order.

    The right side is grouped into a key-indexed table and probed with the
    left side's groups.
    """
    on = tuple(on)
    if not on:
        def cross(batcher: _ProductBatcher) -> None:
            if left.nrows and right.nrows:
                batcher.add_product(0, left.nrows, 0, right.nrows)

        return _run_join(left, right, on, cross, sink, batch_rows, (), keep)

    def grouped(rel: Relation) -> tuple[Relation, np.ndarray, list[tuple[int, ...]]]:
        key = np.column_stack([rel.col(a) for a in on])
        order = lex_argsort(key)
        key = key[order]
        bounds = _group_slices([key[:, i] for i in range(key.shape[1])], rel.nrows)
        reps = [tuple(key[bounds[g]].tolist()) for g in range(len(bounds) - 1)]
        return rel.take(order), bounds, reps

    left_view, lb, lreps = grouped(left)
    right_view, rb, rreps = grouped(right)
    rindex = {rep: g for g, rep in enumerate(rreps)}

    def pairs(batcher: _ProductBatcher) -> None:
        if left.nrows == 0 or right.nrows == 0:
            return
        for g, rep in enumerate(lreps):
            h = rindex.get(rep)
            if h is None:
                continue
            batcher.add_product(lb[g], lb[g + 1], rb[h], rb[h + 1])

    return _run_join(left_view, right_view, on, pairs, sink, batch_rows, (), keep)


# ---------------------------------------------------------------------------
# On-demand block concatenation
# ---------------------------------------------------------------------------


@dataclass
class ConcatCounters:
    zero_copy: int = 0
    sorted_builds: int = 0
    hashed_builds: int = 0

    def reset(self) -> None:
        self.zero_copy = self.sorted_builds = self.hashed_builds = 0


concat_counters = ConcatCounters()


class ConcatenatedRelation:
    """Union of block projections consolidated for one join, then discarded.

    ``matrix`` holds the projected rows (duplicate-free). In sorted mode the
    rows are lexicographically ordered; in hashed mode ``hash_index`` maps
    key-column tuples to row index arrays. A single input block is passed
    through without copying (``zero_copy``); its rows materialize lazily.
    """

    def __init__(self, needed_cols: tuple[int, ...], mode: str):
        self.needed_cols = needed_cols
        self.mode = mode
        self.zero_copy = False
        self.is_sorted = False
        self.hash_index: dict[tuple[int, ...], np.ndarray] | None = None
        self._matrix: np.ndarray | None = None
        self._source: SortedTable | None = None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            assert self._source is not None
            full = self._source.to_matrix()
            self._matrix = full[:, list(self.needed_cols)]
        return self._matrix

    @property
    def nrows(self) -> int:
        if self._matrix is None and self._source is not None:
            return self._source.nrows
        return self.matrix.shape[0]


def _projection_preserves_order(table: SortedTable, needed: tuple[int, ...]) -> bool:
    """True when the projected rows are already lex-sorted (not nec. unique)."""
    effective = [i for i in range(table.arity) if not isinstance(table.columns[i], ConstantColumn)]
    wanted = [i for i in needed if i in effective]
    return wanted == effective[: len(wanted)]


def concat_blocks(blocks: Sequence[SortedTable], needed_cols: Sequence[int],
                  mode: str = "sorted",
                  key_cols: Sequence[int] | None = None) -> ConcatenatedRelation:
    """Consolidate block projections into one structure for a join.

    ``needed_cols`` are source column positions; ``key_cols`` (positions into
    ``needed_cols``) select the hash key in hashed mode, defaulting to all
    needed columns. With exactly one block the block's data is used directly
    (no consolidation buffer is built).
    """
    if mode not in ("sorted", "hashed"):
        raise ValueError(f"unknown concat mode {mode!r}")
    needed = tuple(needed_cols)
    out = ConcatenatedRelation(needed, mode)
    if not blocks:
        out._matrix = np.empty((0, len(needed)), dtype=INT)
        out.is_sorted = True
        if mode == "hashed":
            out.hash_index = {}
        return out

    if len(blocks) == 1:
        out.zero_copy = True
        out._source = blocks[0]
        out.is_sorted = _projection_preserves_order(blocks[0], needed)
        concat_counters.zero_copy += 1
        if mode == "hashed":
            out.hash_index = _build_hash_index(out.matrix, key_cols, needed)
            concat_counters.hashed_builds += 1
        return out

    stacked = np.concatenate([b.to_matrix()[:, list(needed)] for b in blocks])
    if mode == "sorted":
        out._matrix = sorted_unique_rows(stacked)
        out.is_sorted = True
        concat_counters.sorted_builds += 1
    else:
        out._matrix = sorted_unique_rows(stacked)
        out.is_sorted = True
        out.hash_index = _build_hash_index(out._matrix, key_cols, needed)
        concat_counters.hashed_builds += 1
    return out


def _build_hash_index(matrix: np.ndarray, key_cols: Sequence[int] | None,
                      needed: tuple[int, ...]) -> dict[tuple[int, ...], np.ndarray]:
    keys = tuple(range(len(needed))) if key_cols is None else tuple(key_cols)
    index: dict[tuple[int, ...], np.ndarray] = {}
    if matrix.shape[0] == 0:
        return index
    key_matrix = matrix[:, list(keys)]
    order = lex_argsort(key_matrix)
    key_sorted = key_matrix[order]
    bounds = _group_slices([key_sorted[:, i] for i in range(key_sorted.shape[1])],
                           matrix.shape[0])
    for g in range(len(bounds) - 1):
        rep = tuple(key_sorted[bounds[g]].tolist())
        index[rep] = order[bounds[g]: bounds[g + 1]]
    return index
