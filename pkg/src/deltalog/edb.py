"""Dictionary encoding and the indexed base-fact store.

The store keeps one duplicate-free tuple set per predicate plus sorted
permutation indexes: every ordering for arity <= 3 (six indexes in the
triple case), the cyclic rotations plus on-demand sorts beyond that. It is
read-only once loading finishes; concurrent scans are safe.
"""

from __future__ import annotations

import itertools
import pickle
import re
from bisect import bisect_left
from typing import IO, Iterable

from .columns import Relation, hash_join
from .errors import DataError, UnknownIdError, UnknownPredicateError
from .lang import Atom, Const, Var

_SNAPSHOT_MAGIC = "deltalog-edb-snapshot-v1"


class Dictionary:
    """Bijective string <-> id map; ids are dense in first-seen order."""

    def __init__(self) -> None:
        self._strings: list[str] = []
        self._ids: dict[str, int] = {}

    def intern(self, s: str) -> int:
        cid = self._ids.get(s)
        if cid is None:
            cid = len(self._strings)
            self._ids[s] = cid
            self._strings.append(s)
        return cid

    def lookup(self, cid: int) -> str:
        if 0 <= cid < len(self._strings):
            return self._strings[cid]
        raise UnknownIdError(f"id {cid} was never issued")

    def id_of(self, s: str) -> int | None:
        return self._ids.get(s)

    def __len__(self) -> int:
        return len(self._strings)

    def __contains__(self, s: str) -> bool:
        return s in self._ids


def _index_permutations(arity: int) -> list[tuple[int, ...]]:
    if arity <= 3:
        return list(itertools.permutations(range(arity)))
    return [tuple((i + r) % arity for i in range(arity)) for r in range(arity)]


class _PredFacts:
    __slots__ = ("arity", "tuples", "indexes")

    def __init__(self, arity: int):
        self.arity = arity
        self.tuples: set[tuple[int, ...]] = set()
        # permutation -> sorted list of permuted tuples, rebuilt lazily
        self.indexes: dict[tuple[int, ...], list[tuple[int, ...]] | None] = {
            p: None for p in _index_permutations(arity)
        }

    def add(self, row: tuple[int, ...]) -> bool:
        if row in self.tuples:
            return False
        self.tuples.add(row)
        for p in self.indexes:
            self.indexes[p] = None
        return True

    def index(self, perm: tuple[int, ...]) -> list[tuple[int, ...]]:
        lst = self.indexes.get(perm)
        if lst is None:
            lst = sorted(tuple(row[i] for i in perm) for row in self.tuples)
            if perm in self.indexes:
                self.indexes[perm] = lst
        return lst


_NT_TERM = re.compile(
    r"""\s*(?:(?P<iri><[^<>\s]*>)
         | (?P<blank>_:[A-Za-z0-9_]+)
         | (?P<lit>"(?:[^"\\]|\\.)*"(?:\^\^<[^<>\s]*>|@[A-Za-z0-9-]+)?))""",
    re.VERBOSE,
)


class EdbStore:
    """Base facts for EDB predicates, interned through one dictionary."""

    def __init__(self, dictionary: Dictionary | None = None):
        self.dictionary = dictionary if dictionary is not None else Dictionary()
        self._preds: dict[str, _PredFacts] = {}

    # -- loading ------------------------------------------------------------

    def add_fact(self, pred: str, row: tuple[int, ...]) -> bool:
        facts = self._preds.get(pred)
        if facts is None:
            facts = self._preds[pred] = _PredFacts(len(row))
        elif facts.arity != len(row):
            raise DataError(f"predicate {pred!r} has arity {facts.arity}, got {len(row)}")
        return facts.add(row)

    def ensure_predicate(self, pred: str, arity: int) -> None:
        """Register a (possibly empty) predicate so scans resolve to no rows."""
        facts = self._preds.get(pred)
        if facts is None:
            self._preds[pred] = _PredFacts(arity)
        elif facts.arity != arity:
            raise DataError(f"predicate {pred!r} has arity {facts.arity}, got {arity}")

    def add_named_fact(self, pred: str, terms: Iterable[str]) -> bool:
        return self.add_fact(pred, tuple(self.dictionary.intern(t) for t in terms))

    def load_facts(self, source: IO[str] | Iterable[str], fmt: str = "tsv",
                   idb: frozenset[str] | set[str] = frozenset(),
                   source_name: str = "") -> int:
        """Load facts from a TSV or N-Triples stream; returns the distinct
        fact count of the whole store afterwards."""
        if fmt == "tsv":
            self._load_tsv(source, idb, source_name)
        elif fmt in ("nt", "ntriples"):
            self._load_ntriples(source, idb, source_name)
        else:
            raise DataError(f"unknown format {fmt!r}", source=source_name)
        return self.fact_count()

    def _load_tsv(self, source, idb, source_name) -> None:
        for lineno, raw in enumerate(source, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                raise DataError("expected predicate and at least one term", lineno, source_name)
            pred = fields[0]
            if pred in idb:
                raise DataError(f"IDB predicate {pred!r} must not appear in data", lineno, source_name)
            try:
                self.add_named_fact(pred, fields[1:])
            except DataError as exc:
                raise DataError(str(exc), lineno, source_name) from None

    def _load_ntriples(self, source, idb, source_name) -> None:
        if "triple" in idb:
            raise DataError("IDB predicate 'triple' must not appear in data", source=source_name)
        for lineno, raw in enumerate(source, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            terms = []
            pos = 0
            for _ in range(3):
                m = _NT_TERM.match(line, pos)
                if m is None:
                    raise DataError("malformed N-Triples term", lineno, source_name)
                terms.append(m.group().strip())
                pos = m.end()
            if line[pos:].strip() != ".":
                raise DataError("N-Triples line must end with '.'", lineno, source_name)
            self.add_named_fact("triple", terms)

    # -- introspection -------------------------------------------------------

    def has_predicate(self, pred: str) -> bool:
        return pred in self._preds

    def arity(self, pred: str) -> int:
        facts = self._preds.get(pred)
        if facts is None:
            raise UnknownPredicateError(f"no facts for predicate {pred!r}")
        return facts.arity

    def predicates(self) -> list[str]:
        return list(self._preds)

    def fact_count(self) -> int:
        return sum(len(f.tuples) for f in self._preds.values())

    def tuples(self, pred: str) -> set[tuple[int, ...]]:
        facts = self._preds.get(pred)
        return set() if facts is None else set(facts.tuples)

    def index_tuples(self, pred: str, perm: tuple[int, ...]) -> list[tuple[int, ...]]:
        facts = self._preds.get(pred)
        if facts is None:
            raise UnknownPredicateError(f"no facts for predicate {pred!r}")
        return facts.index(perm)

    # -- queries ------------------------------------------------------------

    def scan(self, pattern: Atom) -> list[tuple[int, ...]]:
        """Matching tuples projected onto the pattern's distinct variables.

        Output rows are sorted lexicographically in the variables'
        first-occurrence order. Uses the permutation index whose prefix covers
        the constant positions when one exists, a filtered sort otherwise.
        """
        if pattern.pred.is_idb:
            raise UnknownPredicateError(
                f"predicate {pattern.pred.name!r} is IDB; base facts hold EDB only"
            )
        facts = self._preds.get(pattern.pred.name)
        if facts is None:
            return []
        if facts.arity != pattern.pred.arity:
            raise DataError(
                f"predicate {pattern.pred.name!r} has arity {facts.arity}, "
                f"pattern has {pattern.pred.arity}"
            )

        const_pos = [i for i, t in enumerate(pattern.terms) if isinstance(t, Const)]
        var_first: dict[str, int] = {}
        dup_pos: list[tuple[int, int]] = []
        for i, t in enumerate(pattern.terms):
            if isinstance(t, Var):
                if t.name in var_first:
                    dup_pos.append((i, var_first[t.name]))
                else:
                    var_first[t.name] = i
        var_pos = list(var_first.values())

        perm = self._pick_index(facts, const_pos, var_pos)
        if perm is not None:
            rows = self._scan_indexed(facts, perm, pattern, const_pos, var_pos, dup_pos)
        else:
            rows = self._scan_filtered(facts, pattern, const_pos, var_pos, dup_pos)
        return rows

    def _pick_index(self, facts, const_pos, var_pos):
        want_consts = set(const_pos)
        nc = len(const_pos)
        for perm in facts.indexes:
            if set(perm[:nc]) == want_consts and list(perm[nc: nc + len(var_pos)]) == var_pos:
                return perm
        return None

    def _scan_indexed(self, facts, perm, pattern, const_pos, var_pos, dup_pos):
        index = facts.index(perm)
        prefix = tuple(pattern.terms[i].cid for i in perm[: len(const_pos)])
        lo = bisect_left(index, prefix)
        hi = bisect_left(index, prefix[:-1] + (prefix[-1] + 1,)) if prefix else len(index)
        inv = {p: k for k, p in enumerate(perm)}
        out = []
        for permuted in index[lo:hi]:
            if dup_pos and any(permuted[inv[i]] != permuted[inv[j]] for i, j in dup_pos):
                continue
            out.append(tuple(permuted[inv[p]] for p in var_pos))
        return out

    def _scan_filtered(self, facts, pattern, const_pos, var_pos, dup_pos):
        out = []
        for row in facts.tuples:
            if any(row[i] != pattern.terms[i].cid for i in const_pos):
                continue
            if dup_pos and any(row[i] != row[j] for i, j in dup_pos):
                continue
            out.append(tuple(row[p] for p in var_pos))
        out.sort()
        return out

    def join_edb(self, atoms: Iterable[Atom]) -> Relation:
        """Natural join of EDB atoms; the empty conjunction yields the unit
        relation. Result columns are keyed by variable name; constants are
        consumed by the scans."""
        result = Relation.unit()
        for atom in atoms:
            rows = self.scan(atom)
            rel = Relation.from_rows(atom.vars(), rows)
            shared = tuple(a for a in rel.attrs if a in result.attrs)
            result = hash_join(result, rel, shared)
            if result.nrows == 0:
                break
        return result

    # -- persistence ----------------------------------------------------------

    def save_snapshot(self, path: str) -> None:
        payload = {
            "magic": _SNAPSHOT_MAGIC,
            "strings": list(self.dictionary._strings),
            "facts": {name: sorted(f.tuples) for name, f in self._preds.items()},
        }
        with open(path, "wb") as sink:
            pickle.dump(payload, sink, protocol=pickle.HIGHEST_PROTOCOL)

    @classmethod
    def load_snapshot(cls, path: str) -> "EdbStore":
        with open(path, "rb") as source:
            payload = pickle.load(source)
        if not isinstance(payload, dict) or payload.get("magic") != _SNAPSHOT_MAGIC:
            raise DataError(f"{path} is not a store snapshot")
        store = cls()
        for s in payload["strings"]:
            store.dictionary.intern(s)
        for pred, rows in payload["facts"].items():
            for row in rows:
                store.add_fact(pred, tuple(row))
        return store
