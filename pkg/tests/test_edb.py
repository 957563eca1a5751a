import itertools
import random

import pytest

from deltalog.edb import Dictionary, EdbStore
from deltalog.errors import DataError, UnknownIdError, UnknownPredicateError
from deltalog.lang import Atom, Const, PredKind, Predicate, Var

from conftest import DB0_LINES
from oracle import nested_loop_join

EDB = PredKind.EDB


def edb_pred(name, arity):
    return Predicate(name, arity, EDB)


def test_intern_is_idempotent_and_dense():
    d = Dictionary()
    first = d.intern("hP")
    assert d.intern("hP") == first
    assert [d.intern(s) for s in ("x", "y")] == [1, 2]
    assert d.intern("hP") == 0
    assert d.lookup(d.intern("a")) == "a"


def test_lookup_of_unknown_id_fails():
    d = Dictionary()
    d.intern("only")
    with pytest.raises(UnknownIdError):
        d.lookup(5)


def test_load_tsv_counts_distinct_facts():
    store = EdbStore()
    count = store.load_facts(DB0_LINES, "tsv")
    assert count == 3
    count = store.load_facts(DB0_LINES, "tsv")
    assert count == 3  # set semantics


def test_load_rejects_idb_predicate():
    store = EdbStore()
    with pytest.raises(DataError) as err:
        store.load_facts(["T\ta\tb\tc"], "tsv", idb=frozenset({"T"}))
    assert "T" in str(err.value)


def test_load_reports_line_numbers():
    store = EdbStore()
    with pytest.raises(DataError) as err:
        store.load_facts(["p\ta", "junk-without-tabs"], "tsv", source_name="facts.tsv")
    assert err.value.line == 2
    assert "facts.tsv" in str(err.value)


def test_load_ntriples():
    store = EdbStore()
    lines = [
        "<http://e/a> <http://e/p> <http://e/b> .",
        '<http://e/a> <http://e/q> "lit 1" .',
        '_:b0 <http://e/p> "x"^^<http://w/int> .',
    ]
    assert store.load_facts(lines, "nt") == 3
    assert store.arity("triple") == 3
    d = store.dictionary
    names = {tuple(d.lookup(v) for v in row) for row in store.tuples("triple")}
    assert ("<http://e/a>", "<http://e/p>", "<http://e/b>") in names
    assert ('_:b0', "<http://e/p>", '"x"^^<http://w/int>') in names
    with pytest.raises(DataError):
        store.load_facts(["<a> <b> ."], "nt")


def test_all_permutation_indexes_agree():
    rng = random.Random(3)
    store = EdbStore()
    for _ in range(400):
        store.add_fact("t", tuple(rng.randrange(9) for _ in range(3)))
    base = store.tuples("t")
    for perm in itertools.permutations(range(3)):
        permuted = store.index_tuples("t", perm)
        assert sorted(permuted) == permuted
        undone = {tuple(row[perm.index(i)] for i in range(3)) for row in permuted}
        assert undone == base


def scan_oracle(store, pattern):
    """Brute-force filter over the raw tuple set."""
    out = set()
    for row in store.tuples(pattern.pred.name):
        env = {}
        ok = True
        for t, v in zip(pattern.terms, row):
            if isinstance(t, Const):
                ok = t.cid == v
            elif t.name in env:
                ok = env[t.name] == v
            else:
                env[t.name] = v
            if not ok:
                break
        if ok:
            seen = []
            names = []
            for t in pattern.terms:
                if isinstance(t, Var) and t.name not in names:
                    names.append(t.name)
                    seen.append(env[t.name])
            out.add(tuple(seen))
    return out


def test_scan_examples_on_db0():
    store = EdbStore()
    store.load_facts(DB0_LINES, "tsv")
    d = store.dictionary
    triple = edb_pred("triple", 3)
    iO = Const(d.intern("iO"))
    rows = store.scan(Atom(triple, (Var("x"), iO, Var("y"))))
    assert [tuple(d.lookup(v) for v in r) for r in rows] == [("hP", "pO")]
    assert len(store.scan(Atom(triple, (Var("x"), Var("v"), Var("y"))))) == 3
    a = Const(d.intern("a"))
    assert store.scan(Atom(triple, (a, iO, Var("y")))) == []


def test_scan_matches_bruteforce_on_random_stores():
    rng = random.Random(17)
    for arity in (1, 2, 3, 4):
        store = EdbStore()
        pred = edb_pred("r", arity)
        for _ in range(rng.randint(1, 1000)):
            store.add_fact("r", tuple(rng.randrange(6) for _ in range(arity)))
        for _ in range(40):
            terms = []
            for _ in range(arity):
                roll = rng.random()
                if roll < 0.4:
                    terms.append(Const(rng.randrange(6)))
                else:
                    terms.append(Var(rng.choice("xyz")))
            pattern = Atom(pred, tuple(terms))
            got = store.scan(pattern)
            assert sorted(got) == got, "scan output must be sorted"
            assert set(got) == scan_oracle(store, pattern)


def test_scan_rejects_idb_pattern():
    store = EdbStore()
    store.add_fact("e", (0,))
    idb = Predicate("p", 1, PredKind.IDB)
    with pytest.raises(UnknownPredicateError):
        store.scan(Atom(idb, (Var("x"),)))


def test_join_edb_examples():
    store = EdbStore()
    store.load_facts(DB0_LINES, "tsv")
    d = store.dictionary
    triple = edb_pred("triple", 3)
    hP = Const(d.intern("hP"))
    rel = store.join_edb(
        [
            Atom(triple, (Var("x"), hP, Var("y"))),
            Atom(triple, (Var("y"), hP, Var("z"))),
        ]
    )
    a, b, c = d.intern("a"), d.intern("b"), d.intern("c")
    got = {
        tuple(row[rel.attrs.index(n)] for n in ("x", "y", "z"))
        for row in rel.to_matrix().tolist()
    }
    assert got == {(a, b, c)}

    unit = store.join_edb([])
    assert unit.attrs == () and unit.nrows == 1

    iO = Const(d.intern("iO"))
    empty = store.join_edb([Atom(triple, (Var("x"), iO, Var("x")))])
    assert empty.nrows == 0


def test_join_edb_matches_nested_loop():
    rng = random.Random(29)
    for _ in range(25):
        store = EdbStore()
        e1 = edb_pred("e1", 2)
        e2 = edb_pred("e2", 2)
        for _ in range(rng.randint(0, 40)):
            store.add_fact("e1", (rng.randrange(5), rng.randrange(5)))
        for _ in range(rng.randint(0, 40)):
            store.add_fact("e2", (rng.randrange(5), rng.randrange(5)))
        atoms = [
            Atom(e1, (Var("x"), Var("y"))),
            Atom(e2, (Var("y"), Var("z"))),
        ]
        rel = store.join_edb(atoms)
        from deltalog.columns import Relation

        left = Relation.from_rows(("x", "y"), sorted(store.tuples("e1")))
        right = Relation.from_rows(("y", "z"), sorted(store.tuples("e2")))
        want = nested_loop_join(left, right, ("y",))
        got = {
            (
                row[rel.attrs.index("y")],
                row[rel.attrs.index("x")],
                row[rel.attrs.index("z")],
            )
            for row in rel.to_matrix().tolist()
        }
        assert got == want


def test_snapshot_round_trip(tmp_path):
    store = EdbStore()
    store.load_facts(DB0_LINES, "tsv")
    path = str(tmp_path / "store.snap")
    store.save_snapshot(path)
    loaded = EdbStore.load_snapshot(path)
    assert loaded.tuples("triple") == store.tuples("triple")
    assert len(loaded.dictionary) == len(store.dictionary)
    assert loaded.dictionary.lookup(0) == store.dictionary.lookup(0)
    with pytest.raises(DataError):
        bad = tmp_path / "bad.snap"
        bad.write_bytes(b"not a snapshot")
        import pickle

        bad.write_bytes(pickle.dumps({"magic": "nope"}))
        EdbStore.load_snapshot(str(bad))
