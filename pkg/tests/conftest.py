import pytest

from deltalog import EdbStore, parse_program

P0_TEXT = """
% running example: triple import, inverse properties, hasPart transitivity
T(X,V,Y) :- triple(X,V,Y).
Inverse(V,W) :- T(V,iO,W).
T(Y,W,X) :- Inverse(V,W), T(X,V,Y).
T(Y,V,X) :- Inverse(V,W), T(X,W,Y).
T(X,hP,Z) :- T(X,hP,Y), T(Y,hP,Z).
"""

DB0_LINES = [
    "triple\ta\thP\tb",
    "triple\tb\thP\tc",
    "triple\thP\tiO\tpO",
]

# the eight derived facts of the running example, as strings
P0_EXPECTED_T = {
    ("hP", "iO", "pO"),
    ("a", "hP", "b"),
    ("b", "hP", "c"),
    ("a", "hP", "c"),
    ("b", "pO", "a"),
    ("c", "pO", "b"),
    ("c", "pO", "a"),
}
P0_EXPECTED_INVERSE = {("hP", "pO")}


def load_p0():
    program = parse_program(P0_TEXT)
    db = EdbStore(program.dictionary)
    db.load_facts(DB0_LINES, "tsv", program.idb_names())
    return program, db


@pytest.fixture
def p0():
    return load_p0()


def named(store, pred, dictionary):
    return {
        tuple(dictionary.lookup(v) for v in row) for row in store.facts(pred)
    }
