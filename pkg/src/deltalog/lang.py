"""Datalog abstract syntax and the symbolic operations on it.

Terms are either variables (symbolic names) or constants (dictionary ids).
Rules keep their body atoms in source order; the engine reads the
EDB-first split through :meth:`Rule.edb_atoms` / :meth:`Rule.idb_atoms`.
All AST values are immutable and safe to share across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .errors import ArityError, ParseError, SafetyError


class PredKind(Enum):
    EDB = "edb"
    IDB = "idb"


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return f"Var({self.name})"


@dataclass(frozen=True, slots=True)
class Const:
    cid: int

    def __repr__(self) -> str:
        return f"Const({self.cid})"


Term = Var | Const


@dataclass(frozen=True, slots=True)
class Predicate:
    name: str
    arity: int
    kind: PredKind

    @property
    def is_idb(self) -> bool:
        return self.kind is PredKind.IDB


@dataclass(frozen=True, slots=True)
class Atom:
    pred: Predicate
    terms: tuple[Term, ...]

    def __post_init__(self) -> None:
        if len(self.terms) != self.pred.arity:
            raise ValueError(
                f"atom {self.pred.name} has {len(self.terms)} terms, arity {self.pred.arity}"
            )

    def vars(self) -> tuple[str, ...]:
        """Distinct variable names in first-occurrence order."""
        seen: list[str] = []
        for t in self.terms:
            if isinstance(t, Var) and t.name not in seen:
                seen.append(t.name)
        return tuple(seen)

    @property
    def is_ground(self) -> bool:
        return all(isinstance(t, Const) for t in self.terms)


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Atom, ...]

    def edb_atoms(self) -> list[tuple[int, Atom]]:
        """(source index, atom) pairs for the EDB part of the body."""
        return [(i, a) for i, a in enumerate(self.body) if not a.pred.is_idb]

    def idb_atoms(self) -> list[tuple[int, Atom]]:
        return [(i, a) for i, a in enumerate(self.body) if a.pred.is_idb]

    def vars(self) -> tuple[str, ...]:
        seen: list[str] = []
        for atom in (self.head, *self.body):
            for name in atom.vars():
                if name not in seen:
                    seen.append(name)
        return tuple(seen)


@dataclass(frozen=True)
class ResolvedRule:
    """A rule obtained by expanding one body atom with a producer rule's body.

    ``inserted_lo:inserted_hi`` is the body slice holding the atoms that came
    from the producer (renamed apart, unifier applied).
    """

    rule: Rule
    inserted_lo: int
    inserted_hi: int


@dataclass
class Program:
    rules: tuple[Rule, ...]
    predicates: dict[str, Predicate]
    facts: tuple[Atom, ...] = ()
    dictionary: object | None = None

    def idb_names(self) -> frozenset[str]:
        return frozenset(n for n, p in self.predicates.items() if p.is_idb)


# ---------------------------------------------------------------------------
# Substitutions and unification
# ---------------------------------------------------------------------------

Substitution = dict[str, Term]


def _close(env: Substitution) -> Substitution:
    """Resolve variable chains so applying the result twice equals once."""

    def chase(t: Term) -> Term:
        while isinstance(t, Var) and t.name in env:
            t = env[t.name]
        return t

    return {name: chase(value) for name, value in env.items()}


def unify(a: Atom, b: Atom) -> Substitution | None:
    """Most general unifier of two atoms, or None.

    Shared variable names in ``a`` and ``b`` denote the same variable;
    callers that need independent rules rename apart first (see
    :func:`rename_apart`). Terms are function-free, so no occurs check.
    """
    if a.pred.name != b.pred.name or a.pred.arity != b.pred.arity:
        return None
    env: Substitution = {}

    def chase(t: Term) -> Term:
        while isinstance(t, Var) and t.name in env:
            t = env[t.name]
        return t

    for s, t in zip(a.terms, b.terms):
        s, t = chase(s), chase(t)
        if s == t:
            continue
        if isinstance(s, Var):
            env[s.name] = t
        elif isinstance(t, Var):
            env[t.name] = s
        else:
            return None
    return _close(env)


def apply_subst_atom(atom: Atom, subst: Substitution) -> Atom:
    if not subst:
        return atom
    terms = tuple(
        subst.get(t.name, t) if isinstance(t, Var) else t for t in atom.terms
    )
    return Atom(atom.pred, terms)


def apply_subst(target: Atom | Rule, subst: Substitution) -> Atom | Rule:
    """Apply a (composition-closed) substitution to an atom or a whole rule."""
    if isinstance(target, Atom):
        return apply_subst_atom(target, subst)
    return Rule(
        apply_subst_atom(target.head, subst),
        tuple(apply_subst_atom(a, subst) for a in target.body),
    )


def rename_apart(rule: Rule, taken: Iterable[str]) -> Rule:
    """Rename the rule's variables so they avoid every name in ``taken``."""
    taken = set(taken)
    mapping: Substitution = {}
    for name in rule.vars():
        if name in taken:
            k = 1
            fresh = f"{name}_r{k}"
            while fresh in taken or fresh in mapping:
                k += 1
                fresh = f"{name}_r{k}"
            mapping[name] = Var(fresh)
            taken.add(fresh)
    return apply_subst(rule, mapping) if mapping else rule


def resolve(rule: Rule, body_index: int, producer: Rule) -> ResolvedRule | None:
    """Replace body atom ``body_index`` of ``rule`` by the producer's body.

    The producer is renamed apart, its head unified with the selected body
    atom, and the most general unifier applied to the combined rule. Returns
    None when the heads do not unify.
    """
    target = rule.body[body_index]
    fresh = rename_apart(producer, rule.vars())
    mgu = unify(target, fresh.head)
    if mgu is None:
        return None
    body = rule.body[:body_index] + fresh.body + rule.body[body_index + 1 :]
    combined = Rule(rule.head, body)
    return ResolvedRule(
        apply_subst(combined, mgu), body_index, body_index + len(fresh.body)
    )


def is_trivially_redundant(rule: Rule | ResolvedRule) -> bool:
    """True iff the head atom is syntactically equal to some body atom."""
    if isinstance(rule, ResolvedRule):
        rule = rule.rule
    return rule.head in rule.body


def _match_term(pattern: Term, target: Term, binding: Substitution) -> bool:
    if isinstance(pattern, Const):
        return pattern == target
    bound = binding.get(pattern.name)
    if bound is None:
        binding[pattern.name] = target
        return True
    return bound == target


def match_atom(pattern: Atom, target: Atom, binding: Substitution | None = None) -> Substitution | None:
    """One-way pattern match: a substitution s with pattern*s == target."""
    if pattern.pred.name != target.pred.name or pattern.pred.arity != target.pred.arity:
        return None
    env: Substitution = dict(binding) if binding else {}
    for p, t in zip(pattern.terms, target.terms):
        if not _match_term(p, t, env):
            return None
    return env


def subsumes(general: Rule, specific: Rule) -> bool:
    """True iff every fact set makes specific's conclusions a subset of general's.

    Decided by the classical conjunctive-query homomorphism: a substitution
    over ``general``'s variables mapping its head onto ``specific``'s head and
    its body into ``specific``'s body (the specific rule's variables are
    frozen). Sound and complete for function-free rules.
    """
    frozen: Substitution = {name: Const(-(i + 1)) for i, name in enumerate(specific.vars())}
    target_head = apply_subst_atom(specific.head, frozen)
    target_body = [apply_subst_atom(a, frozen) for a in specific.body]

    start = match_atom(general.head, target_head)
    if start is None:
        return False

    def search(i: int, binding: Substitution) -> bool:
        if i == len(general.body):
            return True
        for candidate in target_body:
            env = match_atom(general.body[i], candidate, binding)
            if env is not None and search(i + 1, env):
                return True
        return False

    return search(0, start)


def canonical_rule(rule: Rule) -> Rule:
    """Alpha-normal form: variables renamed v0, v1, ... in occurrence order."""
    mapping: Substitution = {}
    for name in rule.vars():
        mapping[name] = Var(f"v{len(mapping)}")
    return apply_subst(rule, mapping)


def canonical_atom(atom: Atom) -> Atom:
    mapping: Substitution = {}
    for name in atom.vars():
        mapping[name] = Var(f"v{len(mapping)}")
    return apply_subst_atom(atom, mapping)


# ---------------------------------------------------------------------------
# Surface syntax
# ---------------------------------------------------------------------------
#
# statement  := atom ":-" atom ("," atom)* "." | atom "."
# atom       := NAME "(" (term ("," term)*)? ")"
# term       := VARIABLE | NAME | NUMBER | STRING | IRI
#
# Variables start with an uppercase letter or "?". Bare constants are
# lowercase identifiers or numerals; anything else is written as a
# double-quoted string or an <IRI>. "%" starts a line comment.

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*)
  | (?P<implies>:-)
  | (?P<lpar>\()
  | (?P<rpar>\))
  | (?P<comma>,)
  | (?P<dot>\.)
  | (?P<qvar>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<iri><[^<>\s]*>)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>[0-9]+)
    """,
    re.VERBOSE,
)

_BARE_RE = re.compile(r"^(?:[a-z][A-Za-z0-9_]*|[0-9]+)$")


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup or ""
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, value, line, m.start() - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unescape(body: str) -> str:
    return body.replace("\\\\", "\x00").replace('\\"', '"').replace("\x00", "\\")


def _escape(body: str) -> str:
    return body.replace("\\", "\\\\").replace('"', '\\"')


# Raw statements carry (name, line) for predicates and tagged raw terms:
# ("var", name) or ("const", surface string).
_RawTerm = tuple[str, str]
_RawAtom = tuple[str, tuple[_RawTerm, ...], int]


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self, kind: str) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != kind:
            raise ParseError(f"expected {kind}, found {tok.text or 'end of input'!r}", tok.line, tok.column)
        self.pos += 1
        return tok

    def term(self) -> _RawTerm:
        tok = self.peek()
        if tok.kind == "qvar":
            self.pos += 1
            return ("var", tok.text[1:])
        if tok.kind == "name":
            self.pos += 1
            if tok.text[0].isupper():
                return ("var", tok.text)
            return ("const", tok.text)
        if tok.kind == "number":
            self.pos += 1
            return ("const", tok.text)
        if tok.kind == "string":
            self.pos += 1
            return ("const", _unescape(tok.text[1:-1]))
        if tok.kind == "iri":
            self.pos += 1
            return ("const", tok.text)
        raise ParseError(f"expected a term, found {tok.text or 'end of input'!r}", tok.line, tok.column)

    def atom(self) -> _RawAtom:
        name_tok = self.take("name")
        self.take("lpar")
        terms: list[_RawTerm] = []
        if self.peek().kind != "rpar":
            terms.append(self.term())
            while self.peek().kind == "comma":
                self.pos += 1
                terms.append(self.term())
        self.take("rpar")
        return (name_tok.text, tuple(terms), name_tok.line)

    def statement(self) -> tuple[_RawAtom, tuple[_RawAtom, ...]] | None:
        if self.peek().kind == "eof":
            return None
        head = self.atom()
        body: list[_RawAtom] = []
        if self.peek().kind == "implies":
            self.pos += 1
            body.append(self.atom())
            while self.peek().kind == "comma":
                self.pos += 1
                body.append(self.atom())
        self.take("dot")
        return (head, tuple(body))


def _raw_atom_text(atom: _RawAtom) -> str:
    name, terms, _ = atom
    inner = ", ".join(t[1] for t in terms)
    return f"{name}({inner})"


def parse_program(text: str, dictionary=None) -> Program:
    """Parse rule text into a checked Program.

    Statements without a body are facts; they are accepted for EDB predicates
    (available through ``Program.facts``) and rejected for IDB predicates.
    Predicate arity is fixed by first occurrence. Constants are interned into
    ``dictionary`` (a fresh one is created when omitted).
    """
    if dictionary is None:
        from .edb import Dictionary

        dictionary = Dictionary()

    parser = _Parser(text)
    statements: list[tuple[_RawAtom, tuple[_RawAtom, ...]]] = []
    while True:
        stmt = parser.statement()
        if stmt is None:
            break
        statements.append(stmt)

    arities: dict[str, int] = {}
    heads: set[str] = set()
    for head, body in statements:
        if body:
            heads.add(head[0])
        for name, terms, line in (head, *body):
            known = arities.get(name)
            if known is None:
                arities[name] = len(terms)
            elif known != len(terms):
                raise ArityError(name, known, len(terms), line)

    predicates: dict[str, Predicate] = {
        name: Predicate(name, arity, PredKind.IDB if name in heads else PredKind.EDB)
        for name, arity in arities.items()
    }

    def build_atom(raw: _RawAtom) -> Atom:
        name, terms, _ = raw
        built = tuple(
            Var(value) if kind == "var" else Const(dictionary.intern(value))
            for kind, value in terms
        )
        return Atom(predicates[name], built)

    rules: list[Rule] = []
    facts: list[Atom] = []
    for head, body in statements:
        if not body:
            name, terms, line = head
            if name in heads:
                raise ParseError(
                    f"fact for IDB predicate {name!r} not allowed in rule files", line
                )
            if any(kind == "var" for kind, _ in terms):
                raise ParseError(f"fact {_raw_atom_text(head)!r} contains a variable", line)
            facts.append(build_atom(head))
            continue
        body_vars = {v for _, terms, _ in body for kind, v in terms if kind == "var"}
        for kind, v in head[1]:
            if kind == "var" and v not in body_vars:
                rule_text = f"{_raw_atom_text(head)} :- " + ", ".join(map(_raw_atom_text, body)) + "."
                raise SafetyError(rule_text, v, head[2])
        rules.append(Rule(build_atom(head), tuple(build_atom(a) for a in body)))

    return Program(tuple(rules), predicates, tuple(facts), dictionary)


def parse_atom(text: str, program: Program) -> Atom:
    """Parse a single query atom (e.g. ``T(X,pO,Y)``) against a program.

    The predicate must be registered in the program; constants are interned
    into the program's dictionary.
    """
    parser = _Parser(text)
    raw = parser.atom()
    parser.take("eof")
    name, terms, line = raw
    from .errors import UnknownPredicateError

    pred = program.predicates.get(name)
    if pred is None:
        raise UnknownPredicateError(f"unknown predicate {name!r}")
    if pred.arity != len(terms):
        raise ArityError(name, pred.arity, len(terms), line)
    built = tuple(
        Var(value) if kind == "var" else Const(program.dictionary.intern(value))
        for kind, value in terms
    )
    return Atom(pred, built)


# ---------------------------------------------------------------------------
# Printing (inverse of the parser, used for round trips and diagnostics)
# ---------------------------------------------------------------------------


def term_to_text(term: Term, dictionary) -> str:
    if isinstance(term, Var):
        return term.name if term.name[:1].isupper() else f"?{term.name}"
    s = dictionary.lookup(term.cid)
    if _BARE_RE.match(s):
        return s
    if s.startswith("<") and s.endswith(">") and " " not in s:
        return s
    return f'"{_escape(s)}"'


def atom_to_text(atom: Atom, dictionary) -> str:
    inner = ", ".join(term_to_text(t, dictionary) for t in atom.terms)
    return f"{atom.pred.name}({inner})"


def rule_to_text(rule: Rule, dictionary) -> str:
    body = ", ".join(atom_to_text(a, dictionary) for a in rule.body)
    return f"{atom_to_text(rule.head, dictionary)} :- {body} ."


def program_to_text(program: Program) -> str:
    d = program.dictionary
    lines = [rule_to_text(r, d) for r in program.rules]
    lines.extend(f"{atom_to_text(f, d)} ." for f in program.facts)
    return "\n".join(lines) + ("\n" if lines else "")
