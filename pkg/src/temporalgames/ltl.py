"""Linear temporal logic over finite traces: AST, parsing, progression.

Formulas are immutable trees built from the atoms of the environment
vocabulary.  A trace is a finite sequence of truth assignments, each
assignment a frozenset of atom names.  The co-safe fragment (negation on
atoms only, no Always/WeakNext) is the one the rest of the system
compiles and learns against; the full finite-trace language is kept
around so specifications written with Always/WeakNext can be translated
into the fragment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

# Reserved marker atom: true exactly at the final step of a finite trace.
# Traces never carry it unless inject_last() (or a test) put it there; the
# runtime environment never emits it.
LAST = "last"

_ATOM_RE = re.compile(r"[a-z][a-z0-9_]*\Z")


class LtlError(Exception):
    """Base error for formula handling."""


class LtlSyntaxError(LtlError):
    """Malformed concrete syntax; carries the byte offset of the problem."""

    def __init__(self, message, offset, expected=()):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.expected = frozenset(expected)


class NotCosafeError(LtlError):
    """The operation requires the co-safe fragment."""


class Formula:
    def __str__(self):
        return render(self)


def _node(cls):
    """Frozen structural node whose hash is computed once, at construction.

    Progression and closure hash the same subtrees constantly; caching
    turns each re-hash of a deep formula into a field read.  Children are
    built first, so the eager computation touches each node only once.
    """
    cls = dataclass(frozen=True)(cls)
    field_hash = cls.__hash__
    field_init = cls.__init__
    field_eq = cls.__eq__

    def __init__(self, *args, **kwargs):
        field_init(self, *args, **kwargs)
        object.__setattr__(self, "_hash", field_hash(self))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if type(other) is not type(self):
            return NotImplemented
        if self._hash != other._hash:
            return False
        return field_eq(self, other)

    cls.__init__ = __init__
    cls.__hash__ = __hash__
    cls.__eq__ = __eq__
    return cls


@_node
class TrueFormula(Formula):
    pass


@_node
class FalseFormula(Formula):
    pass


@_node
class Atom(Formula):
    name: str

    def __post_init__(self):
        if not _ATOM_RE.match(self.name):
            raise LtlError(f"invalid atom name {self.name!r}")


@_node
class Not(Formula):
    sub: Formula


@_node
class And(Formula):
    left: Formula
    right: Formula


@_node
class Or(Formula):
    left: Formula
    right: Formula


@_node
class Next(Formula):
    sub: Formula


@_node
class WeakNext(Formula):
    sub: Formula


@_node
class Until(Formula):
    left: Formula
    right: Formula


@_node
class Eventually(Formula):
    sub: Formula


@_node
class Always(Formula):
    sub: Formula


TRUE = TrueFormula()
FALSE = FalseFormula()


def atoms(f: Formula) -> frozenset[str]:
    """All atom names mentioned by the formula."""
    out: set[str] = set()
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, Atom):
            out.add(g.name)
        elif isinstance(g, (Not, Next, WeakNext, Eventually, Always)):
            stack.append(g.sub)
        elif isinstance(g, (And, Or, Until)):
            stack.append(g.left)
            stack.append(g.right)
    return frozenset(out)


def is_cosafe(f: Formula) -> bool:
    """True iff the formula lies in the co-safe fragment.

    Negation may appear on atoms only; Always and WeakNext are excluded.
    The constants true/false are admitted because progression produces
    them.
    """
    if isinstance(f, (TrueFormula, FalseFormula, Atom)):
        return True
    if isinstance(f, Not):
        return isinstance(f.sub, Atom)
    if isinstance(f, (Next, Eventually)):
        return is_cosafe(f.sub)
    if isinstance(f, (And, Or, Until)):
        return is_cosafe(f.left) and is_cosafe(f.right)
    return False  # Always, WeakNext


def require_cosafe(f: Formula) -> None:
    if not is_cosafe(f):
        raise NotCosafeError(f"not a co-safe formula: {render(f)}")


# ---------------------------------------------------------------------------
# Concrete syntax
#
# Tokens: F (eventually), G (always), X (next), WX (weak next), U (until),
# & | ! true false identifiers parentheses.  Precedence, loosest first:
# | < & < U < prefix operators; U is right-associative, & and | are
# left-associative.

_UNARY_TOKENS = {"!": Not, "X": Next, "WX": WeakNext, "F": Eventually, "G": Always}

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<lpar>\()
      | (?P<rpar>\))
      | (?P<amp>&)
      | (?P<bar>\|)
      | (?P<bang>!)
      | (?P<upper>[A-Z]+)
      | (?P<ident>[a-z][a-z0-9_]*)
    """,
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LtlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        value = m.group()
        if m.lastgroup == "upper" and value not in ("F", "G", "X", "WX", "U"):
            raise LtlSyntaxError(
                f"unknown operator {value!r}", m.start(),
                expected=("F", "G", "X", "WX", "U"))
        tokens.append((value, m.start()))
    tokens.append((None, len(text)))  # end marker
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos][0]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def offset(self):
        return self.tokens[self.pos][1]

    def parse_or(self):
        f = self.parse_and()
        while self.peek() == "|":
            self.advance()
            f = Or(f, self.parse_and())
        return f

    def parse_and(self):
        f = self.parse_until()
        while self.peek() == "&":
            self.advance()
            f = And(f, self.parse_until())
        return f

    def parse_until(self):
        f = self.parse_unary()
        if self.peek() == "U":
            self.advance()
            return Until(f, self.parse_until())
        return f

    def parse_unary(self):
        tok = self.peek()
        if tok in _UNARY_TOKENS:
            self.advance()
            return _UNARY_TOKENS[tok](self.parse_unary())
        return self.parse_primary()

    def parse_primary(self):
        tok = self.peek()
        if tok == "(":
            self.advance()
            f = self.parse_or()
            if self.peek() != ")":
                raise LtlSyntaxError("expected ')'", self.offset(), expected=(")",))
            self.advance()
            return f
        if tok == "true":
            self.advance()
            return TRUE
        if tok == "false":
            self.advance()
            return FALSE
        if tok is not None and tok[0].islower():
            self.advance()
            return Atom(tok)
        raise LtlSyntaxError(
            "expected a formula", self.offset(),
            expected=("(", "!", "X", "WX", "F", "G", "true", "false", "atom"))


def parse(text: str) -> Formula:
    """Parse concrete syntax into a formula; round-trips with render()."""
    p = _Parser(_tokenize(text))
    f = p.parse_or()
    if p.peek() is not None:
        raise LtlSyntaxError(
            f"unexpected token {p.peek()!r}", p.offset(), expected=("end of input",))
    return f


_PREC_OR, _PREC_AND, _PREC_UNTIL, _PREC_UNARY, _PREC_ATOM = 1, 2, 3, 4, 5

_UNARY_SYMBOL = {Not: "!", Next: "X ", WeakNext: "WX ", Eventually: "F ", Always: "G "}


def render(f: Formula) -> str:
    """Concrete syntax for a formula, with minimal parentheses."""
    return _render(f, 0)


def _render(f, min_prec):
    if isinstance(f, TrueFormula):
        return "true"
    if isinstance(f, FalseFormula):
        return "false"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, (Not, Next, WeakNext, Eventually, Always)):
        text = _UNARY_SYMBOL[type(f)] + _render(f.sub, _PREC_UNARY)
        prec = _PREC_UNARY
    elif isinstance(f, And):
        text = f"{_render(f.left, _PREC_AND)} & {_render(f.right, _PREC_AND + 1)}"
        prec = _PREC_AND
    elif isinstance(f, Or):
        text = f"{_render(f.left, _PREC_OR)} | {_render(f.right, _PREC_OR + 1)}"
        prec = _PREC_OR
    elif isinstance(f, Until):
        text = f"{_render(f.left, _PREC_UNTIL + 1)} U {_render(f.right, _PREC_UNTIL)}"
        prec = _PREC_UNTIL
    else:
        raise TypeError(f"not a formula: {f!r}")
    if prec < min_prec:
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# Finite-trace semantics

def satisfies(trace, i: int, f: Formula) -> bool:
    """Evaluate the formula at position i of a finite trace.

    Direct recursion on the semantic clauses: Next requires position i+1
    to exist, WeakNext is vacuously true at the final step, Until needs
    its witness within the trace.  Atoms, including the reserved marker
    `last`, are plain membership tests against the assignment.
    """
    n = len(trace)
    if not 0 <= i < n:
        raise IndexError(f"position {i} outside trace of length {n}")
    return _sat(trace, n, i, f)


def _sat(trace, n, i, f):
    if isinstance(f, TrueFormula):
        return True
    if isinstance(f, FalseFormula):
        return False
    if isinstance(f, Atom):
        return f.name in trace[i]
    if isinstance(f, Not):
        return not _sat(trace, n, i, f.sub)
    if isinstance(f, And):
        return _sat(trace, n, i, f.left) and _sat(trace, n, i, f.right)
    if isinstance(f, Or):
        return _sat(trace, n, i, f.left) or _sat(trace, n, i, f.right)
    if isinstance(f, Next):
        return i + 1 < n and _sat(trace, n, i + 1, f.sub)
    if isinstance(f, WeakNext):
        return i + 1 >= n or _sat(trace, n, i + 1, f.sub)
    if isinstance(f, Until):
        for j in range(i, n):
            if _sat(trace, n, j, f.right):
                return True
            if not _sat(trace, n, j, f.left):
                return False
        return False
    if isinstance(f, Eventually):
        return any(_sat(trace, n, j, f.sub) for j in range(i, n))
    if isinstance(f, Always):
        return all(_sat(trace, n, j, f.sub) for j in range(i, n))
    raise TypeError(f"not a formula: {f!r}")


def inject_last(trace):
    """Copy of the trace with the `last` marker added to its final step."""
    if not trace:
        raise ValueError("empty trace")
    steps = [frozenset(a) for a in trace]
    steps[-1] = steps[-1] | {LAST}
    return tuple(steps)


# ---------------------------------------------------------------------------
# Progression

def progress(assignment, f: Formula) -> Formula:
    """Rewrite the formula against one truth assignment.

    The residue captures what remains to be satisfied from the next step
    on; it is returned in simplified canonical form so that repeated
    progression visits only finitely many distinct formulas.
    """
    return simplify(_progress(frozenset(assignment), f))


def _progress(a, f):
    if isinstance(f, (TrueFormula, FalseFormula)):
        return f
    if isinstance(f, Atom):
        return TRUE if f.name in a else FALSE
    if isinstance(f, Not):
        return Not(_progress(a, f.sub))
    if isinstance(f, And):
        return And(_progress(a, f.left), _progress(a, f.right))
    if isinstance(f, Or):
        return Or(_progress(a, f.left), _progress(a, f.right))
    if isinstance(f, Next):
        return f.sub
    if isinstance(f, WeakNext):
        return f.sub
    if isinstance(f, Until):
        return Or(_progress(a, f.right), And(_progress(a, f.left), f))
    if isinstance(f, Eventually):
        return Or(_progress(a, f.sub), f)
    if isinstance(f, Always):
        return And(_progress(a, f.sub), f)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Simplification
#
# A terminating rewrite system, not semantic minimization.  The boolean
# skeleton of a formula is canonicalized as an irredundant disjunction of
# conjunctions over "temporal literals" (everything that is not And/Or).
# Progression only ever produces literals drawn from the subformulas of
# the original specification, so this normal form has finitely many
# representatives and progression closure is guaranteed to terminate.
# On top of that: true/false absorption, double negation, the
# until/eventually unit laws, and subsumption between siblings when a
# sound syntactic entailment check proves one implies the other.
# Commutative operands are sorted under a total structural order so
# formulas equal up to commutativity and associativity share one
# representative.

_RANK = {
    TrueFormula: 0, FalseFormula: 1, Atom: 2, Not: 3, Next: 4, WeakNext: 5,
    Eventually: 6, Always: 7, Until: 8, And: 9, Or: 10,
}


@lru_cache(maxsize=1 << 17)
def _key(f):
    if isinstance(f, Atom):
        return (2, f.name)
    if isinstance(f, (TrueFormula, FalseFormula)):
        return (_RANK[type(f)],)
    if isinstance(f, (Not, Next, WeakNext, Eventually, Always)):
        return (_RANK[type(f)], _key(f.sub))
    return (_RANK[type(f)], _key(f.left), _key(f.right))


@lru_cache(maxsize=1 << 17)
def _entails(f, g):
    """Sound, incomplete syntactic implication check (finite traces)."""
    if f == g or isinstance(f, FalseFormula) or isinstance(g, TrueFormula):
        return True
    if isinstance(f, Or):
        return _entails(f.left, g) and _entails(f.right, g)
    if isinstance(g, And):
        return _entails(f, g.left) and _entails(f, g.right)
    if isinstance(f, And) and (_entails(f.left, g) or _entails(f.right, g)):
        return True
    if isinstance(g, Or) and (_entails(f, g.left) or _entails(f, g.right)):
        return True
    if isinstance(g, Eventually):
        # f => h gives f => F h; F k => F h when k => F h; k U r => F r.
        if _entails(f, g.sub):
            return True
        if isinstance(f, Eventually) and _entails(f.sub, g):
            return True
        if isinstance(f, Until) and _entails(f.right, g):
            return True
    return False


def _terms(f):
    """Decompose a canonical formula into DNF terms (sets of literals).

    Canonical And nodes never have Or children, so this is a plain
    unfolding of the boolean skeleton.
    """
    if isinstance(f, Or):
        return _terms(f.left) | _terms(f.right)
    if isinstance(f, And):
        conj = []
        stack = [f]
        while stack:
            g = stack.pop()
            if isinstance(g, And):
                stack.append(g.left)
                stack.append(g.right)
            else:
                conj.append(g)
        return {frozenset(conj)}
    return {frozenset({f})}


def _prune_term(term):
    """Conjunction-level pruning; None means the term is unsatisfiable."""
    lits = set(term)
    lits.discard(TRUE)
    if FALSE in lits:
        return None
    for lit in lits:
        # x & !x cannot hold at any position.  The dual rewrite
        # (x | !x -> true) is deliberately absent everywhere: a residue
        # must never turn into `true` without a witnessed position, or
        # progression closure would accept an undischarged
        # next-obligation at the end of a trace.
        if isinstance(lit, Not) and lit.sub in lits:
            return None
    ordered = sorted(lits, key=_key)
    kept = []
    for i, x in enumerate(ordered):
        redundant = False
        for j, y in enumerate(ordered):
            if i != j and _entails(y, x) and (not _entails(x, y) or j < i):
                redundant = True
                break
        if not redundant:
            kept.append(x)
    return frozenset(kept)


def _term_implies(t1, t2):
    """conj(t1) => conj(t2): every t2 literal is entailed by some t1 literal."""
    return all(any(_entails(x, y) for x in t1) for y in t2)


def _term_key(term):
    return tuple(sorted(_key(lit) for lit in term))


def _balanced(cls, members):
    while len(members) > 1:
        members = [cls(members[i], members[i + 1])
                   for i in range(0, len(members) - 1, 2)] + (
                       [members[-1]] if len(members) % 2 else [])
    return members[0]


def _from_terms(terms):
    """Rebuild the canonical or-of-ands formula for an antichain of terms."""
    if not terms:
        return FALSE
    ordered = sorted(terms, key=_term_key)
    disjuncts = [
        _balanced(And, sorted(t, key=_key)) if len(t) > 1 else next(iter(t))
        for t in ordered]
    return _balanced(Or, disjuncts) if len(disjuncts) > 1 else disjuncts[0]


def _mk_bool(parts, conjunction):
    """Canonical boolean combination of already-canonical formulas."""
    if conjunction:
        terms = {frozenset()}
        for p in parts:
            terms = {t1 | t2 for t1 in terms for t2 in _terms(p)}
    else:
        terms = set()
        for p in parts:
            terms |= _terms(p)
    pruned = set()
    for t in terms:
        t = _prune_term(t)
        if t is not None:
            if not t:
                return TRUE  # a fully discharged disjunct decides it
            pruned.add(t)
    if not pruned:
        return FALSE
    ordered = sorted(pruned, key=_term_key)
    kept = []
    for i, t in enumerate(ordered):
        redundant = False
        for j, u in enumerate(ordered):
            if i != j and _term_implies(t, u) and (not _term_implies(u, t) or j < i):
                redundant = True  # the stronger disjunct adds nothing
                break
        if not redundant:
            kept.append(t)
    return _from_terms(kept)


def _mk_not(s):
    if isinstance(s, TrueFormula):
        return FALSE
    if isinstance(s, FalseFormula):
        return TRUE
    if isinstance(s, Not):
        return s.sub
    return Not(s)


def _mk_next(s):
    # X false == false; X true is *not* true on finite traces.
    if isinstance(s, FalseFormula):
        return FALSE
    return Next(s)


def _mk_weaknext(s):
    if isinstance(s, TrueFormula):
        return TRUE
    return WeakNext(s)


def _mk_eventually(s):
    if isinstance(s, (TrueFormula, FalseFormula, Eventually)):
        return s
    return Eventually(s)


def _mk_always(s):
    if isinstance(s, (TrueFormula, FalseFormula, Always)):
        return s
    return Always(s)


def _mk_until(left, right):
    if isinstance(right, TrueFormula):
        return TRUE
    if isinstance(right, FalseFormula):
        return FALSE
    if isinstance(left, FalseFormula):
        return right
    if isinstance(left, TrueFormula):
        return _mk_eventually(right)
    if _entails(left, right):  # covers x U x
        return right
    return Until(left, right)


@lru_cache(maxsize=1 << 17)
def simplify(f: Formula) -> Formula:
    if isinstance(f, (TrueFormula, FalseFormula, Atom)):
        return f
    if isinstance(f, Not):
        return _mk_not(simplify(f.sub))
    if isinstance(f, And):
        return _mk_bool([simplify(f.left), simplify(f.right)], conjunction=True)
    if isinstance(f, Or):
        return _mk_bool([simplify(f.left), simplify(f.right)], conjunction=False)
    if isinstance(f, Next):
        return _mk_next(simplify(f.sub))
    if isinstance(f, WeakNext):
        return _mk_weaknext(simplify(f.sub))
    if isinstance(f, Until):
        return _mk_until(simplify(f.left), simplify(f.right))
    if isinstance(f, Eventually):
        return _mk_eventually(simplify(f.sub))
    if isinstance(f, Always):
        return _mk_always(simplify(f.sub))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Translation of finite-trace formulas into the co-safe fragment
#
# The target formulas are evaluated on extensions t . t' of the original
# finite trace, with the `last` marker injected at the final step of t.
# Always unrolls to an until that closes at the marker; weak next is the
# disjunction "at the marker, or the successor holds"; strong next must
# additionally assert the marker has not been reached, otherwise an
# obligation falling off the end of t could be met inside t'.

def to_cosafe(f: Formula) -> Formula:
    """Translate a finite-trace formula into the co-safe fragment.

    Input may use Always and WeakNext; negation must be on atoms only.
    """
    if isinstance(f, (TrueFormula, FalseFormula, Atom)):
        return f
    if isinstance(f, Not):
        if not isinstance(f.sub, Atom):
            raise LtlError(
                f"negation over a compound formula: {render(f)}")
        return f
    if isinstance(f, And):
        return And(to_cosafe(f.left), to_cosafe(f.right))
    if isinstance(f, Or):
        return Or(to_cosafe(f.left), to_cosafe(f.right))
    if isinstance(f, Next):
        return And(Not(Atom(LAST)), Next(to_cosafe(f.sub)))
    if isinstance(f, WeakNext):
        return Or(Atom(LAST), Next(to_cosafe(f.sub)))
    if isinstance(f, Until):
        return Until(to_cosafe(f.left), to_cosafe(f.right))
    if isinstance(f, Eventually):
        return Eventually(to_cosafe(f.sub))
    if isinstance(f, Always):
        sub = to_cosafe(f.sub)
        return Until(sub, And(Atom(LAST), sub))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Specification files: one formula per line, '#' comments, blank lines
# ignored.  Line order defines curriculum order.

def parse_spec_lines(text: str) -> list[Formula]:
    specs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        try:
            specs.append(parse(stripped))
        except LtlSyntaxError as exc:
            raise LtlSyntaxError(
                f"line {lineno}: {exc.args[0]}", exc.offset, exc.expected) from exc
    return specs
