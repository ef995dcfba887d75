"""Formula parsing, semantics, progression, simplification, translation."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from temporalgames import ltl
from temporalgames.ltl import (FALSE, LAST, TRUE, Always, And, Atom,
                               Eventually, LtlError, LtlSyntaxError, Next,
                               Not, Or, Until, WeakNext)

from helpers import random_formula, random_trace, truth_table, decode_trace

A = frozenset  # shorthand for truth assignments

P, Q, R = Atom("p"), Atom("q"), Atom("r")


# ---------------------------------------------------------------------------
# Parsing and rendering

def test_parse_nested_eventually():
    f = ltl.parse("F (got_wood & F used_workbench)")
    assert f == Eventually(And(Atom("got_wood"), Eventually(Atom("used_workbench"))))


def test_parse_negated_eventually_is_parseable_but_not_cosafe():
    f = ltl.parse("!F p")
    assert f == Not(Eventually(P))
    assert not ltl.is_cosafe(f)


def test_parse_error_offset():
    with pytest.raises(LtlSyntaxError) as exc:
        ltl.parse("p U")
    assert exc.value.offset == 3
    assert exc.value.expected  # non-empty expected-token set


def test_parse_precedence():
    assert ltl.parse("p U q & r") == And(Until(P, Q), R)
    assert ltl.parse("p & q | r") == Or(And(P, Q), R)
    assert ltl.parse("!p U q") == Until(Not(P), Q)
    assert ltl.parse("F p U q") == Until(Eventually(P), Q)
    assert ltl.parse("p U q U r") == Until(P, Until(Q, R))
    assert ltl.parse("X WX G F p") == Next(WeakNext(Always(Eventually(P))))
    assert ltl.parse("true & false") == And(TRUE, FALSE)


def test_parse_rejects_garbage():
    for text, offset in [("p &", 3), ("(p", 2), ("p)", 1), ("p ? q", 2), ("Y p", 0)]:
        with pytest.raises(LtlSyntaxError) as exc:
            ltl.parse(text)
        assert exc.value.offset == offset


def test_render_basics():
    assert ltl.render(Eventually(P)) == "F p"
    assert ltl.render(Until(P, Q)) == "p U q"
    assert ltl.render(And(P, And(Q, R))) == "p & (q & r)"
    assert ltl.render(Until(Until(P, Q), R)) == "(p U q) U r"


def test_render_parse_roundtrip_random():
    import numpy as np
    rng = np.random.default_rng(7)
    for _ in range(1000):
        f = random_formula(rng, int(rng.integers(0, 5)), ("p", "q", "r"), "ltlf")
        assert ltl.parse(ltl.render(f)) == f


def test_atom_name_validation():
    with pytest.raises(LtlError):
        Atom("BadName")
    with pytest.raises(LtlError):
        Atom("1p")
    Atom("last")  # the reserved marker is a legal atom


# ---------------------------------------------------------------------------
# is_cosafe

def test_is_cosafe_examples():
    assert ltl.is_cosafe(Eventually(And(P, Eventually(Q))))
    assert not ltl.is_cosafe(Not(Eventually(P)))
    assert not ltl.is_cosafe(Always(P))
    assert not ltl.is_cosafe(WeakNext(P))
    assert ltl.is_cosafe(Not(P))
    assert ltl.is_cosafe(TRUE) and ltl.is_cosafe(FALSE)


# ---------------------------------------------------------------------------
# satisfies

def test_satisfies_progression_example():
    t = (A({"p"}), A({"q"}))
    assert ltl.satisfies(t, 0, Eventually(And(P, Eventually(Q))))


def test_satisfies_true_on_empty_assignment():
    assert ltl.satisfies((A(),), 0, TRUE)


def test_satisfies_until_brute_force_agreement():
    f = Until(P, Q)
    t = (A({"p"}), A({"p"}), A({"q"}))
    # independent check: exists j with q at j and p before it
    def brute(trace, i):
        for j in range(i, len(trace)):
            if "q" in trace[j]:
                return True
            if "p" not in trace[j]:
                return False
        return False
    assert ltl.satisfies(t, 0, f) is True
    for n in range(1, 4):
        for t in itertools.product([A(), A({"p"}), A({"q"}), A({"p", "q"})], repeat=n):
            for i in range(n):
                assert ltl.satisfies(t, i, f) == brute(t, i)


def test_satisfies_next_and_weaknext_at_trace_end():
    t = (A({"p"}),)
    assert not ltl.satisfies(t, 0, Next(P))
    assert ltl.satisfies(t, 0, WeakNext(FALSE))  # vacuous at the last step


def test_satisfies_index_errors():
    with pytest.raises(IndexError):
        ltl.satisfies((A(),), 1, TRUE)
    with pytest.raises(IndexError):
        ltl.satisfies((A(),), -1, TRUE)


def test_satisfies_agrees_with_truth_table_oracle():
    import numpy as np
    rng = np.random.default_rng(3)
    atoms = ("p", "q")
    for _ in range(150):
        f = random_formula(rng, 3, atoms, "ltlf")
        n = int(rng.integers(1, 5))
        table = truth_table(f, atoms, n)
        for _ in range(5):
            tid = int(rng.integers(table.shape[0]))
            t = decode_trace(tid, atoms, n)
            i = int(rng.integers(n))
            assert ltl.satisfies(t, i, f) == bool(table[tid, i])


# ---------------------------------------------------------------------------
# progress

def test_progress_paper_example():
    f = Eventually(And(P, Eventually(Q)))
    assert ltl.progress(A({"p"}), f) == Eventually(Q)


def test_progress_atom_clauses():
    assert ltl.progress(A(), P) == FALSE
    assert ltl.progress(A({"p"}), P) == TRUE


def test_progress_next_clause():
    assert ltl.progress(A({"p"}), Next(Q)) == Q


def test_progress_until_clause():
    f = Until(P, Q)
    assert ltl.progress(A({"p"}), f) == f
    assert ltl.progress(A({"q"}), f) == TRUE
    assert ltl.progress(A(), f) == FALSE


def test_progression_soundness_small_exhaustive():
    # satisfies(t, i, f) == satisfies(t, i+1, progress(t[i], f)) wherever
    # position i+1 exists; at the final step a satisfied co-safe formula
    # must leave the residue `true`.
    import numpy as np
    rng = np.random.default_rng(11)
    atoms = ("p", "q")
    assignments = [A(s) for s in
                   [(), ("p",), ("q",), ("p", "q")]]
    for _ in range(120):
        f = random_formula(rng, 3, atoms, "cosafe")
        for n in (1, 2, 3):
            for t in itertools.product(assignments, repeat=n):
                for i in range(n - 1):
                    assert ltl.satisfies(t, i, f) == ltl.satisfies(
                        t, i + 1, ltl.progress(t[i], f))
                if ltl.satisfies(t, n - 1, f):
                    assert ltl.progress(t[n - 1], f) == TRUE


def test_progression_soundness_holds_for_ltlf_mid_trace():
    import numpy as np
    rng = np.random.default_rng(12)
    atoms = ("p", "q")
    for _ in range(200):
        f = random_formula(rng, 3, atoms, "ltlf")
        t = random_trace(rng, atoms, 2, 5)
        for i in range(len(t) - 1):
            assert ltl.satisfies(t, i, f) == ltl.satisfies(
                t, i + 1, ltl.progress(t[i], f))


def test_cosafe_closed_under_progression():
    import numpy as np
    rng = np.random.default_rng(13)
    for _ in range(300):
        f = random_formula(rng, 4, ("p", "q", "r"), "cosafe")
        a = A({x for x in ("p", "q", "r") if rng.random() < 0.5})
        assert ltl.is_cosafe(ltl.progress(a, f))


# ---------------------------------------------------------------------------
# simplify

def test_simplify_identity_and_idempotence():
    assert ltl.simplify(And(TRUE, P)) == P
    assert ltl.simplify(Or(Q, Or(P, Q))) == Or(P, Q)
    assert ltl.simplify(Not(Not(P))) == P
    assert ltl.simplify(And(P, FALSE)) == FALSE
    assert ltl.simplify(And(P, Not(P))) == FALSE
    # x | !x is *not* rewritten to true: a residue may only become `true`
    # through an actually witnessed position
    assert ltl.simplify(Or(P, Not(P))) == Or(P, Not(P))
    assert ltl.simplify(Until(P, FALSE)) == FALSE
    assert ltl.simplify(Until(FALSE, Q)) == Q
    assert ltl.simplify(Until(P, TRUE)) == TRUE
    assert ltl.simplify(Until(TRUE, Q)) == Eventually(Q)
    assert ltl.simplify(Until(P, P)) == P


def test_simplify_commutative_canonical_form():
    assert ltl.simplify(And(Q, P)) == ltl.simplify(And(P, Q))
    assert ltl.simplify(Or(And(Q, P), And(P, Q))) == ltl.simplify(And(P, Q))


def test_simplify_preserves_finite_trace_semantics():
    import numpy as np
    rng = np.random.default_rng(17)
    atoms = ("p", "q")
    for _ in range(250):
        f = random_formula(rng, 3, atoms, "ltlf")
        g = ltl.simplify(f)
        for n in range(1, 5):
            assert (truth_table(f, atoms, n) == truth_table(g, atoms, n)).all()


def test_simplify_idempotent():
    import numpy as np
    rng = np.random.default_rng(19)
    for _ in range(300):
        f = ltl.simplify(random_formula(rng, 4, ("p", "q", "r"), "ltlf"))
        assert ltl.simplify(f) == f


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_simplify_semantics_hypothesis(seed):
    import numpy as np
    rng = np.random.default_rng(seed)
    f = random_formula(rng, 4, ("p", "q"), "ltlf")
    g = ltl.simplify(f)
    n = int(rng.integers(1, 5))
    assert (truth_table(f, ("p", "q"), n) == truth_table(g, ("p", "q"), n)).all()


# ---------------------------------------------------------------------------
# prefix property (co-safe satisfaction survives extension)

def test_prefix_property_sampled():
    import numpy as np
    rng = np.random.default_rng(23)
    atoms = ("p", "q", "r")
    found = 0
    while found < 200:
        f = random_formula(rng, 3, atoms, "cosafe")
        t = random_trace(rng, atoms, 1, 4)
        try:
            if not ltl.satisfies(t, 0, f):
                continue
        except IndexError:
            continue
        found += 1
        for _ in range(50):
            ext = t + random_trace(rng, atoms, 1, 4)
            assert ltl.satisfies(ext, 0, f)


# ---------------------------------------------------------------------------
# translation into the co-safe fragment

def test_translate_always():
    f = ltl.to_cosafe(Always(P))
    assert f == Until(P, And(Atom(LAST), P))
    assert ltl.is_cosafe(f)


def test_translate_atom_passthrough():
    assert ltl.to_cosafe(P) == P
    assert ltl.to_cosafe(Not(P)) == Not(P)


def test_translate_weaknext_expansion():
    # weak next holds at the end-of-trace marker or via the successor
    f = ltl.to_cosafe(WeakNext(P))
    assert f == Or(Atom(LAST), Next(P))
    assert ltl.is_cosafe(f)


def test_translate_next_guards_the_marker():
    f = ltl.to_cosafe(Next(P))
    assert f == And(Not(Atom(LAST)), Next(P))
    assert ltl.is_cosafe(f)


def test_translate_rejects_compound_negation():
    with pytest.raises(LtlError):
        ltl.to_cosafe(Not(Eventually(P)))


def test_translate_output_always_cosafe():
    import numpy as np
    rng = np.random.default_rng(29)
    for _ in range(300):
        f = random_formula(rng, 4, ("p", "q"), "ltlf")
        assert ltl.is_cosafe(ltl.to_cosafe(f))


def _extensions_for(rng, atoms, count):
    """Falsifier candidates: empty flood, single-atom floods, random."""
    exts = [tuple(frozenset() for _ in range(5))]
    for a in atoms:
        exts.append(tuple(frozenset({a}) for _ in range(5)))
    for _ in range(count):
        exts.append(random_trace(rng, atoms, 1, 5))
    return exts


def test_finite_truth_matches_cosafe_translation_sampled():
    # f holds on the finite trace iff every extension of the marked trace
    # satisfies the translation; a false case must yield a falsifying
    # extension among the candidates.
    import numpy as np
    rng = np.random.default_rng(31)
    atoms = ("p", "q")
    for _ in range(300):
        f = random_formula(rng, 3, atoms, "ltlf")
        t = random_trace(rng, atoms, 1, 4)
        marked = ltl.inject_last(t)
        lhs = ltl.satisfies(marked, 0, f)
        tau = ltl.to_cosafe(f)
        verdicts = [ltl.satisfies(marked + e, 0, tau)
                    for e in _extensions_for(rng, atoms, 20)]
        if lhs:
            assert all(verdicts)
        else:
            assert not all(verdicts)


# ---------------------------------------------------------------------------
# specification files

def test_parse_spec_lines():
    text = """
# curriculum for the desk runs
F (got_wood & F used_toolshed)

F got_grass  # trailing comment
"""
    specs = ltl.parse_spec_lines(text)
    assert specs == [
        Eventually(And(Atom("got_wood"), Eventually(Atom("used_toolshed")))),
        Eventually(Atom("got_grass")),
    ]


def test_parse_spec_lines_reports_line():
    with pytest.raises(LtlSyntaxError) as exc:
        ltl.parse_spec_lines("F p\np U\n")
    assert "line 2" in str(exc.value)


def test_inject_last():
    t = ltl.inject_last((A({"p"}), A()))
    assert t == (A({"p"}), A({LAST}))
    with pytest.raises(ValueError):
        ltl.inject_last(())
