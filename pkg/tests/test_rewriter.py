from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import R1, R2
from premlog.analysis import stratify
from premlog.core import Atom, Comparison, ExtremaConstraint, Negation, Variable
from premlog.corpus import generate_graph, shortest_path_program
from premlog.engine import evaluate
from premlog.parser import format_program, parse_program
from premlog.rewriter import (
    AUX_PREFIX, RewriteError, negation_encoding, negation_plan, post_constraints, push_equality,
    push_extrema, push_plan, pushed_constraints, same_up_to_literal_order, transfer_out,
)

NEG_SHAPE = """\
path(X, Y, D) :- arc(X, Y, D).
path(X, Y, D) :- path(X, Z, Dxz), arc(Z, Y, Dzy), D = Dxz + Dzy.
shortestpath(X, Y, D) :- path(X, Y, D), X = a, not betterpath(X, Y, D).
betterpath(X, Y, D) :- path(X, Y, D), path(X, Y, Dxy), Dxy < D.
"""


def gamma_of(p):
    ((_, g),) = post_constraints(p)
    return g


def test_push_turns_r1_into_r2(r1, r2):
    assert push_extrema(gamma_of(r1), r1) == r2


def test_push_plan_lists_changes(r1):
    plan = push_plan(gamma_of(r1), r1)
    assert plan.pushed and len(plan.changes) == 2
    assert any(line.startswith("+ path") for line in plan.describe())


def test_transfer_out_turns_r2_into_r1(r1, r2):
    assert transfer_out(r2) == r1


def test_round_trip_up_to_literal_order(r1):
    shuffled = parse_program(R1.replace("X = a, is_min((X, Y), D)", "is_min((X, Y), D), X = a"))
    back = transfer_out(push_extrema(gamma_of(shuffled), shuffled))
    assert same_up_to_literal_order(back, shuffled)


def test_transfer_out_needs_a_pushed_constraint(r1):
    with pytest.raises(RewriteError):
        transfer_out(r1)


def test_negation_encoding_shape(r1):
    out = negation_encoding(gamma_of(r1), r1)
    aux = AUX_PREFIX + "path"
    expected = parse_program(NEG_SHAPE.replace("betterpath", aux))
    assert out == expected
    assert not any(r.extrema() for r in out.rules)
    stratify(out)


def test_negation_encoding_for_max_flips_comparison(r1):
    p = parse_program(R1.replace("is_min", "is_max"))
    out = negation_encoding(gamma_of(p), p)
    aux = out.rules[-1]
    assert aux.body[-1] == Comparison(Variable("Dxy"), ">", Variable("D"))


def test_negation_encoding_without_extrema_is_identity():
    p = parse_program("p(X) :- q(X).")
    g = ExtremaConstraint.over("min", "q", 2, (0,), 1)
    assert negation_encoding(g, p) == p


def test_negation_encoding_refuses_recursive_rules(r2):
    ((_, g),) = pushed_constraints(r2)
    with pytest.raises(RewriteError):
        negation_encoding(g, r2)


def test_negation_encoding_extra_columns_and_fresh_names():
    p = parse_program("best(G, D) :- cost(G, W, D), Dg = D, is_min((G), D).")
    plan = negation_plan(gamma_of(p), p)
    aux = plan.program.rules[-1]
    # Dg is taken, so the rival cost variable gets a suffix; W is renamed apart
    assert aux.body[1].args[2] == Variable("Dg2")
    assert aux.body[1].args[1] != Variable("W")
    assert isinstance(plan.program.rules[0].body[-1], Negation)


def test_negation_encoding_agrees_with_extrema(r1):
    g = generate_graph(8, Fraction(3, 10), (1, 9), seed=5, acyclic=True)
    p = parse_program(shortest_path_program("n0", pushed=False)).with_facts({"arc": g})
    enc = negation_encoding(gamma_of(p), p)
    assert evaluate(p).relation("shortestpath") == evaluate(enc).relation("shortestpath")


def test_push_without_recursion_attaches_to_all_rules():
    p = parse_program("q(X, D) :- e(X, D).\nq(X, D) :- f(X, D).\n"
                      "best(X, D) :- q(X, D), is_min((X), D).\n"
                      "e(a, 3). f(a, 1). f(b, 2).")
    out = push_extrema(gamma_of(p), p)
    assert all(r.extrema() and r.extrema()[0].pushed for r in out.rules[:2])
    assert evaluate(out).relation("best") == evaluate(p).relation("best")


def test_push_errors(r1):
    g = ExtremaConstraint.over("min", "nothing", 2, (0,), 1)
    with pytest.raises(RewriteError):
        push_extrema(g, r1)
    two_readers = parse_program(R1 + "other(X) :- path(X, Y, D).\n")
    with pytest.raises(RewriteError):
        push_extrema(gamma_of(two_readers), two_readers)
    with pytest.raises(RewriteError):
        push_extrema(gamma_of(r1), push_extrema(gamma_of(r1), r1).with_rules(
            push_extrema(gamma_of(r1), r1).rules + r1.rules[2:]))


def test_push_equality_specialises_exit_rule(r2):
    out = push_equality(Variable("X"), "a", r2)
    x, y, z, d = (Variable(n) for n in "XYZD")
    from premlog.core import Constant
    a = Constant("a")
    assert out.rules[0].head == Atom("path", (a, y, d))
    assert out.rules[0].body == (Atom("arc", (a, y, d)),)
    assert out.rules[1] == r2.rules[1]
    assert out.rules[2].body == (Atom("path", (x, y, d)),)


def test_push_equality_refuses_recomputed_column(r2):
    p = parse_program(R2.replace("X = a", "D = 3"))
    with pytest.raises(RewriteError, match="unsound"):
        push_equality(Variable("D"), 3, p)


def test_push_equality_refuses_non_linear_recursion():
    p = parse_program("""
        sp(X, Y, D) :- e(X, Y, D).
        sp(X, Y, D) :- sp(X, Z, D1), sp(Z, Y, D2), D = D1 + D2, is_min((X, Y), D).
        q(X, Y, D) :- sp(X, Y, D), X = a.
    """)
    with pytest.raises(RewriteError):
        push_equality(Variable("X"), "a", p)


def test_rewrites_leave_facts_alone(r1):
    p = r1.with_facts({"arc": generate_graph(5, Fraction(1, 2), seed=1)})
    for out in (push_extrema(gamma_of(p), p), negation_encoding(gamma_of(p), p),
                transfer_out(push_extrema(gamma_of(p), p))):
        assert out.facts == p.facts


def test_rewritten_programs_format_and_reparse(r1):
    out = negation_encoding(gamma_of(r1), r1)
    assert parse_program(format_program(out)) == out


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 15), st.integers(5, 50), st.integers(0, 10**6), st.booleans())
def test_push_equality_matches_filtering(n, pct, seed, acyclic):
    g = generate_graph(n, Fraction(pct, 100), (1, 9), seed=seed, acyclic=acyclic)
    full = parse_program(shortest_path_program("n0")).with_facts({"arc": g})
    special = push_equality(Variable("X"), "n0", full)
    assert evaluate(special).relation("shortestpath") == evaluate(full).relation("shortestpath")
