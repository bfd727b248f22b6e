from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import DAG3, LOOP4, R1, arcs
from premlog.core import ExtremaConstraint, Interpretation, Relation, SortError
from premlog.corpus import generate_graph, shortest_path_program
from premlog.engine import (
    FIXPOINT, ITERATION_CAP, NAIVE, SEMINAIVE, EvalError, EvalOptions, IterationCapError,
    evaluate, immediate_consequence, verify_fixpoint,
)
from premlog.parser import parse_program

ENGINES = [NAIVE, SEMINAIVE]


@pytest.mark.parametrize("engine", ENGINES)
def test_pushed_shortest_paths_on_a_cycle(engine, r2):
    res = evaluate(r2.with_facts({"arc": arcs(LOOP4)}), EvalOptions(engine=engine))
    assert res.status == FIXPOINT
    # a->b 1, a->b->c 3, a->b->c->a 4
    assert res.relation("shortestpath").tuples == {("a", "b", 1), ("a", "c", 3), ("a", "a", 4)}
    assert res.iterations == 3


@pytest.mark.parametrize("engine", ENGINES)
def test_unpushed_program_on_a_dag(engine, r1):
    res = evaluate(r1.with_facts({"arc": arcs(DAG3)}), EvalOptions(engine=engine))
    assert res.relation("path").tuples == {("a", "b", 1), ("b", "c", 2), ("a", "c", 5),
                                           ("a", "c", 3)}
    assert res.relation("shortestpath").tuples == {("a", "b", 1), ("a", "c", 3)}


@pytest.mark.parametrize("engine", ENGINES)
def test_unpushed_program_on_a_cycle_hits_the_cap(engine, r1):
    p = r1.with_facts({"arc": arcs({("a", "b", 1), ("b", "a", 1)})})
    res = evaluate(p, EvalOptions(engine=engine, max_iterations=25))
    assert res.status == ITERATION_CAP and res.iterations == 25
    with pytest.raises(IterationCapError) as err:
        evaluate(p, EvalOptions(engine=engine, max_iterations=25, strict=True))
    assert err.value.result.status == ITERATION_CAP


def test_iteration_counts_line_up_between_engines():
    p = parse_program(R1).with_facts({"arc": arcs({("a", "b", 1), ("b", "a", 1)})})
    for cap in (1, 2, 7):
        a = evaluate(p, EvalOptions(engine=NAIVE, max_iterations=cap))
        b = evaluate(p, EvalOptions(engine=SEMINAIVE, max_iterations=cap))
        assert a.interpretation == b.interpretation


@pytest.mark.parametrize("engine", ENGINES)
def test_stratified_negation(engine):
    p = parse_program("""
        reach(X) :- start(X).
        reach(Y) :- reach(X), e(X, Y).
        unreached(X) :- node(X), not reach(X).
        start(a). e(a, b). e(b, a). e(c, d).
        node(a). node(b). node(c). node(d).
    """)
    res = evaluate(p, EvalOptions(engine=engine))
    assert res.relation("unreached").tuples == {("c",), ("d",)}


@pytest.mark.parametrize("engine", ENGINES)
def test_non_linear_recursion_with_push(engine):
    p = parse_program("""
        sp(X, Y, D) :- e(X, Y, D).
        sp(X, Y, D) :- sp(X, Z, D1), sp(Z, Y, D2), D = D1 + D2, is_min((X, Y), D).
        e(a, b, 1). e(b, c, 1). e(c, d, 1). e(a, d, 5). e(d, a, 1).
    """)
    res = evaluate(p, EvalOptions(engine=engine))
    got = {t[:2]: t[2] for t in res.relation("sp")}
    assert got[("a", "d")] == 3 and got[("d", "c")] == 3 and got[("a", "a")] == 4


@pytest.mark.parametrize("engine", ENGINES)
def test_mixed_predicate_and_non_prem_push(engine):
    p = parse_program("p(X, D2) :- p(X, D), D2 = 10 - D, is_min((X), D2).\np(a, 1). p(a, 3).")
    res = evaluate(p, EvalOptions(engine=engine))
    assert res.relation("p").tuples == {("a", 1)}


@pytest.mark.parametrize("engine", ENGINES)
def test_rational_costs(engine, r2):
    p = r2.with_facts({"arc": arcs({("a", "b", Fraction(1, 2)), ("b", "c", Fraction(1, 3)),
                                    ("a", "c", 1)})})
    res = evaluate(p, EvalOptions(engine=engine))
    assert ("a", "c", Fraction(5, 6)) in res.relation("shortestpath")


@pytest.mark.parametrize("engine", ENGINES)
def test_sort_errors_surface(engine):
    with pytest.raises(SortError):
        evaluate(parse_program("q(a). q(1). p(X) :- q(X), X < 3."), EvalOptions(engine=engine))
    with pytest.raises(SortError):
        evaluate(parse_program("q(a). p(Y) :- q(X), Y = X + 1."), EvalOptions(engine=engine))
    with pytest.raises(EvalError):
        evaluate(parse_program("q(0). p(Y) :- q(X), Y = 4 / X."), EvalOptions(engine=engine))


def test_symbols_order_lexicographically():
    res = evaluate(parse_program("q(a). q(b). p(X) :- q(X), q(Y), X < Y."))
    assert res.relation("p").tuples == {("a",)}


def test_push_disabled_ignores_pushed_constraints(r2):
    p = r2.with_facts({"arc": arcs(DAG3)})
    res = evaluate(p, EvalOptions(push_enabled=False))
    assert ("a", "c", 5) in res.relation("shortestpath")


def test_immediate_consequence_is_one_step():
    p = parse_program("path(X,Y,D) :- path(X,Z,Dxz), arc(Z,Y,Dzy), D = Dxz + Dzy.")
    i = Interpretation({"path": Relation(3, {("a", "b", 1), ("a", "b", 5)}),
                        "arc": Relation(3, {("b", "c", 2)})})
    out = immediate_consequence(p.rules, i)
    assert out["path"].tuples == {("a", "c", 3), ("a", "c", 7)}


def test_trace_snapshots(r2):
    p = r2.with_facts({"arc": arcs(LOOP4)})
    res = evaluate(p, EvalOptions(trace_enabled=True))
    tr = res.traces[0]
    assert tr.scc == {"path"}
    first = tr.snapshots[0]
    assert first.pre["path"].tuples == LOOP4
    assert first.post["path"].tuples == LOOP4
    second = tr.snapshots[1]
    assert {("a", "c", 5), ("a", "c", 3)} <= second.pre["path"].tuples
    assert ("a", "c", 5) not in second.post["path"]
    assert [s.iteration for s in tr.snapshots] == list(range(res.iterations + 1))
    assert tr.snapshots[-1].post["path"] == res.relation("path")


def test_trace_matches_between_engines(r2):
    p = r2.with_facts({"arc": arcs(LOOP4)})
    a = evaluate(p, EvalOptions(engine=NAIVE, trace_enabled=True)).traces[0]
    b = evaluate(p, EvalOptions(engine=SEMINAIVE, trace_enabled=True)).traces[0]
    assert [s.post for s in a.snapshots] == [s.post for s in b.snapshots]


def test_conflicting_pushed_constraints_rejected():
    p = parse_program("""
        p(X, D) :- e(X, D).
        p(X, D) :- p(X, E), D = E + 1, is_min((X), D).
        p(X, D) :- p(X, E), D = E + 2, is_max((X), D).
    """)
    with pytest.raises(EvalError):
        evaluate(p)


def test_verify_fixpoint(r2):
    p = r2.with_facts({"arc": arcs(LOOP4)})
    res = evaluate(p)
    assert verify_fixpoint(p, res)
    partial = evaluate(parse_program(R1).with_facts({"arc": arcs(LOOP4)}),
                       EvalOptions(max_iterations=2))
    assert not verify_fixpoint(parse_program(R1).with_facts({"arc": arcs(LOOP4)}), partial)


def test_stats_reported(r2):
    res = evaluate(r2.with_facts({"arc": arcs(LOOP4)}))
    assert res.stats["derivations"] > 0
    assert res.stats["iterations_by_scc"]["path"] == 3
    assert res.stats["tuples"] == sum(len(r) for r in res.interpretation.values())


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(5, 60), st.integers(0, 10**6), st.booleans())
def test_engines_agree_on_random_graphs(n, pct, seed, acyclic):
    g = generate_graph(n, Fraction(pct, 100), (1, 9), seed=seed, acyclic=acyclic)
    p = parse_program(shortest_path_program("n0")).with_facts({"arc": g})
    a = evaluate(p, EvalOptions(engine=NAIVE))
    b = evaluate(p, EvalOptions(engine=SEMINAIVE))
    assert a.interpretation == b.interpretation
    assert a.iterations == b.iterations
    assert b.stats["derivations"] <= a.stats["derivations"]
    assert verify_fixpoint(p, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(10, 60), st.integers(0, 10**6))
def test_max_push_on_dags(n, pct, seed):
    g = generate_graph(n, Fraction(pct, 100), (1, 9), seed=seed, acyclic=True)
    post = parse_program(shortest_path_program("n0", pushed=False, kind="max"))
    pushed = parse_program(shortest_path_program("n0", kind="max"))
    a = evaluate(post.with_facts({"arc": g}))
    b = evaluate(pushed.with_facts({"arc": g}))
    assert a.relation("shortestpath") == b.relation("shortestpath")


def test_extrema_in_non_recursive_rule_over_its_head():
    p = parse_program("m(X, D) :- e(X, D), f(X), is_min((X), D).\ne(a, 1). e(a, 2). f(a).")
    g = p.rules[0].extrema()[0]
    assert g.target == "e" and not g.pushed
    assert evaluate(p).relation("m").tuples == {("a", 1)}


def test_head_constraint_without_covering_body_atom():
    p = parse_program("m(X, D) :- e(X, C), w(C, D), is_min((X), D).\n"
                      "e(a, 1). e(a, 2). w(1, 7). w(2, 3).")
    g = p.rules[0].extrema()[0]
    assert isinstance(g, ExtremaConstraint) and g.target == "m" and g.pushed
    assert evaluate(p).relation("m").tuples == {("a", 3)}
