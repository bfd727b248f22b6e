from fractions import Fraction

import pytest
from hypothesis import given, settings

from conftest import constrained_relations
from premlog.core import (
    Atom, BinOp, ConstraintError, Constant, ExtremaConstraint, Interpretation, Program,
    Relation, Rule, SortError, Variable, apply_gamma, check_value, gamma_on_interpretation,
    number, sort_key,
)


def test_numbers_normalise_to_int_when_integral():
    assert number(Fraction(6, 3)) == 2 and type(number(Fraction(6, 3))) is int
    assert number("0.25") == Fraction(1, 4)
    assert Constant(Fraction(4, 2)).value == 2


def test_values_must_be_symbols_or_exact_numbers():
    with pytest.raises((TypeError, ValueError)):
        check_value(1.5)
    with pytest.raises((TypeError, ValueError)):
        check_value(True)


def test_numbers_sort_before_symbols():
    vals = ["b", 3, "a", Fraction(1, 2), -1]
    assert sorted(vals, key=sort_key) == [-1, Fraction(1, 2), 3, "a", "b"]


def test_variables_are_uppercase_initial():
    Variable("Dxz")
    with pytest.raises(ValueError):
        Variable("x")


def test_division_by_constant_zero_rejected():
    with pytest.raises(ZeroDivisionError):
        BinOp("/", Variable("X"), Constant(0))


def test_extrema_validation():
    with pytest.raises(ValueError):
        ExtremaConstraint("avg", "p", 2, (Variable("X"),), Variable("D"), (0,), 1)
    with pytest.raises(ValueError):
        ExtremaConstraint("min", "p", 2, (Variable("X"),), Variable("X"), (0,), 1)
    with pytest.raises(ValueError):
        ExtremaConstraint("min", "p", 2, (Variable("X"),), Variable("D"), (0,), 0)
    with pytest.raises(ValueError):
        ExtremaConstraint("min", "p", 2, (Variable("X"),), Variable("D"), (0,), 2)


def test_for_atom_locates_columns():
    a = Atom("path", (Variable("X"), Variable("Y"), Variable("D")))
    g = ExtremaConstraint.for_atom("min", a, (Variable("Y"),), Variable("D"))
    assert g.column_map == ((1,), 2)
    with pytest.raises(ConstraintError):
        ExtremaConstraint.for_atom("min", a, (Variable("Q"),), Variable("D"))


def test_gamma_keeps_group_minimum_with_ties():
    g = ExtremaConstraint.over("min", "path", 3, (0, 1), 2)
    rel = Relation(3, {("a", "b", 1), ("a", "b", 5), ("a", "c", 3), ("a", "c", 3)})
    assert apply_gamma(g, rel).tuples == {("a", "b", 1), ("a", "c", 3)}
    ties = Relation(2, {("x", 1), ("y", 1), ("z", 2)})
    glob = ExtremaConstraint.over("min", "p", 2, (), 1)
    assert apply_gamma(glob, ties).tuples == {("x", 1), ("y", 1)}


def test_gamma_max_and_rationals():
    g = ExtremaConstraint.over("max", "p", 2, (0,), 1)
    rel = Relation(2, {("a", Fraction(1, 3)), ("a", Fraction(1, 2)), ("b", -2)})
    assert apply_gamma(g, rel).tuples == {("a", Fraction(1, 2)), ("b", -2)}


def test_gamma_on_symbol_cost_is_a_sort_error():
    g = ExtremaConstraint.over("min", "p", 2, (0,), 1)
    with pytest.raises(SortError):
        apply_gamma(g, Relation(2, {("a", 1), ("a", "x")}))
    with pytest.raises(SortError):
        apply_gamma(g, Relation(2, {("b", "x")}))


def test_gamma_arity_mismatch():
    g = ExtremaConstraint.over("min", "p", 2, (0,), 1)
    with pytest.raises(ConstraintError):
        apply_gamma(g, Relation(3, {("a", "b", 1)}))


def test_gamma_on_interpretation_touches_only_target():
    g = ExtremaConstraint.over("min", "p", 2, (0,), 1)
    i = Interpretation({"p": Relation(2, {("a", 1), ("a", 2)}), "q": Relation(1, {("z",)})})
    out = gamma_on_interpretation(g, i)
    assert out["p"].tuples == {("a", 1)}
    assert out["q"] == i["q"]


def test_interpretation_ignores_empty_relations():
    assert Interpretation({"p": Relation(2)}) == Interpretation()
    assert Interpretation().get_relation("nothing", 2).arity == 2


def test_relation_rejects_wrong_arity():
    with pytest.raises(Exception):
        Relation(2, {("a",)})


def test_program_predicate_classes():
    x = Variable("X")
    rules = (Rule(Atom("p", (x,)), (Atom("e", (x,)),)),)
    p = Program(rules, {"e": Relation(1, {("a",)}), "p": Relation(1, {("b",)})})
    assert p.idb_predicates() == {"p"}
    assert p.edb_predicates() == {"e"}
    assert p.mixed_predicates() == {"p"}


@settings(max_examples=200)
@given(constrained_relations())
def test_gamma_contracts(case):
    g, rel = case
    assert apply_gamma(g, rel).tuples <= rel.tuples


@settings(max_examples=200)
@given(constrained_relations())
def test_gamma_idempotent(case):
    g, rel = case
    once = apply_gamma(g, rel)
    assert apply_gamma(g, Relation(rel.arity, once.tuples)) == once


@settings(max_examples=200)
@given(constrained_relations())
def test_gamma_covers_every_group(case):
    g, rel = case

    def groups(r):
        return {tuple(t[c] for c in g.group_cols) for t in r}
    assert groups(apply_gamma(g, rel)) == groups(rel)


@settings(max_examples=200)
@given(constrained_relations())
def test_min_max_duality(case):
    g, rel = case
    flip = ExtremaConstraint.over("max" if g.kind == "min" else "min", g.target, g.arity,
                                  g.group_cols, g.cost_col)

    def neg(r):
        return Relation(r.arity, {t[:g.cost_col] + (-t[g.cost_col],) + t[g.cost_col + 1:]
                                  for t in r})
    assert apply_gamma(g, rel) == neg(apply_gamma(flip, neg(rel)))
