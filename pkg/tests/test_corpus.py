from fractions import Fraction

import pytest

from premlog.analysis import StratificationError, stratify
from premlog.cli import _pushed, _unpushed
from premlog.corpus import (
    TAGS, SplitMix64, fixture, generate_graph, load_manifest, shortest_path_program,
)
from premlog.engine import FIXPOINT, ITERATION_CAP, EvalOptions, evaluate
from premlog.parser import format_program, parse_program
from premlog.premcheck import check_run
from premlog.reference import final_predicates

FIXTURES = load_manifest()
IDS = [f.name for f in FIXTURES]


def test_splitmix_known_values():
    rng = SplitMix64(0)
    assert rng.next() == 0xE220A8397B1DCDAF
    assert rng.next() == 0x6E789E6AA1B965F4


def test_generator_is_deterministic():
    a = generate_graph(20, Fraction(1, 5), seed=7)
    assert a == generate_graph(20, "0.2", seed=7)
    assert a != generate_graph(20, Fraction(1, 5), seed=8)


def test_generator_edge_cases():
    assert len(generate_graph(1, 1)) == 0
    assert len(generate_graph(4, 1)) == 12
    dag = generate_graph(12, 1, seed=3, acyclic=True)
    assert all(int(x[1:]) < int(y[1:]) for x, y, _ in dag)
    assert all(1 <= c <= 20 for _, _, c in generate_graph(10, "0.5", seed=1))
    for bad in (dict(nodes=0, density=1), dict(nodes=3, density=0),
                dict(nodes=3, density=2), dict(nodes=3, density=1, cost_range=(0, 2)),
                dict(nodes=3, density=1, cost_range=(5, 2))):
        with pytest.raises(ValueError):
            generate_graph(**bad)


def test_fractional_cost_range():
    g = generate_graph(6, 1, (Fraction(1, 2), 1), seed=2)
    assert all(Fraction(1, 2) <= c <= 1 and (c * 200).denominator == 1 for _, _, c in g)


def test_shortest_path_program_forms():
    post = parse_program(shortest_path_program("a", pushed=False))
    pushed = parse_program(shortest_path_program("a"))
    assert format_program(_pushed(post)) == format_program(pushed)
    assert parse_program(shortest_path_program(None)).rules[2].body[1:] == ()


def test_manifest_is_well_formed():
    names = [f.name for f in FIXTURES]
    assert len(names) == len(set(names))
    for f in FIXTURES:
        assert set(f.tags) <= set(TAGS)
        assert f.expect in ("ok", "diverges", "unstratifiable")
    with pytest.raises(KeyError):
        fixture("no-such-fixture")


@pytest.mark.parametrize("fx", FIXTURES, ids=IDS)
def test_fixture_round_trips(fx):
    p = parse_program(fx.text)
    assert parse_program(format_program(p)) == p


@pytest.mark.parametrize("fx", FIXTURES, ids=IDS)
def test_fixture_expectation(fx):
    p = fx.program()
    if fx.expect == "unstratifiable":
        with pytest.raises(StratificationError):
            stratify(p)
        return
    res = evaluate(p, EvalOptions(max_iterations=40))
    assert res.status == (ITERATION_CAP if fx.expect == "diverges" else FIXPOINT)


def _tagged(tag):
    return [pytest.param(f, id=f.name) for f in FIXTURES if tag in f.tags]


@pytest.mark.parametrize("fx", _tagged("prem-holds"))
def test_prem_holds_tag(fx):
    p = fx.program()
    report = check_run(_pushed(p))
    assert report.holds and report.steps
    q = final_predicates(p)[0]
    unpushed = evaluate(_unpushed(p), EvalOptions(max_iterations=fx.node_count() + 2))
    if unpushed.status == FIXPOINT:
        assert evaluate(_pushed(p)).relation(q) == unpushed.relation(q)


@pytest.mark.parametrize("fx", _tagged("iprem"))
def test_iprem_tag(fx):
    assert all(s.iprem_holds for s in check_run(_pushed(fx.program())).steps)


@pytest.mark.parametrize("fx", _tagged("rprem"))
def test_rprem_tag(fx):
    assert all(s.rprem_holds for s in check_run(_pushed(fx.program())).steps)


@pytest.mark.parametrize("fx", _tagged("non-prem"))
def test_non_prem_tag(fx):
    p = fx.program()
    assert not check_run(_pushed(p)).holds
    finals = final_predicates(p)
    if finals:
        q = finals[0]
        assert evaluate(_pushed(p)).relation(q) != evaluate(_unpushed(p)).relation(q)


@pytest.mark.parametrize("fx", _tagged("diverges-unpushed"))
def test_diverges_unpushed_tag(fx):
    p = fx.program()
    n = fx.node_count()
    assert evaluate(_unpushed(p), EvalOptions(max_iterations=8)).status == ITERATION_CAP
    res = evaluate(_pushed(p), EvalOptions(max_iterations=n + 1))
    assert res.status == FIXPOINT and res.iterations <= n + 1
