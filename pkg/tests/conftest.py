from fractions import Fraction

import pytest
from hypothesis import strategies as st

from premlog.core import ExtremaConstraint, Relation
from premlog.parser import parse_program

R1 = """\
path(X, Y, D) :- arc(X, Y, D).
path(X, Y, D) :- path(X, Z, Dxz), arc(Z, Y, Dzy), D = Dxz + Dzy.
shortestpath(X, Y, D) :- path(X, Y, D), X = a, is_min((X, Y), D).
"""

R2 = """\
path(X, Y, D) :- arc(X, Y, D).
path(X, Y, D) :- path(X, Z, Dxz), arc(Z, Y, Dzy), D = Dxz + Dzy, is_min((X, Y), D).
shortestpath(X, Y, D) :- path(X, Y, D), X = a.
"""

DAG3 = {("a", "b", 1), ("b", "c", 2), ("a", "c", 5)}
LOOP4 = {("a", "b", 1), ("b", "c", 2), ("c", "a", 1), ("a", "c", 5)}


def arcs(ts) -> Relation:
    return Relation(3, ts)


@pytest.fixture
def r1():
    return parse_program(R1)


@pytest.fixture
def r2():
    return parse_program(R2)


# -- strategies ----------------------------------------------------------------

symbols = st.sampled_from(["a", "b", "c", "d"])
numbers = st.one_of(
    st.integers(-5, 20),
    st.builds(Fraction, st.integers(-20, 40), st.integers(1, 6)).map(
        lambda q: int(q) if q.denominator == 1 else q),
)
values = st.one_of(symbols, numbers)


@st.composite
def constrained_relations(draw, max_arity=4, max_size=25):
    """A relation with a randomly placed extrema constraint over it."""
    arity = draw(st.integers(1, max_arity))
    cost_col = draw(st.integers(0, arity - 1))
    others = [c for c in range(arity) if c != cost_col]
    group_cols = tuple(draw(st.permutations(others))[:draw(st.integers(0, len(others)))])
    kind = draw(st.sampled_from(["min", "max"]))
    gamma = ExtremaConstraint.over(kind, "q", arity, group_cols, cost_col)
    rows = draw(st.lists(
        st.tuples(*[numbers if c == cost_col else values for c in range(arity)]),
        max_size=max_size))
    return gamma, Relation(arity, rows)


_ARITY = {"p": 2, "q": 2, "r": 3, "s": 1}
_VARS = ["X", "Y", "Z", "W"]
_CONSTS = ["a", "b", "1", "2.5", "1/3", '"two words"', "-3", "0"]


@st.composite
def program_texts(draw):
    """Program text that is safe by construction (stratification not guaranteed)."""
    lines = []
    for _ in range(draw(st.integers(0, 4))):
        atoms = []
        bound = []
        for _ in range(draw(st.integers(1, 3))):
            pred = draw(st.sampled_from(sorted(_ARITY)))
            args = [draw(st.sampled_from(_VARS + _CONSTS[:3])) for _ in range(_ARITY[pred])]
            atoms.append(f"{pred}({', '.join(args)})")
            bound.extend(a for a in args if a[0].isupper() and a not in bound)
        body = list(atoms)
        terms = bound + _CONSTS
        if bound and draw(st.booleans()):
            op = draw(st.sampled_from(["<", "<=", "!=", ">", ">=", "="]))
            lhs = draw(st.sampled_from(bound))
            rhs = draw(st.sampled_from(terms))
            if draw(st.booleans()):
                rhs = f"{rhs} {draw(st.sampled_from(['+', '-', '*']))} {draw(st.sampled_from(terms))}"
            body.append(f"{lhs} {op} {rhs}")
        if bound and draw(st.booleans()):
            expr = " - ".join(draw(st.lists(st.sampled_from(bound), min_size=1, max_size=3)))
            body.append(f"D = ({expr}) * 2")
            bound.append("D")
        if bound and draw(st.booleans()):
            pred = draw(st.sampled_from(sorted(_ARITY)))
            args = [draw(st.sampled_from(bound + _CONSTS[:2])) for _ in range(_ARITY[pred])]
            body.append(f"not {pred}({', '.join(args)})")
        first_vars = []
        for a in atoms[0][atoms[0].index("(") + 1:-1].split(", "):
            if a[0].isupper() and a not in first_vars:
                first_vars.append(a)
        if len(first_vars) >= 1 and draw(st.booleans()):
            cost = first_vars[-1]
            groups = first_vars[:-1][:draw(st.integers(0, len(first_vars) - 1))]
            kind = draw(st.sampled_from(["is_min", "is_max"]))
            body.append(f"{kind}(({', '.join(groups)}), {cost})")
        head_pred = draw(st.sampled_from(sorted(_ARITY)))
        head = [draw(st.sampled_from(bound + _CONSTS[:2])) for _ in range(_ARITY[head_pred])]
        lines.append(f"{head_pred}({', '.join(head)}) :- {', '.join(body)}.")
    for _ in range(draw(st.integers(0, 4))):
        pred = draw(st.sampled_from(sorted(_ARITY)))
        args = [draw(st.sampled_from(_CONSTS)) for _ in range(_ARITY[pred])]
        lines.append(f"{pred}({', '.join(args)}).")
    return "\n".join(lines) + "\n"
