"""Intermediate representation for programs, relations and interpretations.

Constants are plain Python values: ``str`` for symbols and ``int`` or
``fractions.Fraction`` for numbers.  Integral rationals are always stored as
``int`` so that hashing and equality agree across both representations.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Union

Value = Union[str, int, Fraction]

MIN = "min"
MAX = "max"

CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")
ARITH_OPS = ("+", "-", "*", "/")


class DatalogError(Exception):
    """Base class for all errors raised by this package."""


class SortError(DatalogError):
    """A symbol was used where a number was required, or sorts were mixed."""


class ConstraintError(DatalogError):
    """An extrema constraint could not be applied to a relation."""


class ArityError(DatalogError):
    pass


def number(x) -> Value:
    """Normalise an int/Fraction/decimal string to the canonical numeric value."""
    if isinstance(x, bool):
        raise TypeError("booleans are not Datalog numbers")
    if isinstance(x, int):
        return x
    if isinstance(x, float):
        raise TypeError("floats are not exact; pass a Fraction or a decimal string")
    q = Fraction(x)
    return q.numerator if q.denominator == 1 else q


def is_number(v) -> bool:
    return type(v) is int or type(v) is Fraction


def check_value(v) -> Value:
    if type(v) is str or is_number(v):
        return v
    raise TypeError(f"not a Datalog constant: {v!r}")


def sort_key(v: Value):
    """Canonical order: numbers first (by value), then symbols (lexicographic)."""
    if type(v) is str:
        return (1, 0, v)
    return (0, v, "")


def tuple_key(t: tuple) -> tuple:
    return tuple(sort_key(v) for v in t)


# -- terms and expressions ----------------------------------------------------

_VAR_RE = re.compile(r"[A-Z][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Variable:
    name: str

    def __post_init__(self):
        if not _VAR_RE.match(self.name):
            raise ValueError(f"invalid variable name {self.name!r}")

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Constant:
    value: Value

    def __post_init__(self):
        v = self.value
        if type(v) is not str:
            object.__setattr__(self, "value", number(v))


Term = Union[Variable, Constant]


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "ArithExpr"
    right: "ArithExpr"

    def __post_init__(self):
        if self.op not in ARITH_OPS:
            raise ValueError(f"unknown arithmetic operator {self.op!r}")
        if self.op == "/" and isinstance(self.right, Constant) and self.right.value == 0:
            raise ZeroDivisionError("division by the constant zero")


ArithExpr = Union[Variable, Constant, BinOp]


def expr_vars(e: ArithExpr) -> Iterator[Variable]:
    if isinstance(e, Variable):
        yield e
    elif isinstance(e, BinOp):
        yield from expr_vars(e.left)
        yield from expr_vars(e.right)


# -- literals -----------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[Term, ...] = ()
    span: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    @property
    def arity(self) -> int:
        return len(self.args)

    def variables(self) -> Iterator[Variable]:
        return (a for a in self.args if isinstance(a, Variable))

    def is_ground(self) -> bool:
        return all(isinstance(a, Constant) for a in self.args)


@dataclass(frozen=True)
class Negation:
    atom: Atom
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Comparison:
    lhs: ArithExpr
    op: str
    rhs: ArithExpr
    span: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class Binding:
    var: Variable
    expr: ArithExpr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ExtremaConstraint:
    """``is_min``/``is_max`` over one predicate.

    ``group_cols``/``cost_col`` locate the group-by and cost variables inside
    the target atom.  ``pushed`` marks a constraint that sits inside recursion
    (its target is the head of a recursive rule).
    """

    kind: str
    target: str
    arity: int
    group_by: tuple[Variable, ...]
    cost: Variable
    group_cols: tuple[int, ...]
    cost_col: int
    pushed: bool = False
    span: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "group_by", tuple(self.group_by))
        object.__setattr__(self, "group_cols", tuple(self.group_cols))
        if self.kind not in (MIN, MAX):
            raise ValueError(f"extrema kind must be 'min' or 'max', got {self.kind!r}")
        if self.cost in self.group_by:
            raise ValueError("cost variable must not be a group-by variable")
        if len(self.group_by) != len(self.group_cols):
            raise ValueError("group_by and group_cols differ in length")
        cols = self.group_cols + (self.cost_col,)
        if len(set(cols)) != len(cols):
            raise ValueError("column_map positions must be distinct")
        if any(not 0 <= c < self.arity for c in cols):
            raise ValueError("column_map position outside target arity")

    @classmethod
    def over(cls, kind: str, target: str, arity: int, group_cols: Iterable[int],
             cost_col: int, pushed: bool = False) -> "ExtremaConstraint":
        """Build a constraint from column positions alone, with generated variable names."""
        group_cols = tuple(group_cols)
        return cls(kind, target, arity, tuple(Variable(f"G{c}") for c in group_cols),
                   Variable(f"C{cost_col}"), group_cols, cost_col, pushed)

    @classmethod
    def for_atom(cls, kind: str, atom: Atom, group_by: Iterable[Variable], cost: Variable,
                 pushed: bool = False) -> "ExtremaConstraint":
        """Resolve column positions of ``group_by``/``cost`` in ``atom``'s arguments."""
        group_by = tuple(group_by)
        args = list(atom.args)
        try:
            cols = tuple(args.index(v) for v in group_by)
            cost_col = args.index(cost)
        except ValueError:
            raise ConstraintError(
                f"extrema variables do not all occur in {atom.predicate}/{atom.arity}") from None
        return cls(kind, atom.predicate, atom.arity, group_by, cost, cols, cost_col, pushed)

    @property
    def column_map(self) -> tuple[tuple[int, ...], int]:
        return self.group_cols, self.cost_col

    @property
    def signature(self) -> tuple:
        """What the constraint does to a relation, independent of variable names."""
        return (self.kind, self.target, self.arity, self.group_cols, self.cost_col)

    def variables(self) -> tuple[Variable, ...]:
        return self.group_by + (self.cost,)

    def with_pushed(self, pushed: bool) -> "ExtremaConstraint":
        return ExtremaConstraint(self.kind, self.target, self.arity, self.group_by, self.cost,
                                 self.group_cols, self.cost_col, pushed)


Literal = Union[Atom, Negation, Comparison, Binding, ExtremaConstraint]


def literal_vars(lit: Literal) -> Iterator[Variable]:
    if isinstance(lit, Atom):
        yield from lit.variables()
    elif isinstance(lit, Negation):
        yield from lit.atom.variables()
    elif isinstance(lit, Comparison):
        yield from expr_vars(lit.lhs)
        yield from expr_vars(lit.rhs)
    elif isinstance(lit, Binding):
        yield lit.var
        yield from expr_vars(lit.expr)
    elif isinstance(lit, ExtremaConstraint):
        yield from lit.variables()


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Literal, ...]
    span: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))

    def positive_atoms(self) -> list[Atom]:
        return [lit for lit in self.body if isinstance(lit, Atom)]

    def body_predicates(self) -> set[str]:
        preds = set()
        for lit in self.body:
            if isinstance(lit, Atom):
                preds.add(lit.predicate)
            elif isinstance(lit, Negation):
                preds.add(lit.atom.predicate)
        return preds

    def extrema(self) -> list[ExtremaConstraint]:
        return [lit for lit in self.body if isinstance(lit, ExtremaConstraint)]

    def without(self, lit: Literal) -> "Rule":
        body = list(self.body)
        body.remove(lit)
        return Rule(self.head, tuple(body), self.span)

    def with_literal(self, lit: Literal) -> "Rule":
        return Rule(self.head, self.body + (lit,), self.span)


# -- relations ----------------------------------------------------------------


class Relation:
    """An immutable finite set of constant tuples of one arity."""

    __slots__ = ("arity", "tuples", "_cache")

    def __init__(self, arity: int, tuples: Iterable[tuple] = ()):
        ts = frozenset(tuple(t) for t in tuples)
        for t in ts:
            if len(t) != arity:
                raise ArityError(f"tuple {t!r} does not have arity {arity}")
            for v in t:
                check_value(v)
        self.arity = arity
        self.tuples = ts
        self._cache = {}

    @classmethod
    def _trusted(cls, arity: int, tuples: frozenset) -> "Relation":
        rel = cls.__new__(cls)
        rel.arity = arity
        rel.tuples = tuples
        rel._cache = {}
        return rel

    def __iter__(self):
        return iter(self.tuples)

    def __len__(self):
        return len(self.tuples)

    def __contains__(self, t):
        return tuple(t) in self.tuples

    def __eq__(self, other):
        if not isinstance(other, Relation):
            return NotImplemented
        return self.tuples == other.tuples and (self.arity == other.arity or not self.tuples)

    def __hash__(self):
        return hash(self.tuples)

    def __le__(self, other: "Relation"):
        return self.tuples <= other.tuples

    def __repr__(self):
        return f"Relation({self.arity}, {self.sorted()!r})"

    def sorted(self) -> list[tuple]:
        return sorted(self.tuples, key=tuple_key)

    def union(self, other: "Relation") -> "Relation":
        return Relation._trusted(self.arity, self.tuples | other.tuples)

    def index(self, cols: tuple[int, ...]) -> dict:
        """Hash index on ``cols`` (single value key for one column); cached."""
        key = ("index", cols)
        idx = self._cache.get(key)
        if idx is None:
            idx = {}
            if len(cols) == 1:
                c = cols[0]
                for t in self.tuples:
                    idx.setdefault(t[c], []).append(t)
            else:
                for t in self.tuples:
                    idx.setdefault(tuple(t[c] for c in cols), []).append(t)
            self._cache[key] = idx
        return idx


def _group_key(cols: tuple[int, ...]):
    if not cols:
        return lambda t: ()
    return operator.itemgetter(*cols)


def apply_gamma(gamma: ExtremaConstraint, rel: Relation) -> Relation:
    """Keep the tuples whose cost is the group-wise extremum (ties kept)."""
    if rel.arity != gamma.arity:
        raise ConstraintError(
            f"{gamma.target} has arity {gamma.arity} but relation has arity {rel.arity}")
    key = ("gamma", gamma.signature)
    cached = rel._cache.get(key)
    if cached is not None:
        return cached
    gk, cc = _group_key(gamma.group_cols), gamma.cost_col
    best: dict = {}
    get = best.get
    try:
        if gamma.kind == MIN:
            for t in rel.tuples:
                c = t[cc]
                g = gk(t)
                b = get(g)
                if b is None or c < b:
                    best[g] = c
        else:
            for t in rel.tuples:
                c = t[cc]
                g = gk(t)
                b = get(g)
                if b is None or c > b:
                    best[g] = c
    except TypeError:
        raise SortError(f"non-numeric cost in {gamma.target}") from None
    if any(type(c) is str for c in best.values()):
        raise SortError(f"non-numeric cost in {gamma.target}")
    out = frozenset(t for t in rel.tuples if best[gk(t)] == t[cc])
    result = Relation._trusted(rel.arity, out)
    rel._cache[key] = result
    result._cache[key] = result
    return result


# -- interpretations ----------------------------------------------------------


class Interpretation(Mapping):
    """Immutable mapping from predicate name to :class:`Relation`.

    Missing predicates read as empty; equality ignores empty entries.
    """

    __slots__ = ("_map",)

    def __init__(self, relations: Mapping[str, Relation] | None = None):
        self._map = dict(relations or {})

    def __getitem__(self, pred: str) -> Relation:
        return self._map[pred]

    def __iter__(self):
        return iter(sorted(self._map))

    def __len__(self):
        return len(self._map)

    def get_relation(self, pred: str, arity: int = 0) -> Relation:
        rel = self._map.get(pred)
        return rel if rel is not None else Relation(arity)

    def __eq__(self, other):
        if not isinstance(other, Interpretation):
            return NotImplemented
        return self._nonempty() == other._nonempty()

    def __hash__(self):
        return hash(frozenset(self._nonempty().items()))

    def _nonempty(self) -> dict:
        return {p: r.tuples for p, r in self._map.items() if r.tuples}

    def updated(self, changes: Mapping[str, Relation]) -> "Interpretation":
        m = dict(self._map)
        m.update(changes)
        return Interpretation(m)

    def restrict(self, preds: Iterable[str]) -> "Interpretation":
        preds = set(preds)
        return Interpretation({p: r for p, r in self._map.items() if p in preds})

    def merged(self, other: "Interpretation") -> "Interpretation":
        m = dict(self._map)
        for p, r in other._map.items():
            m[p] = m[p].union(r) if p in m else r
        return Interpretation(m)

    def __repr__(self):
        inner = ", ".join(f"{p}: {self._map[p].sorted()!r}" for p in self)
        return "Interpretation({" + inner + "})"


def gamma_on_interpretation(gamma: ExtremaConstraint, i: Interpretation) -> Interpretation:
    return i.updated({gamma.target: apply_gamma(gamma, i.get_relation(gamma.target, gamma.arity))})


# -- programs -----------------------------------------------------------------


@dataclass(frozen=True)
class Program:
    rules: tuple[Rule, ...] = ()
    facts: Mapping[str, Relation] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "facts", {p: r for p, r in dict(self.facts).items()})

    def __eq__(self, other):
        if not isinstance(other, Program):
            return NotImplemented
        mine = {p: r for p, r in self.facts.items() if len(r)}
        theirs = {p: r for p, r in other.facts.items() if len(r)}
        return self.rules == other.rules and mine == theirs

    __hash__ = None

    def idb_predicates(self) -> set[str]:
        return {r.head.predicate for r in self.rules}

    def edb_predicates(self) -> set[str]:
        return set(self.signatures()) - self.idb_predicates()

    def mixed_predicates(self) -> set[str]:
        """Predicates with both stored facts and defining rules."""
        return {p for p, r in self.facts.items() if len(r)} & self.idb_predicates()

    def signatures(self) -> dict[str, int]:
        sig: dict[str, int] = {}
        for p, rel in self.facts.items():
            sig[p] = rel.arity
        for r in self.rules:
            sig.setdefault(r.head.predicate, r.head.arity)
            for lit in r.body:
                a = lit if isinstance(lit, Atom) else lit.atom if isinstance(lit, Negation) else None
                if a is not None:
                    sig.setdefault(a.predicate, a.arity)
        return sig

    def fact_interpretation(self) -> Interpretation:
        return Interpretation(self.facts)

    def with_rules(self, rules: Iterable[Rule]) -> "Program":
        return Program(tuple(rules), self.facts)

    def with_facts(self, facts: Mapping[str, Relation]) -> "Program":
        merged = dict(self.facts)
        for p, rel in facts.items():
            merged[p] = merged[p].union(rel) if p in merged else rel
        return Program(self.rules, merged)

    def rules_for(self, pred: str) -> list[Rule]:
        return [r for r in self.rules if r.head.predicate == pred]
