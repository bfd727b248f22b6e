"""Predicate dependency graph, rule classification and stratification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import networkx as nx

from .core import (
    Atom, Binding, Comparison, DatalogError, ExtremaConstraint, Negation, Program, Rule,
    Variable, expr_vars,
)

POSITIVE = "positive"
NEGATED = "negated"
CONSTRAINED = "constrained"

EXIT = "exit"
RECURSIVE = "recursive"

UNSTRATIFIABLE_NEGATION = "unstratifiable-negation"
UNPUSHED_EXTREMA = "unpushed-extrema-in-recursion"


class StratificationError(DatalogError):
    def __init__(self, code: str, message: str, span=None):
        self.code = code
        self.span = span
        super().__init__(f"{code}: {message}")


def unsafe_variables(rule: Rule) -> list[Variable]:
    """Variables of ``rule`` that no positive atom or chain of bindings binds."""
    bound: set[Variable] = set()
    for lit in rule.body:
        if isinstance(lit, Atom):
            bound.update(lit.variables())
    bindings = [lit for lit in rule.body if isinstance(lit, Binding)]
    changed = True
    while changed:
        changed = False
        for b in bindings:
            if b.var not in bound and set(expr_vars(b.expr)) <= bound:
                bound.add(b.var)
                changed = True
    needed: list[Variable] = list(rule.head.variables())
    for lit in rule.body:
        if isinstance(lit, Negation):
            needed.extend(lit.atom.variables())
        elif isinstance(lit, Comparison):
            needed.extend(expr_vars(lit.lhs))
            needed.extend(expr_vars(lit.rhs))
        elif isinstance(lit, Binding):
            needed.append(lit.var)
            needed.extend(expr_vars(lit.expr))
        elif isinstance(lit, ExtremaConstraint):
            needed.extend(lit.variables())
    out = []
    for v in needed:
        if v not in bound and v not in out:
            out.append(v)
    return out


def scc_map(heads_bodies: Iterable[tuple[str, set[str]]]) -> dict[str, int]:
    """Map each predicate to the id of its strongly connected component."""
    g = nx.DiGraph()
    for head, body in heads_bodies:
        g.add_node(head)
        for q in body:
            g.add_edge(head, q)
    out = {}
    for i, comp in enumerate(nx.strongly_connected_components(g)):
        for p in comp:
            out[p] = i
    return out


def constrained_atom(rule: Rule, gamma: ExtremaConstraint) -> Atom | None:
    """The body atom an unpushed constraint selects from (None if it targets the head)."""
    if gamma.pushed:
        return None
    for lit in rule.body:
        if isinstance(lit, Atom) and lit.predicate == gamma.target and _carries(lit, gamma):
            return lit
    return None


def _carries(a: Atom, gamma: ExtremaConstraint) -> bool:
    if a.arity != gamma.arity:
        return False
    cols = gamma.group_cols + (gamma.cost_col,)
    return all(a.args[c] == v for c, v in zip(cols, gamma.variables()))


@dataclass
class DependencyGraph:
    graph: nx.MultiDiGraph
    sccs: list[frozenset[str]]
    scc_of: dict[str, int]

    @property
    def nodes(self) -> list[str]:
        return sorted(self.graph.nodes)

    def edges(self) -> list[tuple[str, str, str]]:
        return sorted({(u, v, d["polarity"]) for u, v, d in self.graph.edges(data=True)})

    def same_scc(self, p: str, q: str) -> bool:
        return p in self.scc_of and self.scc_of.get(p) == self.scc_of.get(q)


def dependency_graph(p: Program) -> DependencyGraph:
    g = nx.MultiDiGraph()
    for pred in p.facts:
        g.add_node(pred)
    for idx, rule in enumerate(p.rules):
        h = rule.head.predicate
        g.add_node(h)
        targets = {}
        for gamma in rule.extrema():
            a = constrained_atom(rule, gamma)
            if a is not None:
                targets[id(a)] = gamma
            elif not gamma.pushed:
                # an unflagged constraint on the head selects from h itself
                g.add_edge(h, h, polarity=CONSTRAINED, rule=idx)
        for lit in rule.body:
            if isinstance(lit, Atom):
                pol = CONSTRAINED if id(lit) in targets else POSITIVE
                g.add_edge(h, lit.predicate, polarity=pol, rule=idx)
            elif isinstance(lit, Negation):
                g.add_edge(h, lit.atom.predicate, polarity=NEGATED, rule=idx)
    comps = [frozenset(c) for c in nx.strongly_connected_components(g)]
    scc_of = {}
    for i, c in enumerate(comps):
        for pred in c:
            scc_of[pred] = i
    return DependencyGraph(g, comps, scc_of)


def classify_rules(p: Program, graph: DependencyGraph | None = None) -> dict[int, str]:
    """Label each rule (by index) exit or recursive."""
    graph = graph or dependency_graph(p)
    kinds = {}
    for idx, rule in enumerate(p.rules):
        h = rule.head.predicate
        rec = any(graph.same_scc(h, q) for q in rule.body_predicates())
        kinds[idx] = RECURSIVE if rec else EXIT
    return kinds


@dataclass
class Strata:
    """Rule-defined predicates grouped into SCCs, dependencies first."""

    layers: list[frozenset[str]]
    rule_kinds: dict[int, str]
    extensional: frozenset[str]

    def stratum_of(self, pred: str) -> int:
        for i, layer in enumerate(self.layers):
            if pred in layer:
                return i
        raise KeyError(pred)

    def is_recursive(self, layer: frozenset[str], p: Program) -> bool:
        return any(self.rule_kinds[i] == RECURSIVE for i, r in enumerate(p.rules)
                   if r.head.predicate in layer)


def stratify(p: Program) -> Strata:
    graph = dependency_graph(p)
    for u, v, d in graph.graph.edges(data=True):
        if d["polarity"] == POSITIVE or not graph.same_scc(u, v):
            continue
        rule = p.rules[d["rule"]]
        if d["polarity"] == NEGATED:
            raise StratificationError(
                UNSTRATIFIABLE_NEGATION,
                f"{u} depends negatively on {v} within a recursive cycle", rule.span)
        raise StratificationError(
            UNPUSHED_EXTREMA,
            f"extrema constraint on {v} inside the recursion of {u} is not marked pushed",
            rule.span)

    idb = p.idb_predicates()
    cond = nx.condensation(nx.DiGraph(graph.graph), scc=graph.sccs)
    # edges point from a head to its dependencies; evaluate dependencies first
    order = list(nx.lexicographical_topological_sort(
        cond.reverse(copy=True), key=lambda n: min(graph.sccs[n])))
    layers = []
    for n in order:
        members = frozenset(graph.sccs[n]) & idb
        if members:
            layers.append(members)
    return Strata(layers, classify_rules(p, graph), frozenset(p.edb_predicates()))
