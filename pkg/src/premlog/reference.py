"""Oracles for differential testing.

Nothing here uses the evaluation engine.  ``oracle_post_constraint`` is a
plain substitution-based interpreter and ``oracle_shortest_paths`` is
textbook Bellman-Ford, cross-checked against Dijkstra.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

from .analysis import RECURSIVE, stratify
from .core import (
    MIN, Atom, BinOp, Binding, Comparison, Constant, DatalogError, ExtremaConstraint,
    Interpretation, Negation, Program, Relation, SortError, Variable,
)

OK = "ok"
CAP_EXCEEDED = "cap_exceeded"


class OracleError(DatalogError):
    pass


@dataclass(frozen=True)
class OracleResult:
    relation: Relation | None
    iterations: int
    status: str = OK
    interpretation: Interpretation | None = field(default=None, compare=False, repr=False)

    @property
    def failed(self) -> bool:
        return self.status != OK


def final_predicates(p: Program) -> list[str]:
    """Rule-defined predicates that no rule reads."""
    read = set()
    for r in p.rules:
        read |= r.body_predicates()
    return sorted(p.idb_predicates() - read)


# -- a small independent interpreter ---------------------------------------------


def _value(e, env):
    if isinstance(e, Variable):
        return env[e]
    if isinstance(e, Constant):
        return e.value
    a, b = _value(e.left, env), _value(e.right, env)
    if isinstance(a, str) or isinstance(b, str):
        raise SortError(f"arithmetic on a symbol in {e!r}")
    if e.op == "+":
        v = Fraction(a) + Fraction(b)
    elif e.op == "-":
        v = Fraction(a) - Fraction(b)
    elif e.op == "*":
        v = Fraction(a) * Fraction(b)
    else:
        if b == 0:
            raise OracleError("division by zero")
        v = Fraction(a) / Fraction(b)
    return int(v) if v.denominator == 1 else v


def _compare(op, a, b):
    if isinstance(a, str) != isinstance(b, str):
        raise SortError(f"cannot compare {a!r} with {b!r}")
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def _select(gamma: ExtremaConstraint, tuples) -> set:
    best = {}
    for t in tuples:
        k = tuple(t[c] for c in gamma.group_cols)
        c = t[gamma.cost_col]
        if isinstance(c, str):
            raise SortError("extrema cost must be numeric")
        if k not in best or (c < best[k] if gamma.kind == MIN else c > best[k]):
            best[k] = c
    return {t for t in tuples
            if best[tuple(t[c] for c in gamma.group_cols)] == t[gamma.cost_col]}


def _match(atom: Atom, t: tuple, env: dict):
    out = dict(env)
    for arg, v in zip(atom.args, t):
        if isinstance(arg, Constant):
            if arg.value != v:
                return None
        elif arg in out:
            if out[arg] != v:
                return None
        else:
            out[arg] = v
    return out


def _solve(body, db, env):
    """All substitutions satisfying ``body`` left to right, deferring unready literals."""
    if not body:
        yield env
        return
    for i, lit in enumerate(body):
        if _ready(lit, env):
            rest = body[:i] + body[i + 1:]
            break
    else:
        raise OracleError("rule cannot be evaluated: unbound variables remain")
    if isinstance(lit, tuple):  # (atom, tuples, index cache) for atoms
        atom, tuples, cache = lit
        cols = tuple(c for c, x in enumerate(atom.args)
                     if isinstance(x, Constant) or x in env)
        if cols:
            idx = cache.get(cols)
            if idx is None:
                idx = cache[cols] = defaultdict(list)
                for t in tuples:
                    idx[tuple(t[c] for c in cols)].append(t)
            key = tuple(atom.args[c].value if isinstance(atom.args[c], Constant)
                        else env[atom.args[c]] for c in cols)
            tuples = idx.get(key, ())
        for t in tuples:
            e = _match(atom, t, env)
            if e is not None:
                yield from _solve(rest, db, e)
    elif isinstance(lit, Negation):
        a = lit.atom
        t = tuple(env[x] if isinstance(x, Variable) else x.value for x in a.args)
        if t not in db.get(a.predicate, ()):
            yield from _solve(rest, db, env)
    elif isinstance(lit, Comparison):
        if _compare(lit.op, _value(lit.lhs, env), _value(lit.rhs, env)):
            yield from _solve(rest, db, env)
    elif isinstance(lit, Binding):
        v = _value(lit.expr, env)
        if lit.var in env:
            if _compare("=", env[lit.var], v):
                yield from _solve(rest, db, env)
        else:
            yield from _solve(rest, db, {**env, lit.var: v})


def _ready(lit, env) -> bool:
    if isinstance(lit, tuple):
        return True
    if isinstance(lit, Negation):
        return all(not isinstance(x, Variable) or x in env for x in lit.atom.args)
    if isinstance(lit, Comparison):
        return all(v in env for v in _vars(lit.lhs)) and all(v in env for v in _vars(lit.rhs))
    return all(v in env for v in _vars(lit.expr))


def _vars(e):
    if isinstance(e, Variable):
        return [e]
    if isinstance(e, BinOp):
        return _vars(e.left) + _vars(e.right)
    return []


def _fire(rule, db) -> set:
    gammas = {}
    for g in rule.extrema():
        for lit in rule.body:
            if isinstance(lit, Atom) and lit.predicate == g.target and all(
                    lit.args[c] == v for c, v in zip(g.group_cols + (g.cost_col,),
                                                     g.variables())):
                gammas[id(lit)] = g
                break
    body = []
    for lit in rule.body:
        if isinstance(lit, Atom):
            ts = db.get(lit.predicate, set())
            if id(lit) in gammas:
                ts = _select(gammas[id(lit)], ts)
            body.append((lit, ts, {}))
        elif not isinstance(lit, ExtremaConstraint):
            body.append(lit)
    out = set()
    for env in _solve(body, db, {}):
        out.add(tuple(env[x] if isinstance(x, Variable) else x.value for x in rule.head.args))
    return out


def oracle_post_constraint(p: Program, cap: int, query: str | None = None) -> OracleResult:
    """Naively evaluate an unpushed program, failing once any SCC needs more than ``cap`` rounds."""
    strata = stratify(p)
    for i, r in enumerate(p.rules):
        if strata.rule_kinds[i] == RECURSIVE and any(g.pushed for g in r.extrema()):
            raise OracleError("oracle input must not contain constraints pushed into recursion")
    if query is None:
        finals = final_predicates(p)
        query = finals[0] if len(finals) == 1 else None
    db: dict[str, set] = {q: set(rel.tuples) for q, rel in p.facts.items()}
    total = 0
    status = OK
    for layer in strata.layers:
        rules = [r for r in p.rules if r.head.predicate in layer]
        for q in layer:
            db.setdefault(q, set())
        rounds = 0
        while True:
            new = {q: set() for q in layer}
            for r in rules:
                new[r.head.predicate] |= _fire(r, db)
            changed = any(not new[q] <= db[q] for q in layer)
            if not changed:
                break
            if rounds >= cap:
                status = CAP_EXCEEDED
                break
            rounds += 1
            for q in layer:
                db[q] |= new[q]
        total += rounds
        if status != OK:
            break
        # a constraint on the head of a non-recursive rule selects from the result
        for r in rules:
            for g in r.extrema():
                if g.pushed:
                    db[g.target] = _select(g, db[g.target])
    if status != OK:
        return OracleResult(None, total, status)
    sig = p.signatures()
    interp = Interpretation({q: Relation(sig[q], ts) for q, ts in db.items()})
    rel = interp.get_relation(query, sig.get(query, 0)) if query else None
    return OracleResult(rel, total, OK, interp)


# -- shortest paths ---------------------------------------------------------------


def _arcs(arcs) -> list[tuple]:
    out = []
    for t in arcs:
        if len(t) != 3:
            raise ValueError("arcs must be (from, to, cost) triples")
        c = t[2]
        if isinstance(c, str) or isinstance(c, bool) or not c > 0:
            raise ValueError(f"arc costs must be positive numbers, got {c!r}")
        out.append(t)
    return out


def oracle_shortest_paths(arcs, sources) -> Relation:
    """Least cost of a non-empty path from each source to each node it reaches."""
    arcs = _arcs(arcs)
    nodes = {x for x, _, _ in arcs} | {y for _, y, _ in arcs}
    out = set()
    for s in sorted(set(sources), key=str):
        dist = {}
        for x, y, c in arcs:
            if x == s and (y not in dist or c < dist[y]):
                dist[y] = c
        for _ in range(len(nodes)):
            changed = False
            for x, y, c in arcs:
                if x in dist and (y not in dist or dist[x] + c < dist[y]):
                    dist[y] = dist[x] + c
                    changed = True
            if not changed:
                break
        out |= {(s, v, _norm(d)) for v, d in dist.items()}
    return Relation(3, out)


def dijkstra_shortest_paths(arcs, sources) -> Relation:
    """Second, priority-queue based computation of the same relation."""
    arcs = _arcs(arcs)
    adj = defaultdict(list)
    for x, y, c in arcs:
        adj[x].append((y, c))
    out = set()
    for s in set(sources):
        heap = [(Fraction(c), str(y), y) for y, c in adj[s]]
        heapq.heapify(heap)
        done = {}
        while heap:
            d, _, v = heapq.heappop(heap)
            if v in done:
                continue
            done[v] = d
            for y, c in adj[v]:
                if y not in done:
                    heapq.heappush(heap, (d + c, str(y), y))
        out |= {(s, v, _norm(d)) for v, d in done.items()}
    return Relation(3, out)


def _norm(d):
    d = Fraction(d)
    return int(d) if d.denominator == 1 else d
