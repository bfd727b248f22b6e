"""Source-to-source rewrites around extrema constraints."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .analysis import EXIT, RECURSIVE, constrained_atom, dependency_graph, stratify
from .core import (
    MIN, Atom, Binding, BinOp, Comparison, Constant, DatalogError, ExtremaConstraint,
    Negation, Program, Rule, Variable, literal_vars,
)

NEGATION = "negation"
PUSH = "push"
TRANSFER_OUT = "transfer-out"
PUSH_EQUALITY = "push-equality"

AUX_PREFIX = "__better_"


class RewriteError(DatalogError):
    pass


@dataclass(frozen=True)
class RewritePlan:
    """What a rewrite did: the constraint involved and each changed rule."""

    kind: str
    target: object
    changes: tuple[tuple[Rule | None, Rule | None], ...] = ()
    pushed: bool = False
    program: Program | None = field(default=None, compare=False, repr=False)

    def describe(self) -> list[str]:
        from .parser import format_rule
        lines = []
        for before, after in self.changes:
            if before is not None:
                lines.append(f"- {format_rule(before)}")
            if after is not None:
                lines.append(f"+ {format_rule(after)}")
        return lines


# -- helpers ------------------------------------------------------------------


def same_up_to_literal_order(a: Program, b: Program) -> bool:
    """Structural equality that ignores the order of body literals."""
    def key(r: Rule):
        return (r.head, sorted(map(repr, r.body)))
    return (sorted(map(key, a.rules), key=repr) == sorted(map(key, b.rules), key=repr)
            and Program((), a.facts) == Program((), b.facts))


def post_constraints(p: Program) -> list[tuple[int, ExtremaConstraint]]:
    """Unpushed extrema literals, with the index of the rule holding each."""
    return [(i, g) for i, r in enumerate(p.rules) for g in r.extrema() if not g.pushed]


def pushed_constraints(p: Program) -> list[tuple[int, ExtremaConstraint]]:
    return [(i, g) for i, r in enumerate(p.rules) for g in r.extrema() if g.pushed]


def _locate(gamma: ExtremaConstraint, p: Program) -> list[int]:
    return [i for i, r in enumerate(p.rules) if any(g == gamma for g in r.extrema())]


def _scc_of(p: Program, pred: str) -> frozenset[str]:
    graph = dependency_graph(p)
    return graph.sccs[graph.scc_of[pred]]


def _is_recursive(rule: Rule, scc: frozenset[str]) -> bool:
    return rule.head.predicate in scc and bool(rule.body_predicates() & scc)


def _fresh_var(base: str, taken: set[Variable]) -> Variable:
    v = Variable(base)
    n = 1
    while v in taken:
        n += 1
        v = Variable(f"{base}{n}")
    return v


def _fresh_pred(base: str, p: Program) -> str:
    used = set(p.signatures())
    name, n = base, 1
    while name in used:
        n += 1
        name = f"{base}{n}"
    return name


def _rule_vars(rule: Rule) -> set[Variable]:
    out = set(rule.head.variables())
    for lit in rule.body:
        out.update(literal_vars(lit))
    return out


def _replace_rule(p: Program, changes: dict[int, Rule | None], extra: Iterable[Rule] = ()
                  ) -> Program:
    rules = []
    for i, r in enumerate(p.rules):
        r = changes.get(i, r)
        if r is not None:
            rules.append(r)
    rules.extend(extra)
    return Program(tuple(rules), p.facts)


# -- negation encoding -------------------------------------------------------


def negation_encoding(gamma: ExtremaConstraint, p: Program) -> Program:
    """Replace a post-constraint by ``not __better_q(...)`` and an auxiliary rule."""
    return negation_plan(gamma, p).program


def negation_plan(gamma: ExtremaConstraint, p: Program) -> RewritePlan:
    where = _locate(gamma, p)
    if not where:
        return RewritePlan(NEGATION, gamma, (), False, p)
    if len(where) > 1:
        raise RewriteError(f"constraint on {gamma.target} occurs in {len(where)} rules")
    idx = where[0]
    rule = p.rules[idx]
    scc = _scc_of(p, rule.head.predicate)
    if gamma.pushed or _is_recursive(rule, scc):
        raise RewriteError("constraint sits inside a recursive rule; transfer it out first")
    atom = constrained_atom(rule, gamma)
    if atom is None:
        raise RewriteError(f"constraint does not select from a body atom of {rule.head.predicate}")

    taken = _rule_vars(rule)
    lower = "".join(v.name.lower() for v in gamma.group_by)
    rival = _fresh_var(gamma.cost.name + lower, taken)
    taken.add(rival)
    keep = set(gamma.group_cols)
    other_args = []
    for c, t in enumerate(atom.args):
        if c == gamma.cost_col:
            other_args.append(rival)
        elif c in keep or not isinstance(t, Variable):
            other_args.append(t)
        else:
            v = _fresh_var(f"{t.name}_", taken)
            taken.add(v)
            other_args.append(v)
    aux = _fresh_pred(AUX_PREFIX + gamma.target, p)
    aux_head = Atom(aux, gamma.group_by + (gamma.cost,))
    op = "<" if gamma.kind == MIN else ">"
    aux_rule = Rule(aux_head, (atom, Atom(atom.predicate, tuple(other_args)),
                               Comparison(rival, op, gamma.cost)))
    body = tuple(Negation(aux_head) if lit == gamma and isinstance(lit, ExtremaConstraint)
                 else lit for lit in rule.body)
    new_rule = Rule(rule.head, body, rule.span)
    out = _replace_rule(p, {idx: new_rule}, [aux_rule])
    return RewritePlan(NEGATION, gamma, ((rule, new_rule), (None, aux_rule)), False, out)


# -- pushing into recursion and back out -----------------------------------------


def push_extrema(gamma: ExtremaConstraint, p: Program) -> Program:
    """Move a post-constraint on ``q`` into the recursive rules defining ``q``."""
    return push_plan(gamma, p).program


def push_plan(gamma: ExtremaConstraint, p: Program) -> RewritePlan:
    q = gamma.target
    if q not in p.idb_predicates():
        raise RewriteError(f"{q} is not defined by any rule")
    kinds = {g.signature for _, g in post_constraints(p) + pushed_constraints(p)
             if g.target == q}
    if len(kinds) > 1:
        raise RewriteError(f"{q} carries several distinct extrema constraints")
    if any(g.target == q for _, g in pushed_constraints(p)):
        raise RewriteError(f"{q} already has a pushed constraint")
    where = _locate(gamma, p)
    if len(where) != 1:
        raise RewriteError(f"expected the constraint in exactly one final rule, found {len(where)}")
    idx = where[0]
    final = p.rules[idx]
    scc = _scc_of(p, q)
    if final.head.predicate in scc:
        raise RewriteError("the constraint must sit in a rule outside the recursion of "
                           f"{q}")
    _check_sole_consumer(p, q, scc, idx)

    changes: dict[int, Rule] = {idx: final.without(gamma)}
    pairs = [(final, changes[idx])]
    defining = [(i, r) for i, r in enumerate(p.rules) if r.head.predicate == q]
    recursive = [(i, r) for i, r in defining if _is_recursive(r, scc)]
    for i, r in recursive or defining:
        args = r.head.args
        cols = gamma.group_cols + (gamma.cost_col,)
        if not all(isinstance(args[c], Variable) for c in cols):
            raise RewriteError(f"head of a rule for {q} has a non-variable in a constrained column")
        pushed = ExtremaConstraint(gamma.kind, q, gamma.arity,
                                   tuple(args[c] for c in gamma.group_cols),
                                   args[gamma.cost_col], gamma.group_cols, gamma.cost_col, True)
        new = r.with_literal(pushed)
        changes[i] = new
        pairs.append((r, new))
    out = _replace_rule(p, changes)
    return RewritePlan(PUSH, gamma, tuple(pairs), True, out)


def _check_sole_consumer(p: Program, q: str, scc: frozenset[str], final_idx: int) -> None:
    for i, r in enumerate(p.rules):
        if i == final_idx or r.head.predicate in scc:
            continue
        if q in r.body_predicates():
            raise RewriteError(
                f"{q} is also read by the rule for {r.head.predicate}; pushing would change it")


def transfer_out(p: Program) -> Program:
    """Remove pushed constraints and restore them as post-constraints."""
    return transfer_plan(p).program


def transfer_plan(p: Program) -> RewritePlan:
    pushed = pushed_constraints(p)
    if not pushed:
        raise RewriteError("program has no pushed constraint")
    by_target: dict[str, ExtremaConstraint] = {}
    for _, g in pushed:
        prev = by_target.setdefault(g.target, g)
        if prev.signature != g.signature:
            raise RewriteError(f"{g.target} carries several distinct extrema constraints")

    changes: dict[int, Rule] = {}
    for i, g in pushed:
        r = changes.get(i, p.rules[i])
        changes[i] = r.without(g)
    for q, g in by_target.items():
        scc = _scc_of(p, q)
        readers = [(i, r) for i, r in enumerate(p.rules)
                   if r.head.predicate not in scc and q in r.body_predicates()]
        if len(readers) != 1:
            raise RewriteError(f"cannot restore the constraint on {q}: expected one final rule "
                               f"reading it, found {len(readers)}")
        i, r = readers[0]
        atom = next((a for a in r.positive_atoms() if a.predicate == q), None)
        if atom is None:
            raise RewriteError(f"{q} is only read under negation")
        cols = g.group_cols + (g.cost_col,)
        if not all(isinstance(atom.args[c], Variable) for c in cols):
            raise RewriteError(f"final rule binds a constrained column of {q} to a constant")
        post = ExtremaConstraint(g.kind, q, g.arity, tuple(atom.args[c] for c in g.group_cols),
                                 atom.args[g.cost_col], g.group_cols, g.cost_col, False)
        changes[i] = changes.get(i, r).with_literal(post)
    out = _replace_rule(p, changes)
    stratify(out)
    pairs = tuple((p.rules[i], changes[i]) for i in sorted(changes))
    return RewritePlan(TRANSFER_OUT, tuple(by_target.values()), pairs, False, out)


# -- equality pushing ------------------------------------------------------------


def push_equality(var: Variable, const, p: Program) -> Program:
    """Specialise the exit rules of ``q`` on ``var = const`` taken from a final rule."""
    return equality_plan(var, const, p).program


def equality_plan(var: Variable, const, p: Program) -> RewritePlan:
    const = const if isinstance(const, Constant) else Constant(const)
    found = []
    for i, r in enumerate(p.rules):
        for lit in r.body:
            if _is_equality(lit, var, const):
                found.append((i, lit))
    if len(found) != 1:
        raise RewriteError(f"expected one rule with {var.name} = {const.value!r}, "
                           f"found {len(found)}")
    idx, eq = found[0]
    final = p.rules[idx]
    carriers = [(a, a.args.index(var)) for a in final.positive_atoms()
                if var in a.args and a.predicate in p.idb_predicates()]
    if len(carriers) != 1:
        raise RewriteError(f"{var.name} must occur in exactly one rule-defined body atom")
    atom, col = carriers[0]
    q = atom.predicate
    scc = _scc_of(p, q)
    if final.head.predicate in scc:
        raise RewriteError("the equality must sit in a rule outside the recursion")
    if scc != {q}:
        raise RewriteError(f"{q} is mutually recursive with {sorted(scc - {q})}")
    if q in p.mixed_predicates():
        raise RewriteError(f"{q} also has stored facts, which cannot be specialised")
    _check_sole_consumer(p, q, scc, idx)

    changes: dict[int, Rule | None] = {idx: final.without(eq)}
    pairs = [(final, changes[idx])]
    for i, r in enumerate(p.rules):
        if r.head.predicate != q:
            continue
        if _is_recursive(r, scc):
            _check_propagated(r, q, col)
            continue
        new = _specialise(r, col, const)
        changes[i] = new
        pairs.append((r, new))
    out = _replace_rule(p, changes)
    return RewritePlan(PUSH_EQUALITY, (var, const), tuple(pairs), False, out)


def _is_equality(lit, var: Variable, const: Constant) -> bool:
    if isinstance(lit, Comparison) and lit.op == "=":
        return (lit.lhs, lit.rhs) in ((var, const), (const, var))
    return isinstance(lit, Binding) and lit.var == var and lit.expr == const


def _check_propagated(r: Rule, q: str, col: int) -> None:
    v = r.head.args[col]
    if not isinstance(v, Variable):
        raise RewriteError(f"recursive rule for {q} puts a constant in column {col}")
    for a in r.positive_atoms():
        if a.predicate == q and a.args[col] != v:
            raise RewriteError(
                f"column {col} of {q} is not passed through unchanged by its recursive rule; "
                "pushing the equality would be unsound")
    for lit in r.body:
        if isinstance(lit, Binding) and lit.var == v:
            raise RewriteError(f"column {col} of {q} is recomputed in recursion")


def _specialise(r: Rule, col: int, const: Constant) -> Rule | None:
    t = r.head.args[col]
    if isinstance(t, Constant):
        return r if t == const else None
    if any(t in g.variables() for g in r.extrema()):
        raise RewriteError(f"{t.name} is used by an extrema constraint in an exit rule")
    sub = {t: const}
    body = []
    for lit in r.body:
        if isinstance(lit, Binding) and lit.var == t:
            body.append(Comparison(const, "=", _subst(lit.expr, sub), lit.span))
        else:
            body.append(_subst_literal(lit, sub))
    return Rule(_subst_atom(r.head, sub), tuple(body), r.span)


def _subst(e, sub):
    if isinstance(e, Variable):
        return sub.get(e, e)
    if isinstance(e, BinOp):
        return BinOp(e.op, _subst(e.left, sub), _subst(e.right, sub))
    return e


def _subst_atom(a: Atom, sub) -> Atom:
    return Atom(a.predicate, tuple(_subst(t, sub) for t in a.args), a.span)


def _subst_literal(lit, sub):
    if isinstance(lit, Atom):
        return _subst_atom(lit, sub)
    if isinstance(lit, Negation):
        return Negation(_subst_atom(lit.atom, sub), lit.span)
    if isinstance(lit, Comparison):
        return Comparison(_subst(lit.lhs, sub), lit.op, _subst(lit.rhs, sub), lit.span)
    if isinstance(lit, Binding):
        return Binding(lit.var, _subst(lit.expr, sub), lit.span)
    return lit


def rule_kind(p: Program, idx: int) -> str:
    scc = _scc_of(p, p.rules[idx].head.predicate)
    return RECURSIVE if _is_recursive(p.rules[idx], scc) else EXIT
