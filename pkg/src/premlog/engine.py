"""Bottom-up fixpoint evaluation.

Each rule is compiled into a small Python function of nested loops over
hash indexes.  Pushed extrema constraints are not evaluated inside rules;
the engine applies them to the whole relation of the constrained predicate
after every iteration, which covers tuples contributed by exit rules too.
"""

from __future__ import annotations

import logging
import operator
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

from .analysis import Strata, constrained_atom, stratify
from .core import (
    MIN, Atom, BinOp, Binding, Comparison, Constant, DatalogError, ExtremaConstraint,
    Interpretation, Negation, Program, Relation, Rule, SortError, Variable, apply_gamma,
    expr_vars,
)

log = logging.getLogger(__name__)

NAIVE = "naive"
SEMINAIVE = "seminaive"
FIXPOINT = "fixpoint"
ITERATION_CAP = "iteration_cap"


class EvalError(DatalogError):
    pass


class IterationCapError(EvalError):
    def __init__(self, result: "EvalResult"):
        self.result = result
        super().__init__(f"iteration cap of {result.iterations} reached without a fixpoint")


@dataclass(frozen=True)
class EvalOptions:
    engine: str = SEMINAIVE
    push_enabled: bool = True
    max_iterations: int = 100_000
    trace_enabled: bool = False
    strict: bool = False

    def __post_init__(self):
        if self.engine not in (NAIVE, SEMINAIVE):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class Snapshot:
    iteration: int
    pre: Interpretation
    post: Interpretation
    delta_size: int
    derivations: int


@dataclass(frozen=True)
class FixpointTrace:
    """Per-iteration state of one recursive SCC.

    Snapshot 0 holds the exit-rule contribution before and after pruning;
    snapshot k holds ``T(I) | I | E`` and its pruned form for iteration k.
    """

    scc: frozenset
    gammas: tuple
    snapshots: tuple

    def __len__(self):
        return len(self.snapshots)

    def to_json(self) -> dict:
        from .cli import relation_json

        return {
            "scc": sorted(self.scc),
            "snapshots": [
                {"iteration": s.iteration, "delta_size": s.delta_size,
                 "derivations": s.derivations,
                 "pre": {p: relation_json(s.pre[p]) for p in s.pre},
                 "post": {p: relation_json(s.post[p]) for p in s.post}}
                for s in self.snapshots],
        }


@dataclass(frozen=True)
class EvalResult:
    interpretation: Interpretation
    iterations: int
    status: str
    traces: tuple = ()
    stats: dict = field(default_factory=dict)

    @property
    def trace(self) -> FixpointTrace | None:
        return self.traces[0] if self.traces else None

    def relation(self, pred: str) -> Relation:
        return self.interpretation.get_relation(pred)


# -- arithmetic and comparisons with sort checks --------------------------------


def _norm(r):
    if type(r) is Fraction and r.denominator == 1:
        return r.numerator
    return r


def _numeric(a, b, op):
    if type(a) is str or type(b) is str:
        raise SortError(f"arithmetic on a symbol: {a!r} {op} {b!r}")


def _add(a, b):
    if type(a) is int and type(b) is int:
        return a + b
    _numeric(a, b, "+")
    return _norm(a + b)


def _sub(a, b):
    if type(a) is int and type(b) is int:
        return a - b
    _numeric(a, b, "-")
    return _norm(a - b)


def _mul(a, b):
    if type(a) is int and type(b) is int:
        return a * b
    _numeric(a, b, "*")
    return _norm(a * b)


def _div(a, b):
    _numeric(a, b, "/")
    if b == 0:
        raise EvalError("division by zero")
    return _norm(Fraction(a) / b)


def _fix(v):
    if type(v) is str:
        raise SortError(f"arithmetic or cost on a symbol: {v!r}")
    return _norm(v)


def _same_sort(a, b, op):
    if (type(a) is str) is not (type(b) is str):
        raise SortError(f"cannot compare {a!r} {op} {b!r}: symbols and numbers are distinct sorts")


def _eq(a, b):
    _same_sort(a, b, "=")
    return a == b


def _ne(a, b):
    _same_sort(a, b, "!=")
    return a != b


def _lt(a, b):
    _same_sort(a, b, "<")
    return a < b


def _le(a, b):
    _same_sort(a, b, "<=")
    return a <= b


def _gt(a, b):
    _same_sort(a, b, ">")
    return a > b


def _ge(a, b):
    _same_sort(a, b, ">=")
    return a >= b


_ARITH = {"+": "_add", "-": "_sub", "*": "_mul", "/": "_div"}
_CMPF = {"=": "_eq", "!=": "_ne", "<": "_lt", "<=": "_le", ">": "_gt", ">=": "_ge"}
_RUNTIME = {"_fix": _fix, "_add": _add, "_sub": _sub, "_mul": _mul, "_div": _div, "_eq": _eq, "_ne": _ne,
            "_lt": _lt, "_le": _le, "_gt": _gt, "_ge": _ge}


# -- rule compilation -----------------------------------------------------------


@dataclass(frozen=True)
class AtomSource:
    """How a compiled rule reads one positive atom."""

    predicate: str
    arity: int
    key_cols: tuple  # () means full scan
    gamma: ExtremaConstraint | None  # read gamma(relation) instead of the relation
    delta: bool


class CompiledRule:
    """A rule compiled to ``fn(S, N, emit, G) -> (derivations, probes)``.

    ``S`` holds one source per positive atom (a tuple collection for scans, a
    dict for index probes), ``N`` the tuple sets of negated atoms.  Heads go
    to ``emit`` unless ``head_gamma`` is given; then the generated code itself
    keeps the round's best candidates per group in the dicts passed as ``G``
    (stored best cost, stored tuples, round best cost, round tuples).
    """

    def __init__(self, rule: Rule, first: int | None = None,
                 head_gamma: ExtremaConstraint | None = None):
        self.rule = rule
        self.head_gamma = head_gamma
        atoms = [(i, lit) for i, lit in enumerate(rule.body) if isinstance(lit, Atom)]
        gamma_at = {}
        for g in rule.extrema():
            a = constrained_atom(rule, g)
            if a is not None:
                for i, lit in atoms:
                    if lit is a:
                        gamma_at[i] = g
        if first is not None:
            atoms.sort(key=lambda ia: ia[0] != first)
        pending = [lit for lit in rule.body if isinstance(lit, (Comparison, Binding, Negation))]

        names: dict[Variable, str] = {}
        consts: dict[str, object] = {}
        lines = ["def _rule(S, N, emit, G):"]
        sources: list[AtomSource] = []
        negs: list[tuple[str, int]] = []
        depth = 1
        tmp = iter(range(10**9))
        # the inline head validates its cost column when merging, not per derivation
        deferred_cost = None
        if head_gamma is not None and isinstance(rule.head.args[head_gamma.cost_col], Variable):
            deferred_cost = rule.head.args[head_gamma.cost_col]

        def put(line):
            lines.append("    " * depth + line)

        def const(v):
            name = f"k{len(consts)}"
            consts[name] = v
            return name

        def term_code(t):
            if isinstance(t, Variable):
                return names[t]
            return const(t.value)

        def expr_code(e):
            if isinstance(e, BinOp):
                left, right = expr_code(e.left), expr_code(e.right)
                if e.op == "/":
                    return f"_div({left}, {right})"
                return f"({left} {e.op} {right})"
            return term_code(e)

        def checked(e):
            # + - * run natively; a non-int result is normalised or rejected by _fix
            code = expr_code(e)
            return f"_fix({code})" if isinstance(e, BinOp) and e.op != "/" else code

        def bind(name):
            v = f"v{len(names)}"
            names[name] = v
            return v

        def place_ready():
            nonlocal depth
            progress = True
            while progress:
                progress = False
                for lit in list(pending):
                    if isinstance(lit, Binding):
                        if not set(expr_vars(lit.expr)) <= names.keys():
                            continue
                        if lit.var in names:
                            put(f"if _eq({names[lit.var]}, {checked(lit.expr)}):")
                            depth += 1
                        else:
                            v = bind(lit.var)
                            put(f"{v} = {expr_code(lit.expr)}")
                            if isinstance(lit.expr, BinOp) and lit.expr.op != "/" \
                                    and lit.var != deferred_cost:
                                put(f"if {v}.__class__ is not int: {v} = _fix({v})")
                    elif isinstance(lit, Comparison):
                        if not (set(expr_vars(lit.lhs)) | set(expr_vars(lit.rhs))) <= names.keys():
                            continue
                        lhs, rhs = checked(lit.lhs), checked(lit.rhs)
                        if lit.op in ("=", "!="):
                            put(f"if {_CMPF[lit.op]}({lhs}, {rhs}):")
                        else:
                            put(f"if {lhs} {lit.op} {rhs}:")
                        depth += 1
                    else:
                        if not set(lit.atom.variables()) <= names.keys():
                            continue
                        n = f"n{len(negs)}"
                        negs.append((lit.atom.predicate, lit.atom.arity))
                        key = "".join(f"{term_code(t)}, " for t in lit.atom.args)
                        put(f"if ({key}) not in {n}:")
                        depth += 1
                    pending.remove(lit)
                    progress = True

        # Group-best maps are nested by the first group column when there are
        # two or more; the outer lookup is hoisted once that column is bound.
        nested = head_gamma is not None and len(head_gamma.group_cols) >= 2
        hoisted = [False]

        def group_term(c):
            return rule.head.args[c]

        def rest_key():
            cols = head_gamma.group_cols[1:] if nested else head_gamma.group_cols
            parts = [term_code(group_term(c)) for c in cols]
            if len(parts) == 1:
                return parts[0]
            return "(" + "".join(p + ", " for p in parts) + ")"

        def put_group_maps():
            if nested:
                g0 = term_code(group_term(head_gamma.group_cols[0]))
                for local, m in (("_B", "B"), ("_R", "R"), ("_RT", "RT")):
                    put(f"{local} = {m}.get({g0})")
                    put(f"if {local} is None: {local} = {m}[{g0}] = {{}}")
            hoisted[0] = True

        def maybe_hoist(is_last):
            if head_gamma is None or hoisted[0] or is_last:
                return
            t = group_term(head_gamma.group_cols[0]) if nested else None
            if not nested or isinstance(t, Constant) or t in names:
                put_group_maps()

        place_ready()
        maybe_hoist(not atoms)
        for slot, (i, atom) in enumerate(atoms):
            src = f"s{slot}"
            bound_cols = tuple(c for c, t in enumerate(atom.args)
                               if isinstance(t, Constant) or t in names)
            sources.append(AtomSource(atom.predicate, atom.arity, bound_cols, gamma_at.get(i),
                                      first is not None and i == first))
            last = slot == len(atoms) - 1
            bulk = last and not _filters_after_last(rule, atom, names, pending)
            if bound_cols:
                parts = [term_code(atom.args[c]) for c in bound_cols]
                key = parts[0] if len(parts) == 1 else "(" + ", ".join(parts) + ")"
                put("_j += 1")
                coll = f"{src}.get({key}, ())"
            else:
                coll = src
            if bulk:
                put(f"_l = {coll}")
                put("_n += len(_l)")
                coll = "_l"
            if atom.arity == 0:
                put(f"for _t in {coll}:")
                depth += 1
                place_ready()
                continue
            targets, checks = [], []
            bulk = bulk and not any(isinstance(t, Variable) and t in names and c not in bound_cols
                                    for c, t in enumerate(atom.args))
            if not bulk and coll == "_l":
                lines.pop()  # repeated variables filter: fall back to per-tuple counting
            for c, t in enumerate(atom.args):
                if c in bound_cols:
                    targets.append("_")
                elif t in names:
                    # repeated variable within this atom
                    r = f"_r{next(tmp)}"
                    targets.append(r)
                    checks.append(f"{r} == {names[t]}")
                else:
                    targets.append(bind(t))
            put(f"for {', '.join(targets)}, in {coll}:")
            depth += 1
            if checks:
                put(f"if {' and '.join(checks)}:")
                depth += 1
            place_ready()
            maybe_hoist(slot == len(atoms) - 1)
        if pending:
            raise EvalError(f"unsafe rule reached the engine: {rule}")
        if not atoms or not bulk:
            put("_n += 1")
        head_args = rule.head.args
        head = "(" + "".join(f"{term_code(t)}, " for t in head_args) + ")"
        if head_gamma is None:
            put(f"emit({head})")
        else:
            g = head_gamma
            lt = "<" if g.kind == MIN else ">"
            cost = term_code(head_args[g.cost_col])
            if not hoisted[0]:
                put_group_maps()
            put(f"_c = _B.get({rest_key()})")
            put(f"if _c is None or {cost} {lt} _c or ({cost} == _c and {head} not in F):")
            depth += 1
            put(f"_r = _R.get({rest_key()})")
            put("if _r is None:")
            put(f"    if {cost}.__class__ is str: _fix({cost})")
            put(f"    _R[{rest_key()}] = {cost}")
            put(f"    _RT[{rest_key()}] = [{head}]")
            put(f"elif {cost} {lt} _r:")
            put(f"    _R[{rest_key()}] = {cost}")
            put(f"    _RT[{rest_key()}] = [{head}]")
            put(f"elif {cost} == _r:")
            put(f"    _RT[{rest_key()}].append({head})")
        lines.append("    return _n, _j")
        header = ["    _n = 0", "    _j = 0"]
        for slot in range(len(sources)):
            header.append(f"    s{slot} = S[{slot}]")
        for k in range(len(negs)):
            header.append(f"    n{k} = N[{k}]")
        if head_gamma is not None:
            header.append("    B, F, R, RT = G")
            if not nested:
                header.append("    _B, _R, _RT = B, R, RT")
        lines[1:1] = header
        code = "\n".join(lines)
        ns = dict(_RUNTIME)
        ns.update(consts)
        exec(compile(code, f"<rule {rule.head.predicate}>", "exec"), ns)
        self._fn = ns["_rule"]
        self.code = code
        self.sources = sources
        self.negs = negs

    def fn(self, srcs, negs, emit=None, groups=None) -> tuple[int, int]:
        try:
            return self._fn(srcs, negs, emit, groups)
        except TypeError as e:
            # str/number mixtures in native arithmetic or ordering
            raise SortError(f"symbols and numbers mixed in {self.rule.head.predicate}: {e}") from None


def _filters_after_last(rule: Rule, atom: Atom, names: dict, pending: list) -> bool:
    """Would any comparison or negation run after ``atom`` (the last one) is joined?"""
    bound = set(names) | set(atom.variables())
    for lit in pending:
        if isinstance(lit, (Comparison, Negation)):
            return True
        if isinstance(lit, Binding) and lit.var in bound:
            return True
    return False


def _static_source(rel: Relation, spec: AtomSource):
    if spec.gamma is not None:
        rel = apply_gamma(spec.gamma, rel)
    return rel.index(spec.key_cols) if spec.key_cols else rel.tuples


def run_rule(cr: CompiledRule, interp: Interpretation, emit) -> tuple[int, int]:
    """Run ``cr`` once against ``interp`` (no delta), sending heads to ``emit``."""
    srcs = [_static_source(interp.get_relation(s.predicate, s.arity), s) for s in cr.sources]
    negs = [interp.get_relation(p, a).tuples for p, a in cr.negs]
    return cr.fn(srcs, negs, emit)


def _consequences(rules: Iterable[CompiledRule], interp: Interpretation) -> tuple[dict, int, int]:
    out: dict[str, set] = {}
    n = j = 0
    for cr in rules:
        bucket = out.setdefault(cr.rule.head.predicate, set())
        dn, dj = run_rule(cr, interp, bucket.add)
        n += dn
        j += dj
    return out, n, j


def immediate_consequence(recursive_rules: Iterable[Rule], i: Interpretation) -> Interpretation:
    """One application of the rules to ``i``; the result is not unioned with ``i``."""
    rules = [CompiledRule(r) for r in recursive_rules]
    out, _, _ = _consequences(rules, i)
    arity = {cr.rule.head.predicate: cr.rule.head.arity for cr in rules}
    return Interpretation({p: Relation._trusted(arity[p], frozenset(ts)) for p, ts in out.items()})


# -- SCC evaluation -------------------------------------------------------------


def pushed_gammas(rules: Iterable[Rule]) -> dict[str, ExtremaConstraint]:
    """Pushed constraints per predicate; conflicting ones are rejected."""
    out: dict[str, ExtremaConstraint] = {}
    for r in rules:
        for g in r.extrema():
            if not g.pushed:
                continue
            prev = out.get(g.target)
            if prev is not None and prev.signature != g.signature:
                raise EvalError(f"multiple distinct extrema constraints on {g.target}")
            out.setdefault(g.target, g)
    return out


def _is_recursive(rule: Rule, scc: frozenset) -> bool:
    return bool(rule.body_predicates() & scc)


class _SccContext:
    def __init__(self, p: Program, scc: frozenset, base: Interpretation, opts: EvalOptions):
        self.scc = frozenset(scc)
        self.base = base
        self.opts = opts
        rules = [r for r in p.rules if r.head.predicate in self.scc]
        self.exit_rules = [r for r in rules if not _is_recursive(r, self.scc)]
        self.rec_rules = [r for r in rules if _is_recursive(r, self.scc)]
        self.gammas = pushed_gammas(rules) if opts.push_enabled else {}
        sig = p.signatures()
        self.arity = {q: sig[q] for q in self.scc}
        self.derivations = 0
        self.probes = 0

    def exit_contribution(self) -> dict[str, frozenset]:
        out = {q: set(self.base.get_relation(q, self.arity[q]).tuples) for q in self.scc}
        for r in self.exit_rules:
            dn, dj = run_rule(CompiledRule(r), self.base, out[r.head.predicate].add)
            self.derivations += dn
            self.probes += dj
        return {q: frozenset(ts) for q, ts in out.items()}

    def interp(self, rels: dict[str, frozenset]) -> Interpretation:
        return Interpretation({q: Relation._trusted(self.arity[q], ts) for q, ts in rels.items()})

    def prune(self, rels: dict[str, frozenset]) -> dict[str, frozenset]:
        out = dict(rels)
        for q, g in self.gammas.items():
            out[q] = apply_gamma(g, Relation._trusted(self.arity[q], rels[q])).tuples
        return out


def naive_fixpoint(p: Program, scc: Iterable[str], opts: EvalOptions,
                   base: Interpretation | None = None) -> EvalResult:
    """Iterate ``I <- gamma(T(I) | I | E)`` from ``gamma(E)`` until nothing changes."""
    base = base if base is not None else p.fact_interpretation()
    ctx = _SccContext(p, frozenset(scc), base, opts)
    exits = ctx.exit_contribution()
    cur = ctx.prune(exits)
    snaps = []
    if opts.trace_enabled:
        snaps.append(Snapshot(0, ctx.interp(exits), ctx.interp(cur), sum(map(len, cur.values())),
                              ctx.derivations))
    compiled = [CompiledRule(r) for r in ctx.rec_rules]
    status = FIXPOINT
    iterations = 0
    deltas = []
    while True:
        if not compiled:
            break
        if iterations >= opts.max_iterations:
            status = ITERATION_CAP
            break
        iterations += 1
        view = base.updated({q: Relation._trusted(ctx.arity[q], ts) for q, ts in cur.items()})
        derived, dn, dj = _consequences(compiled, view)
        ctx.derivations += dn
        ctx.probes += dj
        pre = {q: cur[q] | exits[q] | frozenset(derived.get(q, ())) for q in ctx.scc}
        nxt = ctx.prune(pre)
        delta = sum(len(nxt[q] - cur[q]) for q in ctx.scc)
        deltas.append(delta)
        if opts.trace_enabled:
            snaps.append(Snapshot(iterations, ctx.interp(pre), ctx.interp(nxt), delta, dn))
        if nxt == cur:
            break
        cur = nxt
    return _scc_result(ctx, cur, iterations, status, snaps, deltas)


def _scc_result(ctx, cur, iterations, status, snaps, deltas) -> EvalResult:
    trace = (FixpointTrace(ctx.scc, tuple(ctx.gammas.values()), tuple(snaps)),) \
        if ctx.opts.trace_enabled else ()
    stats = {"derivations": ctx.derivations, "probes": ctx.probes, "delta_sizes": deltas,
             "iterations_by_scc": {",".join(sorted(ctx.scc)): iterations}}
    return EvalResult(ctx.interp(cur), iterations, status, trace, stats)


class _IndexedSet:
    """A tuple set with incrementally maintained hash indexes."""

    __slots__ = ("tuples", "indexes")

    def __init__(self, tuples=()):
        self.tuples = set(tuples)
        self.indexes: dict[tuple, dict] = {}

    def index(self, cols: tuple) -> dict:
        idx = self.indexes.get(cols)
        if idx is None:
            idx = {}
            get = _keyfunc(cols)
            for t in self.tuples:
                idx.setdefault(get(t), set()).add(t)
            self.indexes[cols] = idx
        return idx

    def add(self, t):
        self.tuples.add(t)
        for cols, idx in self.indexes.items():
            k = t[cols[0]] if len(cols) == 1 else tuple(t[c] for c in cols)
            s = idx.get(k)
            if s is None:
                idx[k] = {t}
            else:
                s.add(t)

    def remove(self, t):
        self.tuples.remove(t)
        for cols, idx in self.indexes.items():
            k = t[cols[0]] if len(cols) == 1 else tuple(t[c] for c in cols)
            s = idx[k]
            s.discard(t)
            if not s:
                del idx[k]


def _keyfunc(cols: tuple) -> Callable:
    if not cols:
        return lambda t: ()
    if len(cols) == 1:
        return operator.itemgetter(cols[0])
    return operator.itemgetter(*cols)


def seminaive_fixpoint(p: Program, scc: Iterable[str], opts: EvalOptions,
                       base: Interpretation | None = None) -> EvalResult:
    """Delta-driven evaluation of one SCC.

    With a pushed constraint on ``q`` a new tuple of ``q`` enters the next
    delta only if it beats or ties its group's stored best; a strictly better
    tuple retracts the stored ones.  Each round joins against the state left
    by the previous round, so rounds line up with naive iterations.
    """
    base = base if base is not None else p.fact_interpretation()
    ctx = _SccContext(p, frozenset(scc), base, opts)
    exits = ctx.exit_contribution()
    start = ctx.prune(exits)
    full = {q: _IndexedSet(start[q]) for q in ctx.scc}
    bcost: dict[str, dict] = {}
    btup: dict[str, dict] = {}
    for q, g in ctx.gammas.items():
        split = _group_split(g)
        bc, bt = bcost[q], btup[q] = {}, {}
        for t in start[q]:
            o, k = split(t)
            (bc if o is _FLAT else bc.setdefault(o, {}))[k] = t[g.cost_col]
            bt.setdefault((o, k), set()).add(t)
    delta = {q: set(start[q]) for q in ctx.scc}
    snaps = []
    if opts.trace_enabled:
        snaps.append(Snapshot(0, ctx.interp(exits), ctx.interp(start),
                              sum(map(len, delta.values())), ctx.derivations))

    variants = []
    for r in ctx.rec_rules:
        q = r.head.predicate
        inline = ctx.gammas.get(q) if not opts.trace_enabled else None
        for i, lit in enumerate(r.body):
            if isinstance(lit, Atom) and lit.predicate in ctx.scc:
                variants.append(CompiledRule(r, first=i, head_gamma=inline))
    status = FIXPOINT
    iterations = 0
    deltas = []
    while variants and (any(delta.values()) or iterations == 0):
        if iterations >= opts.max_iterations:
            status = ITERATION_CAP
            break
        iterations += 1
        rcost = {q: {} for q in ctx.gammas}
        rtup = {q: {} for q in ctx.gammas}
        cands = {q: set() for q in ctx.scc if q not in ctx.gammas}
        seen = {q: set() for q in ctx.scc} if opts.trace_enabled else None
        dn_total = 0
        for cr in variants:
            srcs = []
            for s in cr.sources:
                if s.delta:
                    srcs.append(delta[s.predicate] if not s.key_cols
                                else _adhoc_index(delta[s.predicate], s.key_cols))
                elif s.predicate in ctx.scc:
                    fs = full[s.predicate]
                    srcs.append(fs.index(s.key_cols) if s.key_cols else fs.tuples)
                else:
                    srcs.append(_static_source(base.get_relation(s.predicate, s.arity), s))
            negs = [base.get_relation(q, a).tuples for q, a in cr.negs]
            q = cr.rule.head.predicate
            if cr.head_gamma is not None:
                groups = (bcost[q], full[q].tuples, rcost[q], rtup[q])
                dn, dj = cr.fn(srcs, negs, None, groups)
            else:
                emit = _emitter(q, ctx, bcost, full, rcost, rtup, cands, seen)
                dn, dj = cr.fn(srcs, negs, emit)
            dn_total += dn
            ctx.probes += dj
        ctx.derivations += dn_total

        if opts.trace_enabled:
            pre = {q: frozenset(full[q].tuples) | exits[q] | frozenset(seen[q]) for q in ctx.scc}
        new_delta = {q: set() for q in ctx.scc}
        for q, ts in cands.items():
            fs, nd = full[q], new_delta[q]
            for t in ts:
                if t not in fs.tuples:
                    fs.add(t)
                    nd.add(t)
        for q in ctx.gammas:
            better = operator.lt if ctx.gammas[q].kind == MIN else operator.gt
            fs, nd, bc, bt = full[q], new_delta[q], bcost[q], btup[q]
            rt = rtup[q]
            cc = ctx.gammas[q].cost_col
            plain = not fs.indexes
            raw = fs.tuples
            for o, bsub, k, c, rsub in _round_items(rcost[q], rt, bc, _nested(ctx.gammas[q])):
                if c.__class__ is not int:
                    c = _fix(c)
                    rsub[k] = [_with_cost(t, cc, c) for t in rsub[k]]
                cur = bsub.get(k)
                tk = (o, k)
                if cur is None or better(c, cur):
                    ts = set(rsub[k])
                    if plain:
                        if cur is not None:
                            raw.difference_update(bt[tk])
                        raw.update(ts)
                    else:
                        if cur is not None:
                            for t in bt[tk]:
                                fs.remove(t)
                        for t in ts:
                            fs.add(t)
                    bsub[k] = c
                    bt[tk] = ts
                    nd.update(ts)
                elif c == cur:
                    stored = bt[tk]
                    for t in rsub[k]:
                        if t not in stored:
                            stored.add(t)
                            fs.add(t)
                            nd.add(t)
        delta = new_delta
        size = sum(map(len, delta.values()))
        deltas.append(size)
        if opts.trace_enabled:
            post = {q: frozenset(full[q].tuples) for q in ctx.scc}
            snaps.append(Snapshot(iterations, ctx.interp(pre), ctx.interp(post), size, dn_total))
    cur = {q: frozenset(full[q].tuples) for q in ctx.scc}
    return _scc_result(ctx, cur, iterations, status, snaps, deltas)


_FLAT = object()


def _nested(g: ExtremaConstraint) -> bool:
    return len(g.group_cols) >= 2


def _group_split(g: ExtremaConstraint) -> Callable:
    """Map a tuple to (outer, inner) group keys; outer is _FLAT when unnested."""
    cols = g.group_cols
    if not _nested(g):
        gk = _keyfunc(cols)
        return lambda t: (_FLAT, gk(t))
    c0 = cols[0]
    inner = _keyfunc(cols[1:])
    return lambda t: (t[c0], inner(t))


def _round_items(rcost: dict, rtup: dict, bcost: dict, nested: bool):
    if not nested:
        for k, c in rcost.items():
            yield _FLAT, bcost, k, c, rtup
        return
    for o, sub in rcost.items():
        if not sub:
            continue
        bsub = bcost.setdefault(o, {})
        rsub = rtup[o]
        for k, c in sub.items():
            yield o, bsub, k, c, rsub


def _with_cost(t: tuple, col: int, c) -> tuple:
    return t[:col] + (c,) + t[col + 1:]


def _adhoc_index(ts: set, cols: tuple) -> dict:
    get = _keyfunc(cols)
    idx: dict = {}
    for t in ts:
        idx.setdefault(get(t), []).append(t)
    return idx


def _emitter(q, ctx, bcost, full, rcost, rtup, cands, seen):
    """Python-level equivalent of the inlined head code (used when tracing)."""
    record = seen[q].add if seen is not None else None
    g = ctx.gammas.get(q)
    if g is None:
        add = cands[q].add
        if record is None:
            return add

        def emit_plain(t):
            record(t)
            add(t)
        return emit_plain

    split = _group_split(g)
    cc = g.cost_col
    B, tuples, R, RT = bcost[q], full[q].tuples, rcost[q], rtup[q]
    better = operator.lt if g.kind == MIN else operator.gt

    def emit(t):
        if record is not None:
            record(t)
        c = t[cc]
        o, k = split(t)
        if o is _FLAT:
            stored, rc, rt = B, R, RT
        else:
            stored = B.get(o, {})
            rc = R.setdefault(o, {})
            rt = RT.setdefault(o, {})
        s = stored.get(k)
        if s is not None and not (better(c, s) or (c == s and t not in tuples)):
            return
        r = rc.get(k)
        if r is None:
            _fix(c)
            rc[k] = c
            rt[k] = [t]
        elif better(c, r):
            rc[k] = c
            rt[k] = [t]
        elif c == r:
            rt[k].append(t)
    return emit


# -- whole programs -------------------------------------------------------------


def evaluate(p: Program, opts: EvalOptions = EvalOptions(), strata: Strata | None = None
             ) -> EvalResult:
    """Evaluate every stratum in dependency order."""
    strata = strata or stratify(p)
    engine = naive_fixpoint if opts.engine == NAIVE else seminaive_fixpoint
    interp = p.fact_interpretation()
    status = FIXPOINT
    iterations = 0
    traces = []
    stats = {"derivations": 0, "probes": 0, "iterations_by_scc": {}, "delta_sizes": {}}
    t0 = time.perf_counter()
    for layer in strata.layers:
        res = engine(p, layer, opts, interp)
        interp = interp.updated({q: res.interpretation.get_relation(q, res.interpretation[q].arity)
                                 for q in res.interpretation})
        iterations += res.iterations
        traces.extend(res.traces)
        stats["derivations"] += res.stats["derivations"]
        stats["probes"] += res.stats["probes"]
        stats["iterations_by_scc"].update(res.stats["iterations_by_scc"])
        stats["delta_sizes"][",".join(sorted(layer))] = res.stats["delta_sizes"]
        if res.status == ITERATION_CAP:
            status = ITERATION_CAP
            log.warning("iteration cap %d reached in %s", opts.max_iterations, sorted(layer))
    stats["seconds"] = time.perf_counter() - t0
    stats["tuples"] = sum(len(r) for r in interp.values())
    result = EvalResult(interp, iterations, status, tuple(traces), stats)
    if status == ITERATION_CAP and opts.strict:
        raise IterationCapError(result)
    return result


def verify_fixpoint(p: Program, result: EvalResult, opts: EvalOptions = EvalOptions()) -> bool:
    """Check that one more round of ``gamma(T(I) | I | E)`` changes nothing."""
    strata = stratify(p)
    interp = result.interpretation
    for layer in strata.layers:
        lower = interp.updated({q: p.facts.get(q, Relation(0)) for q in layer})
        ctx = _SccContext(p, layer, lower, opts)
        exits = ctx.exit_contribution()
        cur = {q: interp.get_relation(q, ctx.arity[q]).tuples for q in layer}
        derived, _, _ = _consequences([CompiledRule(r) for r in ctx.rec_rules], interp)
        pre = {q: cur[q] | exits[q] | frozenset(derived.get(q, ())) for q in layer}
        if ctx.prune(pre) != cur:
            return False
    return True
