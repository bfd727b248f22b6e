"""Text syntax for programs: parsing, canonical formatting and CSV facts.

Grammar (ASCII rendering of the usual rule notation)::

    program  := clause*
    clause   := atom "." | atom ":-" body "."
    body     := literal ("," literal)*
    literal  := atom | "not" atom | expr cmp expr | VAR "=" expr | extrema
    extrema  := ("is_min" | "is_max") "(" "(" varlist? ")" "," VAR ")"
    cmp      := "=" | "!=" | "<" | "<=" | ">" | ">="

``%`` and ``//`` start line comments.  ``V = expr`` is a binding when ``V``
is not bound by a positive atom of the same body (or an earlier binding),
otherwise it is an equality comparison.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    Atom, BinOp, Binding, Comparison, Constant, DatalogError, ExtremaConstraint, MAX, MIN,
    Negation, Program, Relation, Rule, Variable, number, tuple_key,
)

LEXICAL = "lexical-error"
SYNTAX = "syntax-error"
ARITY = "arity-mismatch"
UNSAFE = "unsafe-rule"
BAD_EXTREMA = "bad-extrema"

KEYWORDS = {"not", "is_min", "is_max"}


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int
    line: int
    column: int

    def __str__(self):
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    span: SourceSpan

    def __str__(self):
        return f"{self.span}: {self.code}: {self.message}"


class ParseError(DatalogError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class FactsError(DatalogError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


# -- lexer --------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>(?:%|//)[^\n]*)
  | (?P<rational>\d+/\d+)
  | (?P<decimal>\d+\.\d+)
  | (?P<int>\d+)
  | (?P<var>[A-Z][A-Za-z0-9_]*)
  | (?P<ident>_*[a-z][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<op>:-|!=|<=|>=|[(),.=<>+\-*/])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: SourceSpan


class _Spans:
    """Character offset to SourceSpan conversion (spans use UTF-8 byte offsets)."""

    def __init__(self, text: str):
        self.text = text
        self.ascii = text.isascii()
        self.line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def byte(self, i: int) -> int:
        return i if self.ascii else len(self.text[:i].encode("utf-8"))

    def span(self, start: int, end: int) -> SourceSpan:
        lo, hi = 0, len(self.line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.line_starts[mid] <= start:
                lo = mid
            else:
                hi = mid - 1
        return SourceSpan(self.byte(start), self.byte(end), lo + 1, start - self.line_starts[lo] + 1)


def tokenize(text: str, spans: _Spans, diags: list[Diagnostic]) -> list[Token]:
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            diags.append(Diagnostic(LEXICAL, f"unexpected character {text[pos]!r}",
                                    spans.span(pos, pos + 1)))
            pos += 1
            continue
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            if kind == "ident" and m.group() in KEYWORDS:
                kind = m.group()
            toks.append(Token(kind, m.group(), spans.span(m.start(), m.end())))
        pos = m.end()
    toks.append(Token("eof", "", spans.span(n, n)))
    return toks


def _unquote(s: str) -> str:
    out = []
    i = 1
    while i < len(s) - 1:
        c = s[i]
        if c == "\\":
            i += 1
            c = {"n": "\n", "t": "\t"}.get(s[i], s[i])
        out.append(c)
        i += 1
    return "".join(out)


# -- parser -------------------------------------------------------------------


class _Syntax(Exception):
    def __init__(self, message, span):
        self.message = message
        self.span = span


@dataclass(frozen=True)
class _RawExtrema:
    kind: str
    group_by: tuple
    cost: Variable
    span: SourceSpan


@dataclass(frozen=True)
class _RawEquality:
    var: Variable
    expr: object
    span: SourceSpan


_CMP = {"=", "!=", "<", "<=", ">", ">="}
_AFTER_IDENT_EXPR = _CMP | {"+", "-", "*", "/"}


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    def expect(self, text) -> Token:
        if not self.at(text):
            raise _Syntax(f"expected {text!r}, found {self.tok.text or 'end of input'!r}",
                          self.tok.span)
        return self.advance()

    def recover(self):
        while self.tok.kind != "eof":
            t = self.advance()
            if t.kind == "op" and t.text == ".":
                return

    # clause := atom "." | atom ":-" body "."
    def clause(self):
        head = self.atom()
        start = head.span
        if self.at("."):
            end = self.advance().span
            return head, None, _join(start, end)
        self.expect(":-")
        body = [self.literal()]
        while self.at(","):
            self.advance()
            body.append(self.literal())
        end = self.expect(".").span
        return head, body, _join(start, end)

    def atom(self) -> Atom:
        t = self.tok
        if t.kind != "ident":
            raise _Syntax(f"expected a predicate name, found {t.text or 'end of input'!r}", t.span)
        self.advance()
        args = []
        end = t.span
        if self.at("("):
            self.advance()
            if not self.at(")"):
                args.append(self.term())
                while self.at(","):
                    self.advance()
                    args.append(self.term())
            end = self.expect(")").span
        return Atom(t.text, tuple(args), _join(t.span, end))

    def term(self):
        t = self.tok
        if t.kind == "var":
            self.advance()
            return Variable(t.text)
        if t.kind == "ident":
            self.advance()
            return Constant(t.text)
        if t.kind == "string":
            self.advance()
            return Constant(_unquote(t.text))
        if t.kind in ("int", "decimal", "rational"):
            self.advance()
            return Constant(_number(t.text))
        if self.at("-") and self.peek().kind in ("int", "decimal", "rational"):
            self.advance()
            return Constant(number(-Fraction(_number(self.advance().text))))
        raise _Syntax(f"expected a term, found {t.text or 'end of input'!r}", t.span)

    def literal(self):
        t = self.tok
        if t.kind == "not":
            self.advance()
            a = self.atom()
            return Negation(a, _join(t.span, a.span))
        if t.kind in ("is_min", "is_max"):
            return self.extrema()
        if t.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                return self.atom()
            if not (nxt.kind == "op" and nxt.text in _AFTER_IDENT_EXPR):
                return self.atom()
        lhs = self.expr()
        op = self.tok
        if not (op.kind == "op" and op.text in _CMP):
            raise _Syntax(f"expected a comparison operator, found {op.text or 'end of input'!r}",
                          op.span)
        self.advance()
        rhs = self.expr()
        span = _join(t.span, self.toks[self.i - 1].span)
        if op.text == "=" and isinstance(lhs, Variable):
            return _RawEquality(lhs, rhs, span)
        return Comparison(lhs, op.text, rhs, span)

    def extrema(self):
        t = self.advance()
        kind = MIN if t.kind == "is_min" else MAX
        self.expect("(")
        self.expect("(")
        group = []
        if not self.at(")"):
            group.append(self.var())
            while self.at(","):
                self.advance()
                group.append(self.var())
        self.expect(")")
        self.expect(",")
        cost = self.var()
        end = self.expect(")").span
        span = _join(t.span, end)
        if cost in group:
            raise _Syntax("the cost variable must not also be a group-by variable", span)
        if len(set(group)) != len(group):
            raise _Syntax("repeated group-by variable", span)
        return _RawExtrema(kind, tuple(group), cost, span)

    def var(self) -> Variable:
        t = self.tok
        if t.kind != "var":
            raise _Syntax(f"expected a variable, found {t.text or 'end of input'!r}", t.span)
        self.advance()
        return Variable(t.text)

    # expr := term (("+"|"-") term)* ; term := factor (("*"|"/") factor)*
    def expr(self):
        left = self.product()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.advance()
            right = self.product()
            left = self._binop(op, left, right)
        return left

    def product(self):
        left = self.factor()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance()
            right = self.factor()
            left = self._binop(op, left, right)
        return left

    def _binop(self, op: Token, left, right):
        try:
            return BinOp(op.text, left, right)
        except ZeroDivisionError:
            raise _Syntax("division by the constant zero", op.span) from None

    def factor(self):
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        return self.term()


def _join(a: SourceSpan, b: SourceSpan) -> SourceSpan:
    return SourceSpan(a.start, b.end, a.line, a.column)


def _number(text: str):
    return number(Fraction(text))


# -- resolution of bindings and extrema ---------------------------------------


def _resolve_equalities(body: list) -> list:
    bound = set()
    for lit in body:
        if isinstance(lit, Atom):
            bound.update(lit.variables())
    out = []
    for lit in body:
        if isinstance(lit, _RawEquality):
            if lit.var in bound:
                lit = Comparison(lit.var, "=", lit.expr, lit.span)
            else:
                bound.add(lit.var)
                lit = Binding(lit.var, lit.expr, lit.span)
        out.append(lit)
    return out


def _resolve_extrema(head: Atom, body: list, recursive: bool, span) -> list:
    out = []
    for lit in body:
        if isinstance(lit, _RawExtrema):
            lit = resolve_extrema(lit.kind, lit.group_by, lit.cost, head, body, recursive, lit.span)
        out.append(lit)
    return out


def resolve_extrema(kind, group_by, cost, head: Atom, body, recursive: bool, span=None
                    ) -> ExtremaConstraint:
    """Pick the atom an ``is_min``/``is_max`` literal constrains.

    In a recursive rule whose head carries all the constraint's variables the
    constraint is pushed and targets the head.  Otherwise it targets the first
    positive body atom carrying them (a post-constraint); a non-recursive rule
    may also constrain its own head.
    """
    wanted = set(group_by) | {cost}

    def covers(a: Atom) -> bool:
        return wanted <= set(a.variables())

    if recursive and covers(head):
        return _with_span(ExtremaConstraint.for_atom(kind, head, group_by, cost, True), span)
    for a in body:
        if isinstance(a, Atom) and covers(a):
            return _with_span(ExtremaConstraint.for_atom(kind, a, group_by, cost, False), span)
    if covers(head):
        return _with_span(ExtremaConstraint.for_atom(kind, head, group_by, cost, True), span)
    raise _Syntax("extrema variables must all occur in the head or in one body atom", span)


def _with_span(g: ExtremaConstraint, span) -> ExtremaConstraint:
    object.__setattr__(g, "span", span)
    return g


def parse_program(text: str) -> Program:
    """Parse program text; raises :class:`ParseError` carrying diagnostics."""
    from . import analysis

    spans = _Spans(text)
    diags: list[Diagnostic] = []
    toks = tokenize(text, spans, diags)
    p = _Parser(toks)
    clauses = []
    while p.tok.kind != "eof":
        start = p.i
        try:
            clauses.append(p.clause())
        except _Syntax as e:
            diags.append(Diagnostic(SYNTAX, e.message, e.span))
            if p.i == start:
                p.advance()
            p.recover()

    arities: dict[str, tuple[int, SourceSpan]] = {}

    def check_arity(a: Atom):
        seen = arities.get(a.predicate)
        if seen is None:
            arities[a.predicate] = (a.arity, a.span)
        elif seen[0] != a.arity:
            diags.append(Diagnostic(
                ARITY, f"{a.predicate} used with arity {a.arity}, first seen with arity "
                f"{seen[0]} at {seen[1]}", a.span))

    facts: dict[str, set] = {}
    raw_rules = []
    for head, body, span in clauses:
        check_arity(head)
        if body is None:
            if head.is_ground():
                facts.setdefault(head.predicate, set()).add(tuple(c.value for c in head.args))
                continue
            body = []
        for lit in body:
            if isinstance(lit, Atom):
                check_arity(lit)
            elif isinstance(lit, Negation):
                check_arity(lit.atom)
        raw_rules.append((head, _resolve_equalities(body), span))

    # Recursion must be known before extrema targets can be resolved.
    heads_bodies = [(h.predicate, {l.predicate for l in b if isinstance(l, Atom)}
                     | {l.atom.predicate for l in b if isinstance(l, Negation)})
                    for h, b, _ in raw_rules]
    scc_of = analysis.scc_map(heads_bodies)
    rules = []
    for head, body, span in raw_rules:
        hs = scc_of.get(head.predicate)
        recursive = any(scc_of.get(q) == hs for q in
                        {l.predicate for l in body if isinstance(l, Atom)}
                        | {l.atom.predicate for l in body if isinstance(l, Negation)})
        try:
            body = _resolve_extrema(head, body, recursive, span)
        except _Syntax as e:
            diags.append(Diagnostic(BAD_EXTREMA, e.message, e.span))
            continue
        rule = Rule(head, tuple(body), span)
        unbound = analysis.unsafe_variables(rule)
        if unbound:
            names = ", ".join(v.name for v in unbound)
            diags.append(Diagnostic(UNSAFE, f"unsafe rule: variable(s) {names} not bound by "
                                    "a positive body atom", span))
            continue
        rules.append(rule)

    if diags:
        raise ParseError(sorted(diags, key=lambda d: (d.span.start, d.span.end)))
    fact_rels = {pred: Relation(arities[pred][0], ts) for pred, ts in facts.items()}
    return Program(tuple(rules), fact_rels)


# -- formatting ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_BARE_SYMBOL = re.compile(r"[a-z][A-Za-z0-9_]*\Z")


def format_value(v) -> str:
    if type(v) is str:
        if _BARE_SYMBOL.match(v) and v not in KEYWORDS:
            return v
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") \
            .replace("\t", "\\t") + '"'
    if type(v) is int:
        return str(v)
    return format_rational(v)


def format_rational(q: Fraction) -> str:
    """Decimal notation when exact, ``p/q`` otherwise."""
    d = q.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{q.numerator}/{q.denominator}"
    places = max(twos, fives)
    scaled = abs(q.numerator) * (10 ** places // q.denominator)
    digits = str(scaled).rjust(places + 1, "0")
    sign = "-" if q < 0 else ""
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def format_term(t) -> str:
    if isinstance(t, Variable):
        return t.name
    return format_value(t.value)


def format_expr(e, parent_prec: int = 0, right: bool = False) -> str:
    if not isinstance(e, BinOp):
        return format_term(e)
    prec = _PREC[e.op]
    s = f"{format_expr(e.left, prec)} {e.op} {format_expr(e.right, prec, True)}"
    if prec < parent_prec or (right and prec == parent_prec):
        return f"({s})"
    return s


def format_atom(a: Atom) -> str:
    if not a.args:
        return a.predicate
    return f"{a.predicate}({', '.join(format_term(t) for t in a.args)})"


def format_literal(lit) -> str:
    if isinstance(lit, Atom):
        return format_atom(lit)
    if isinstance(lit, Negation):
        return f"not {format_atom(lit.atom)}"
    if isinstance(lit, Comparison):
        return f"{format_expr(lit.lhs)} {lit.op} {format_expr(lit.rhs)}"
    if isinstance(lit, Binding):
        return f"{lit.var.name} = {format_expr(lit.expr)}"
    if isinstance(lit, ExtremaConstraint):
        name = "is_min" if lit.kind == MIN else "is_max"
        return f"{name}(({', '.join(v.name for v in lit.group_by)}), {lit.cost.name})"
    raise TypeError(f"not a literal: {lit!r}")


def format_rule(r: Rule) -> str:
    if not r.body:
        return f"{format_atom(r.head)}."
    return f"{format_atom(r.head)} :- {', '.join(format_literal(l) for l in r.body)}."


def format_program(p: Program) -> str:
    lines = [format_rule(r) for r in p.rules]
    for pred in sorted(p.facts):
        rel = p.facts[pred]
        for t in rel.sorted():
            args = ", ".join(format_value(v) for v in t)
            lines.append(f"{pred}({args})." if t else f"{pred}.")
    return "".join(line + "\n" for line in lines)


# -- CSV facts ----------------------------------------------------------------

_NUMERIC = re.compile(r"-?\d+(?:\.\d+|/\d+)?\Z")


def parse_field(text: str):
    s = text.strip()
    if not s:
        raise ValueError("empty field")
    if _NUMERIC.match(s):
        q = Fraction(s)
        return number(q)
    return s


def load_facts(pred: str, arity: int, rows: str) -> Relation:
    """Read comma-separated rows (no header) into a relation of ``pred``."""
    tuples = set()
    reader = csv.reader(io.StringIO(rows))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not f.strip() for f in row) and len(row) <= 1:
            continue
        if len(row) != arity:
            raise FactsError(f"{pred} expects {arity} fields, found {len(row)}", lineno)
        try:
            tuples.add(tuple(parse_field(f) for f in row))
        except (ValueError, ZeroDivisionError) as e:
            raise FactsError(f"unparsable field: {e}", lineno) from None
    return Relation(arity, tuples)


def format_csv(rel: Relation) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    for t in rel.sorted():
        w.writerow([v if type(v) is str else format_value(v) for v in t])
    return out.getvalue()


def sorted_tuples(rel: Relation) -> list[tuple]:
    return sorted(rel.tuples, key=tuple_key)
