"""Command-line interface: run, rewrite, check and diff Datalog programs."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .analysis import StratificationError, stratify
from .core import Comparison, Constant, DatalogError, Program, Relation, Variable
from .engine import (
    ITERATION_CAP, NAIVE, SEMINAIVE, EvalOptions, EvalResult, IterationCapError, evaluate,
)
from .parser import UNSAFE, FactsError, ParseError, format_program, format_value, load_facts, parse_program
from .premcheck import NothingToCheck, check_run
from .reference import final_predicates
from .rewriter import (
    RewriteError, negation_encoding, post_constraints, push_equality, push_extrema,
    pushed_constraints, transfer_out,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_STRATIFY = 3
EXIT_CAP = 4
EXIT_PREM = 5

DEFAULT_MAX_ITERS = 1000

log = logging.getLogger("premlog")


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, _):
        pass


def _setup_logging() -> None:
    if not any(isinstance(h, _StderrHandler) for h in log.handlers):
        h = _StderrHandler()
        h.setFormatter(logging.Formatter("%(message)s"))
        log.addHandler(h)
        log.setLevel(logging.INFO)
        log.propagate = False


# -- JSON helpers -------------------------------------------------------------------


def value_json(v):
    if type(v) is Fraction:
        return f"{v.numerator}/{v.denominator}"
    return v


def tuple_json(t: tuple) -> list:
    return [value_json(v) for v in t]


def relation_json(rel: Relation) -> list:
    return [tuple_json(t) for t in rel.sorted()]


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def relations_json_text(rels: dict[str, list]) -> str:
    """Predicate -> tuples as JSON, one tuple per line."""
    if not rels:
        return "{}\n"
    parts = []
    for q in sorted(rels):
        rows = [json.dumps(t, ensure_ascii=False) for t in rels[q]]
        body = "[]" if not rows else "[\n    " + ",\n    ".join(rows) + "\n  ]"
        parts.append(f"  {json.dumps(q)}: {body}")
    return "{\n" + ",\n".join(parts) + "\n}\n"


# -- configuration ------------------------------------------------------------------


class UsageError(DatalogError):
    pass


@dataclass(frozen=True)
class CliConfig:
    command: str
    program: Path
    facts: tuple[tuple[str, Path], ...] = ()
    engine: str = SEMINAIVE
    push: bool = True
    max_iterations: int = DEFAULT_MAX_ITERS
    format: str = "table"
    strict: bool = False
    query: tuple[str, ...] = ()
    mode: str | None = None
    trace: Path | None = None

    def options(self, **overrides) -> EvalOptions:
        base = dict(engine=self.engine, push_enabled=True, max_iterations=self.max_iterations,
                    trace_enabled=self.trace is not None, strict=False)
        base.update(overrides)
        return EvalOptions(**base)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fact_binding(text: str) -> tuple[str, Path]:
    pred, sep, path = text.partition("=")
    if not sep or not pred or not path:
        raise argparse.ArgumentTypeError(f"expected PRED=PATH, got {text!r}")
    return pred, Path(path)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="premlog", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("program", type=Path)
        p.add_argument("--facts", action="append", type=_fact_binding, default=[],
                       metavar="PRED=PATH")
        p.add_argument("--engine", choices=(NAIVE, SEMINAIVE), default=SEMINAIVE)
        p.add_argument("--push", choices=("on", "off"), default="on")
        p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS, dest="max_iterations")
        p.add_argument("--format", choices=("json", "csv", "table"), default="table")
        p.add_argument("--strict", action="store_true")
        p.add_argument("--query", action="append", default=[], metavar="PRED")
        p.add_argument("--trace", type=Path)

    common(sub.add_parser("run", help="evaluate a program"))
    rw = sub.add_parser("rewrite", help="apply a source-to-source rewrite")
    common(rw)
    rw.add_argument("--mode", choices=("push", "unpush", "negation", "equality"),
                    required=True)
    common(sub.add_parser("check", aliases=["check-prem"], help="runtime PreM check"))
    common(sub.add_parser("diff", help="compare pushed and unpushed results"))
    return ap


def parse_config(argv) -> CliConfig:
    ns = build_parser().parse_args(argv)
    command = "check" if ns.command == "check-prem" else ns.command
    if ns.max_iterations < 1:
        raise UsageError("--max-iters must be at least 1")
    return CliConfig(command, ns.program, tuple(ns.facts), ns.engine, ns.push == "on",
                     ns.max_iterations, ns.format, ns.strict, tuple(ns.query),
                     getattr(ns, "mode", None), ns.trace)


# -- shared steps ---------------------------------------------------------------------


def load_program(cfg: CliConfig) -> Program:
    try:
        text = cfg.program.read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {cfg.program}: {e.strerror}") from None
    p = parse_program(text)
    sig = p.signatures()
    extra = {}
    for pred, path in cfg.facts:
        if pred not in sig:
            raise UsageError(f"--facts names {pred}, which the program never mentions")
        try:
            rows = path.read_text(encoding="utf-8")
        except OSError as e:
            raise UsageError(f"cannot read {path}: {e.strerror}") from None
        try:
            rel = load_facts(pred, sig[pred], rows)
        except FactsError as e:
            raise FactsError(f"{path}: {e}", e.row) from None
        extra[pred] = extra[pred].union(rel) if pred in extra else rel
    for q in cfg.query:
        if q not in sig:
            raise UsageError(f"--query names unknown predicate {q}")
    return p.with_facts(extra)


def selected(cfg: CliConfig, p: Program) -> list[str]:
    return list(cfg.query) or final_predicates(p) or sorted(p.signatures())


def render(result_rels: dict[str, Relation], fmt: str) -> str:
    if fmt == "json":
        return relations_json_text({q: relation_json(r) for q, r in result_rels.items()})
    if fmt == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        many = len(result_rels) > 1
        for q in sorted(result_rels):
            for t in result_rels[q].sorted():
                row = [v if type(v) is str else format_value(v) for v in t]
                w.writerow([q] + row if many else row)
        return out.getvalue()
    lines = []
    for q in sorted(result_rels):
        rel = result_rels[q]
        lines.append(f"{q}/{rel.arity}: {len(rel)} tuple{'s' if len(rel) != 1 else ''}")
        rows = [[format_value(v) for v in t] for t in rel.sorted()]
        widths = [max((len(r[c]) for r in rows), default=0) for c in range(rel.arity)]
        for r in rows:
            lines.append("  " + "  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    return "".join(line + "\n" for line in lines)


def _stats(res: EvalResult, label: str = "") -> None:
    s = res.stats
    prefix = f"{label}: " if label else ""
    log.info("%siterations=%d tuples=%d derivations=%d seconds=%.3f status=%s", prefix,
             res.iterations, s.get("tuples", 0), s.get("derivations", 0),
             s.get("seconds", 0.0), res.status)


def _write_trace(cfg: CliConfig, res: EvalResult) -> None:
    if cfg.trace is not None:
        cfg.trace.write_text(dumps([t.to_json() for t in res.traces]), encoding="utf-8")


def _unpushed(p: Program) -> Program:
    return transfer_out(p) if pushed_constraints(p) else p


def _sole_post_constraint(p: Program):
    found = post_constraints(p)
    if len(found) != 1:
        raise RewriteError(f"expected exactly one post-constraint, found {len(found)}")
    return found[0][1]


def _pushed(p: Program) -> Program:
    return p if pushed_constraints(p) else push_extrema(_sole_post_constraint(p), p)


# -- commands -----------------------------------------------------------------------


def cmd_run(cfg: CliConfig, out) -> int:
    p = load_program(cfg)
    if not cfg.push and pushed_constraints(p):
        p = transfer_out(p)
    stratify(p)
    res = evaluate(p, cfg.options())
    _stats(res)
    _write_trace(cfg, res)
    out.write(render({q: res.relation(q) if q in res.interpretation
                      else Relation(p.signatures()[q]) for q in selected(cfg, p)}, cfg.format))
    if res.status == ITERATION_CAP and cfg.strict:
        return EXIT_CAP
    return EXIT_OK


def _equality_target(p: Program):
    idb = p.idb_predicates()
    found = []
    for r in p.rules:
        atoms = [a for a in r.positive_atoms() if a.predicate in idb]
        for lit in r.body:
            if isinstance(lit, Comparison) and lit.op == "=":
                pair = (lit.lhs, lit.rhs) if isinstance(lit.lhs, Variable) else (lit.rhs, lit.lhs)
                v, c = pair
                if isinstance(v, Variable) and isinstance(c, Constant) and \
                        any(v in a.args for a in atoms):
                    found.append((v, c))
    if len(found) != 1:
        raise RewriteError(f"expected exactly one variable = constant test on a derived "
                           f"predicate, found {len(found)}")
    return found[0]


def cmd_rewrite(cfg: CliConfig, out) -> int:
    p = load_program(cfg)
    if cfg.mode == "push":
        q = push_extrema(_sole_post_constraint(p), p)
    elif cfg.mode == "unpush":
        q = transfer_out(p)
    elif cfg.mode == "negation":
        q = negation_encoding(_sole_post_constraint(p), p)
    else:
        var, const = _equality_target(p)
        q = push_equality(var, const, p)
    out.write(format_program(q))
    return EXIT_OK


def cmd_check(cfg: CliConfig, out) -> int:
    p = load_program(cfg)
    if not pushed_constraints(p):
        if not post_constraints(p):
            raise NothingToCheck("program has no extrema constraint to check")
        p = _pushed(p)
        log.info("checking the program with its post-constraint pushed into recursion")
    report = check_run(p, cfg.options(trace_enabled=True))
    out.write(dumps(report.to_json()))
    s = report.summary()
    log.info("%s: %d steps, intrinsic %.2f, radical %.2f", report.verdict, s["steps"],
             s["intrinsic_fraction"], s["radical_fraction"])
    if cfg.strict and not report.holds:
        return EXIT_PREM
    if cfg.strict and report.partial:
        return EXIT_CAP
    return EXIT_OK


@dataclass
class DiffOutcome:
    predicate: str
    status: str
    only_unpushed: Relation | None = None
    only_pushed: Relation | None = None
    pushed: Relation | None = None
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        def rel(r):
            return None if r is None else relation_json(r)
        return {"predicate": self.predicate, "status": self.status,
                "only_unpushed": rel(self.only_unpushed), "only_pushed": rel(self.only_pushed),
                "pushed": rel(self.pushed)}


def diff_programs(p: Program, query: str | None, opts: EvalOptions) -> DiffOutcome:
    unpushed, pushed = _unpushed(p), _pushed(p)
    pred = query or (final_predicates(pushed) or [None])[0]
    if pred is None:
        raise UsageError("no final predicate to compare; pass --query")
    a = evaluate(unpushed, opts)
    _stats(a, "unpushed")
    b = evaluate(pushed, opts)
    _stats(b, "pushed")
    pb = b.relation(pred)
    if a.status == ITERATION_CAP:
        return DiffOutcome(pred, "incomparable", pushed=pb)
    pa = a.relation(pred)
    arity = pa.arity or pb.arity
    only_a = Relation(arity, pa.tuples - pb.tuples)
    only_b = Relation(arity, pb.tuples - pa.tuples)
    status = "identical" if not only_a and not only_b else "different"
    return DiffOutcome(pred, status, only_a, only_b, pb)


def cmd_diff(cfg: CliConfig, out) -> int:
    p = load_program(cfg)
    if not post_constraints(p) and not pushed_constraints(p):
        raise RewriteError("program has no extrema constraint to push")
    d = diff_programs(p, cfg.query[0] if cfg.query else None, cfg.options())
    if cfg.format == "json":
        out.write(dumps(d.to_json()))
    else:
        out.write(f"{d.predicate}: {d.status}\n")
        if d.status == "incomparable":
            out.write("unpushed evaluation hit the iteration cap; pushed result:\n")
            out.write(render({d.predicate: d.pushed}, cfg.format))
        elif d.status == "different":
            for sign, rel in (("-", d.only_unpushed), ("+", d.only_pushed)):
                for t in rel.sorted():
                    out.write(f"{sign} {d.predicate}({', '.join(map(format_value, t))})\n")
    return EXIT_PREM if d.status == "different" else EXIT_OK


COMMANDS = {"run": cmd_run, "rewrite": cmd_rewrite, "check": cmd_check, "diff": cmd_diff}


def _report(cfg_path, e: ParseError) -> None:
    for d in e.diagnostics:
        print(f"{cfg_path}:{d.span.line}:{d.span.column}: {d.code}: {d.message}",
              file=sys.stderr)


def main(argv=None, out=None) -> int:
    _setup_logging()
    out = out or sys.stdout
    try:
        cfg = parse_config(argv)
    except UsageError as e:
        print(f"premlog: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        code = COMMANDS[cfg.command](cfg, out)
    except ParseError as e:
        _report(cfg.program, e)
        if all(d.code == UNSAFE for d in e.diagnostics):
            return EXIT_STRATIFY
        return EXIT_PARSE
    except FactsError as e:
        print(f"premlog: {e}", file=sys.stderr)
        return EXIT_PARSE
    except StratificationError as e:
        where = f":{e.span.line}:{e.span.column}" if e.span is not None else ""
        print(f"{cfg.program}{where}: {e}", file=sys.stderr)
        return EXIT_STRATIFY
    except IterationCapError as e:
        print(f"premlog: {e}", file=sys.stderr)
        return EXIT_CAP
    except (UsageError, RewriteError, NothingToCheck) as e:
        print(f"premlog: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DatalogError as e:
        print(f"premlog: evaluation error: {e}", file=sys.stderr)
        return EXIT_USAGE
    log.debug("done in %.3fs", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
