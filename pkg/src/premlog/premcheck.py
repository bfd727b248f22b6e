"""Runtime checks of pre-mappability along an actual evaluation.

At every iteration of a recursive SCC the checker compares ``gamma(T(I))``
with ``gamma(T(gamma(I)))``, where ``T`` is the immediate consequence of the
recursive rules with pushed constraints stripped.  A clean report only
certifies the interpretations this run went through.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .core import (
    DatalogError, ExtremaConstraint, Interpretation, Program, Rule, apply_gamma, tuple_key,
)
from .engine import ITERATION_CAP, EvalOptions, EvalResult, evaluate, immediate_consequence

COUNTEREXAMPLE_CAP = 10
LHS = "gamma(T(I))"
RHS = "gamma(T(gamma(I)))"

DISCLAIMER = ("Checked only on the interpretations reached by this run; "
              "a clean report is evidence, not proof, that the constraint is pre-mappable.")


class NothingToCheck(DatalogError):
    pass


@dataclass(frozen=True)
class StepVerdict:
    step: int
    predicate: str
    prem_holds: bool
    iprem_holds: bool
    rprem_holds: bool
    counterexamples: tuple[tuple[str, tuple], ...] = ()

    def to_json(self) -> dict:
        from .cli import tuple_json
        return {
            "step": self.step,
            "predicate": self.predicate,
            "prem": self.prem_holds,
            "iprem": self.iprem_holds,
            "rprem": self.rprem_holds,
            "counterexamples": [{"side": side, "tuple": tuple_json(t)}
                                for side, t in self.counterexamples],
        }


def strip_pushed(rules) -> list[Rule]:
    """The rules with their pushed constraints removed (``T`` ignores them)."""
    out = []
    for r in rules:
        for g in r.extrema():
            if g.pushed:
                r = r.without(g)
        out.append(r)
    return out


def check_step(gamma: ExtremaConstraint, recursive_rules, i: Interpretation,
               step: int = 0) -> StepVerdict:
    """Compare gamma(T(I)) with gamma(T(gamma(I))) at ``i``."""
    rules = strip_pushed(recursive_rules)
    q = gamma.target
    cur = i.get_relation(q, gamma.arity)
    gi = i.updated({q: apply_gamma(gamma, cur)})
    t_i = immediate_consequence(rules, i).get_relation(q, gamma.arity)
    t_gi = immediate_consequence(rules, gi).get_relation(q, gamma.arity)
    lhs = apply_gamma(gamma, t_i)
    rhs = apply_gamma(gamma, t_gi)

    prem = lhs == rhs
    iprem = t_i == t_gi
    rprem = lhs == t_gi
    # gamma(gamma(I)) = gamma(I), so rPreM at gamma(I) needs nothing new.
    rprem_at_gi = rhs == t_gi
    assert prem or not iprem, "intrinsic step must be pre-mappable"
    assert prem or not (rprem and rprem_at_gi), "radical at I and gamma(I) implies PreM"

    examples = []
    if not prem:
        for side, extra in ((LHS, lhs.tuples - rhs.tuples), (RHS, rhs.tuples - lhs.tuples)):
            for t in sorted(extra, key=tuple_key)[:COUNTEREXAMPLE_CAP]:
                examples.append((side, t))
    return StepVerdict(step, q, prem, iprem, rprem, tuple(examples))


@dataclass(frozen=True)
class PremReport:
    steps: tuple[StepVerdict, ...]
    partial: bool = False
    disclaimer: str = DISCLAIMER

    @property
    def holds(self) -> bool:
        return all(s.prem_holds for s in self.steps)

    @property
    def violated_at(self) -> int | None:
        bad = [s.step for s in self.steps if not s.prem_holds]
        return min(bad) if bad else None

    @property
    def verdict(self) -> str:
        return "holds-on-this-run" if self.holds else f"violated-at-step-{self.violated_at}"

    def summary(self) -> dict:
        n = len(self.steps)
        return {
            "steps": n,
            "prem": sum(s.prem_holds for s in self.steps),
            "intrinsic_fraction": sum(s.iprem_holds for s in self.steps) / n if n else 0.0,
            "radical_fraction": sum(s.rprem_holds for s in self.steps) / n if n else 0.0,
        }

    def to_json(self) -> dict:
        return {
            "overall": self.verdict,
            "holds": self.holds,
            "violated_at": self.violated_at,
            "partial": self.partial,
            "summary": self.summary(),
            "disclaimer": self.disclaimer,
            "steps": [s.to_json() for s in self.steps],
        }


def check_run(p: Program, opts: EvalOptions = EvalOptions()) -> PremReport:
    """Evaluate ``p`` with tracing and check every iteration of every constrained SCC."""
    if not any(g.pushed for r in p.rules for g in r.extrema()):
        raise NothingToCheck("program has no pushed extrema constraint")
    opts = replace(opts, trace_enabled=True, push_enabled=True, strict=False)
    result = evaluate(p, opts)
    return report_from_trace(p, result)


def report_from_trace(p: Program, result: EvalResult) -> PremReport:
    steps = []
    for trace in result.traces:
        if not trace.gammas:
            continue
        rules = [r for r in p.rules
                 if r.head.predicate in trace.scc and r.body_predicates() & trace.scc]
        if not rules:
            continue
        for snap in trace.snapshots:
            i = result.interpretation.updated({q: snap.pre[q] for q in trace.scc})
            for g in trace.gammas:
                steps.append(check_step(g, rules, i, snap.iteration + 1))
    return PremReport(tuple(steps), partial=result.status == ITERATION_CAP)
