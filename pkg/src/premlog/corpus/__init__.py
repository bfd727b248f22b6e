"""Fixture programs and reproducible random graphs.

Graphs come from SplitMix64 (Steele, Lea and Flood): the state advances by
``0x9E3779B97F4A7C15`` and each output is mixed with the multipliers
``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB`` (shifts 30, 27, 31), all
modulo 2**64.  An ordered pair ``(i, j)`` becomes an arc when the top 53 bits
of the next output fall below ``density * 2**53``; its cost is then drawn as
``lo + next % (hi - lo + 1)``.  Pairs are visited row by row, ``i`` then ``j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from ..core import Program, Relation, number
from ..parser import load_facts, parse_program

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next() % n

    def chance(self, p: Fraction) -> bool:
        return (self.next() >> 11) < p * (1 << 53)


def node_name(i: int) -> str:
    return f"n{i}"


def generate_graph(nodes: int, density, cost_range=(1, 20), seed: int = 0,
                   acyclic: bool = False) -> Relation:
    """Random arc relation ``(from, to, cost)`` over nodes ``n0 .. n{nodes-1}``.

    With ``acyclic`` only arcs from lower to higher node numbers are drawn.
    Integer cost bounds give integer costs; otherwise costs lie on a grid of
    100 steps across the interval.
    """
    density = Fraction(density) if not isinstance(density, float) else Fraction(str(density))
    lo, hi = (Fraction(c) if not isinstance(c, float) else Fraction(str(c)) for c in cost_range)
    if nodes < 1:
        raise ValueError("nodes must be at least 1")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    if lo <= 0 or hi < lo:
        raise ValueError("cost range must be a positive interval")
    integral = lo.denominator == 1 and hi.denominator == 1
    rng = SplitMix64(seed)
    arcs = []
    for i in range(nodes):
        for j in range(i + 1 if acyclic else 0, nodes):
            if i == j:
                continue
            if rng.chance(density):
                if integral:
                    cost = number(lo + rng.below(int(hi - lo) + 1))
                else:
                    cost = number(lo + (hi - lo) * rng.below(101) / 100)
                arcs.append((node_name(i), node_name(j), cost))
    return Relation(3, arcs)


def shortest_path_program(source: str | None = "a", pushed: bool = True, kind: str = "min",
                          final: str = "shortestpath") -> str:
    """Text of the shortest-path program, post-constraint or pushed form."""
    ext = f"is_{kind}((X, Y), D)"
    filt = f", X = {source}" if source is not None else ""
    lines = ["path(X, Y, D) :- arc(X, Y, D)."]
    if pushed:
        lines.append(f"path(X, Y, D) :- path(X, Z, Dxz), arc(Z, Y, Dzy), D = Dxz + Dzy, {ext}.")
        lines.append(f"{final}(X, Y, D) :- path(X, Y, D){filt}.")
    else:
        lines.append("path(X, Y, D) :- path(X, Z, Dxz), arc(Z, Y, Dzy), D = Dxz + Dzy.")
        lines.append(f"{final}(X, Y, D) :- path(X, Y, D){filt}, {ext}.")
    return "\n".join(lines) + "\n"


# -- stored fixtures ------------------------------------------------------------

TAGS = ("prem-holds", "iprem", "rprem", "non-prem", "diverges-unpushed")


@dataclass(frozen=True)
class Fixture:
    name: str
    program_file: str
    facts: dict = field(default_factory=dict)  # predicate -> csv file name
    generator: dict | None = None              # generate_graph kwargs for "arc"
    tags: tuple = ()
    nodes: int | None = None
    notes: str = ""
    expect: str = "ok"                         # ok | diverges | unstratifiable

    @property
    def text(self) -> str:
        return (data_dir() / self.program_file).read_text()

    def fact_relations(self, program: Program) -> dict[str, Relation]:
        sig = program.signatures()
        rels = {}
        for pred, fname in self.facts.items():
            rels[pred] = load_facts(pred, sig[pred], (data_dir() / fname).read_text())
        if self.generator is not None:
            g = dict(self.generator)
            g["cost_range"] = tuple(g.get("cost_range", (1, 20)))
            rels["arc"] = generate_graph(**g)
        return rels

    def program(self) -> Program:
        p = parse_program(self.text)
        return p.with_facts(self.fact_relations(p))

    def node_count(self) -> int:
        if self.nodes is not None:
            return self.nodes
        if self.generator is not None:
            return self.generator["nodes"]
        arcs = self.program().facts.get("arc")
        return len({v for t in arcs for v in t[:2]}) if arcs else 0


def data_dir() -> Path:
    return Path(str(resources.files(__package__) / "data"))


def load_manifest() -> list[Fixture]:
    raw = json.loads((data_dir() / "manifest.json").read_text())
    out = []
    for entry in raw["fixtures"]:
        bad = set(entry.get("tags", ())) - set(TAGS)
        if bad:
            raise ValueError(f"unknown tags {sorted(bad)} on fixture {entry['name']}")
        out.append(Fixture(entry["name"], entry["program"], entry.get("facts", {}),
                           entry.get("generator"), tuple(entry.get("tags", ())),
                           entry.get("nodes"), entry.get("notes", ""),
                           entry.get("expect", "ok")))
    return out


def fixture(name: str) -> Fixture:
    for f in load_manifest():
        if f.name == name:
            return f
    raise KeyError(name)
