#!/usr/bin/env python3
"""Show an unpushed min constraint looping on a cycle while the pushed one stops."""

import argparse

from premlog.corpus import fixture
from premlog.engine import EvalOptions, evaluate
from premlog.premcheck import check_run
from premlog.rewriter import post_constraints, push_extrema


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fixture", default="loop4")
    ap.add_argument("--cap", type=int, default=30)
    args = ap.parse_args()

    p = fixture(args.fixture).program()
    ((_, gamma),) = post_constraints(p)
    pushed = push_extrema(gamma, p)

    slow = evaluate(p, EvalOptions(max_iterations=args.cap))
    print(f"unpushed: {slow.status} after {slow.iterations} iterations, "
          f"{len(slow.relation('path'))} path tuples")
    fast = evaluate(pushed)
    print(f"pushed:   {fast.status} after {fast.iterations} iterations, "
          f"{len(fast.relation('path'))} path tuples")
    for t in fast.relation("shortestpath").sorted():
        print("  ", t)
    print("check:", check_run(pushed).verdict)


if __name__ == "__main__":
    main()
