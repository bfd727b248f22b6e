#!/usr/bin/env python3
"""Print the runtime PreM summary for every fixture that has an extrema constraint."""

from premlog.analysis import StratificationError
from premlog.corpus import load_manifest
from premlog.premcheck import check_run
from premlog.rewriter import RewriteError, post_constraints, push_extrema, pushed_constraints


def main() -> None:
    for fx in load_manifest():
        p = fx.program()
        try:
            if not pushed_constraints(p):
                found = post_constraints(p)
                if len(found) != 1:
                    continue
                p = push_extrema(found[0][1], p)
            rep = check_run(p)
        except (RewriteError, StratificationError) as e:
            print(f"{fx.name:22} skipped: {e}")
            continue
        s = rep.summary()
        print(f"{fx.name:22} {rep.verdict:24} steps={s['steps']:3} "
              f"intrinsic={s['intrinsic_fraction']:.2f} radical={s['radical_fraction']:.2f} "
              f"tags={','.join(fx.tags)}")


if __name__ == "__main__":
    main()
