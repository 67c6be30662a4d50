"""How tight each closed-form bound is: oracle TV divided by the bound.

Ratios near 1 mean the bound is nearly attained; a ratio above 1 (beyond
the oracle slack) would be a violation.

    python3 scripts/bound_tightness.py --instances 200 --seed 0
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from siirv_lab import cli


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--instances", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rows = cli._validator_rows(np.random.default_rng(args.seed), args.instances)
    by_check: dict = {}
    for r in rows:
        bound, oracle = float(r["bound"]), float(r["oracle"])
        by_check.setdefault(r["check"], []).append((oracle / bound if bound > 0 else 0.0,
                                                    r["passed"]))
    print(f"{'bound':24s} {'n':>5s} {'median':>8s} {'max':>8s} {'violations':>10s}")
    for name, vals in by_check.items():
        ratios = np.array([v[0] for v in vals])
        bad = sum(not v[1] for v in vals)
        print(f"{name:24s} {len(vals):5d} {np.median(ratios):8.3f} {ratios.max():8.3f} {bad:10d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
