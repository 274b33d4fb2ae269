"""Empirical descent frequencies of the dynamic rules on a noisy 10-dim quadratic.

Prints, per seed, the per-dimension rule's sign agreement on the median
coordinate and the single rule's P(ghat . g > 0), for the dominant-direction
and isotropic noise designs.

Usage: python scripts/descent_check.py [--seeds 0 1 2 3]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from synthetic import (  # noqa: E402
    DOMINANT_OFFSET,
    DOMINANT_SD,
    ISOTROPIC_OFFSET,
    ISOTROPIC_SD,
    descent_frequencies,
)

from dynsgd.sampling_rules import Rule  # noqa: E402

DESIGNS = {"dominant": (DOMINANT_OFFSET, DOMINANT_SD), "isotropic": (ISOTROPIC_OFFSET, ISOTROPIC_SD)}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    args = ap.parse_args()
    print("design     seed  PD-median-agree  PD-aggregate  1D-median-agree  1D-aggregate")
    for name, (offset, sd) in DESIGNS.items():
        for seed in args.seeds:
            pd = descent_frequencies(Rule.PER_DIMENSION_MEDIAN, offset, sd, seed=seed)
            su = descent_frequencies(Rule.SINGLE_UPDATE, offset, sd, seed=seed)
            print(f"{name:<10} {seed:>4}  {pd[0]:>15.3f}  {pd[1]:>12.3f}  {su[0]:>15.3f}  {su[1]:>12.3f}")


if __name__ == "__main__":
    main()
