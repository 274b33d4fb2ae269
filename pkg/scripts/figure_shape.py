"""Run the four rule-comparison suites over several seeds and report dynamic vs best fixed.

Usage: python scripts/figure_shape.py [--budget 20] [--seeds 0 1 2] [--workers 5] [--out results/shape]
"""

import argparse
import json
import time
from pathlib import Path

from dynsgd.bench import Suite, compare_dynamic_to_fixed, emit_traces, parse_config, run_suite

GRID = [("newsvendor", "sgd"), ("newsvendor", "adam"), ("options", "sgd"), ("options", "adam")]


def shape_check(budget, seeds, out=None, grid=GRID, log=print, workers=1):
    """Returns {(problem, method): [RuleComparison per seed]}."""
    results = {}
    for problem, method in grid:
        for seed in seeds:
            cfg = parse_config(overrides=dict(problem=problem, method=method, seed=seed,
                                              budget_seconds=budget, workers=workers))
            suite = Suite.build(cfg)
            t0 = time.perf_counter()
            traces = run_suite(cfg, suite)
            cmp = compare_dynamic_to_fixed(traces, suite.evaluator)
            results.setdefault((problem, method), []).append(cmp)
            if out is not None:
                emit_traces(traces, Path(out) / f"seed{seed}", problem, method, budget, cfg.grid_points)
            dyn = " ".join(f"{k}={v:.6g}" for k, v in cmp.dynamic_objectives.items())
            log(f"{problem}/{method} seed={seed} best_fixed={cmp.best_fixed}:{cmp.best_fixed_objective:.6g} "
                f"se={cmp.standard_error:.2g} {dyn} -> {'ok' if cmp.passed else 'below'} "
                f"({time.perf_counter() - t0:.0f}s)")
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--budget", type=float, default=20.0)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out")
    ap.add_argument("--workers", type=int, default=1, help="parallel rule runs; use at most one per physical core")
    ap.add_argument("--json")
    args = ap.parse_args()
    res = shape_check(args.budget, args.seeds, args.out, workers=args.workers)
    summary = {f"{p}/{m}": [c.passed for c in cs] for (p, m), cs in res.items()}
    for k, v in summary.items():
        print(f"{k}: {sum(v)}/{len(v)} seeds {'PASS' if sum(v) >= 2 else 'FAIL'}")
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
