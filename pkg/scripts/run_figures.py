"""Reproduce the four convergence charts: {newsvendor, options} x {basic SGD, Adam}.

Each suite runs the rules PD, 1D, 32, 256, 512 on one seeded instance and writes
wide/long trace files plus SVG charts into --out.

Usage: python scripts/run_figures.py [--seed 0] [--out results/figures] [--budget SECONDS] [--workers N]
"""

import argparse
import logging

from dynsgd.bench import emit_plot, emit_traces, parse_config, run_suite, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/figures")
    ap.add_argument("--budget", type=float, help="seconds per run; default 20 (newsvendor) / 30 (options)")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    for problem in ("newsvendor", "options"):
        for method in ("sgd", "adam"):
            cfg = parse_config(overrides=dict(problem=problem, method=method, seed=args.seed,
                                              budget_seconds=args.budget, workers=args.workers,
                                              output_dir=args.out))
            traces = run_suite(cfg)
            paths = emit_traces(traces, cfg.output_dir, problem, method,
                                cfg.budget().max_seconds, cfg.grid_points)
            for p in paths[:2]:
                print(emit_plot(p, p.with_suffix(".svg")))
            print(summarize(traces))


if __name__ == "__main__":
    main()
