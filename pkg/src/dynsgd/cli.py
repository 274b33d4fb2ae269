"""Command line: ``dynsgd generate | run | plot``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import bench
from .num_core import STREAM_INSTANCE, RngStream
from .problems import generate_newsvendor_instance, generate_options_instance

# run flags mirror ExperimentConfig; "output_dir" is exposed as --out
_SKIP = {"output_dir"}


def _add_config_flags(p: argparse.ArgumentParser):
    for name, kind in bench.CONFIG_FIELDS.items():
        if name in _SKIP:
            continue
        flag = "--" + name.replace("_", "-")
        if name == "rules":
            p.add_argument(flag, help="comma-separated rule labels, e.g. PD,1D,32,256,512")
        elif name in ("problem", "method"):
            p.add_argument(flag, choices=("newsvendor", "options") if name == "problem" else ("sgd", "adam"))
        else:
            p.add_argument(flag, help=kind)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynsgd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a random problem instance to YAML")
    gen.add_argument("--problem", choices=("newsvendor", "options"), default="newsvendor")
    gen.add_argument("--dimension", type=int, default=50)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--rate", type=float, default=0.01)
    gen.add_argument("--num-factors", type=int, default=5)
    gen.add_argument("--out", required=True, help="output instance file")

    run = sub.add_parser("run", help="run one experiment suite and write trace files")
    run.add_argument("--config", help="YAML config file")
    run.add_argument("--out", dest="output_dir", help="output directory")
    run.add_argument("--plot", action="store_true", help="also render SVG charts")
    _add_config_flags(run)

    plot = sub.add_parser("plot", help="render a wide data file as an SVG chart")
    plot.add_argument("data", help="wide data file written by `run`")
    plot.add_argument("--out", required=True, help="output SVG path")
    plot.add_argument("--title")
    return parser


def cmd_generate(args) -> int:
    rng = RngStream(args.seed, STREAM_INSTANCE)
    if args.problem == "newsvendor":
        spec = generate_newsvendor_instance(args.dimension, rng)
    else:
        spec = generate_options_instance(args.dimension, rng, rate=args.rate, num_factors=args.num_factors)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(yaml.safe_dump(spec.to_dict(), sort_keys=False))
    print(out)
    return 0


def cmd_run(args) -> int:
    overrides = {name: getattr(args, name, None) for name in bench.CONFIG_FIELDS}
    cfg = bench.parse_config(args.config, overrides)
    traces = bench.run_suite(cfg)
    budget = cfg.budget()
    paths = bench.emit_traces(traces, cfg.output_dir, cfg.problem, cfg.method,
                              budget.max_seconds, cfg.grid_points)
    (Path(cfg.output_dir) / f"{cfg.problem}_{cfg.method}_config.yaml").write_text(
        yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    if args.plot:
        for p in paths[:2]:
            paths.append(bench.emit_plot(p, p.with_suffix(".svg")))
    print(bench.summarize(traces))
    for p in paths:
        print(p)
    return 0


def cmd_plot(args) -> int:
    print(bench.emit_plot(args.data, args.out, args.title))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"generate": cmd_generate, "run": cmd_run, "plot": cmd_plot}[args.command](args)
    except (bench.ConfigError, bench.DataFileError, OSError) as exc:
        print(f"dynsgd: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
