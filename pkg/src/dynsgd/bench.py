"""Experiment harness: config parsing, rule sweeps, trace files and plots."""

from __future__ import annotations

import dataclasses
import io
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .num_core import STREAM_EVAL, STREAM_INSTANCE, STREAM_OPTIMIZE, RngStream
from .optimizers import (
    AdamConfig,
    Budget,
    Method,
    SgdConfig,
    TraceCadence,
    TraceRecord,
    run_optimization,
)
from .problems import (
    MonteCarloEvaluator,
    generate_newsvendor_instance,
    generate_options_instance,
    make_problem,
    spec_from_dict,
)
from .sampling_rules import Rule, SamplingController

log = logging.getLogger(__name__)

PAPER_RULES = ("PD", "1D", "32", "256", "512")
DEFAULT_BUDGET_SECONDS = {"newsvendor": 20.0, "options": 30.0}
LONG_COLUMNS = ("iteration", "cum_samples", "wall_seconds", "batch_size", "objective")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str = "newsvendor"
    method: str = "sgd"
    rules: list = field(default_factory=lambda: list(PAPER_RULES))
    seed: int = 0
    alpha: float = 0.05
    n0: int = 32
    n_min: int = 4
    n_max: int = 8192
    epsilon_grad: float = 1e-12
    eta0: float = 1.0
    adam_eta: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    budget_seconds: Optional[float] = None
    max_iterations: Optional[int] = None
    trace_every: Optional[int] = None
    grid_points: int = 200
    eval_sample_size: int = 10000
    dimension: int = 50
    rate: float = 0.01
    num_factors: int = 5
    options_cap: float = 0.999
    instance: Optional[str] = None
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        self.rules = [str(r) for r in self.rules]
        self.validate()

    def validate(self):
        def bad(name, constraint):
            raise ConfigError(f"{name}={getattr(self, name)!r}: {constraint}")

        if self.problem not in ("newsvendor", "options"):
            bad("problem", "must be 'newsvendor' or 'options'")
        if self.method not in ("sgd", "adam"):
            bad("method", "must be 'sgd' or 'adam'")
        if not self.rules:
            bad("rules", "at least one rule is required")
        for r in self.rules:
            if r not in ("PD", "1D") and not (r.isdigit() and int(r) >= 2):
                bad("rules", f"entry {r!r} must be PD, 1D or a fixed batch size >= 2")
        if len(set(self.rules)) != len(self.rules):
            bad("rules", "duplicate rule labels")
        if not 0.0 < self.alpha < 0.5:
            bad("alpha", "must lie in the open interval (0, 0.5)")
        if self.n_min < 2:
            bad("n_min", "must be >= 2")
        if self.n_max < self.n_min:
            bad("n_max", "must be >= n_min")
        if not self.n_min <= self.n0 <= self.n_max:
            bad("n0", "must lie in [n_min, n_max]")
        if not self.epsilon_grad > 0:
            bad("epsilon_grad", "must be positive")
        if not self.eta0 > 0:
            bad("eta0", "must be positive")
        if not self.adam_eta > 0:
            bad("adam_eta", "must be positive")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                bad(name, "must lie in [0, 1)")
        if not self.adam_epsilon > 0:
            bad("adam_epsilon", "must be positive")
        if self.budget_seconds is not None and not self.budget_seconds > 0:
            bad("budget_seconds", "must be positive")
        if self.max_iterations is not None and self.max_iterations < 0:
            bad("max_iterations", "must be >= 0")
        if self.trace_every is not None and self.trace_every < 1:
            bad("trace_every", "must be >= 1")
        if self.grid_points < 2:
            bad("grid_points", "must be >= 2")
        if self.eval_sample_size < 2:
            bad("eval_sample_size", "must be >= 2")
        if self.dimension < 1:
            bad("dimension", "must be >= 1")
        if self.rate < 0:
            bad("rate", "must be nonnegative")
        if self.num_factors < 1:
            bad("num_factors", "must be >= 1")
        if not 0.0 < self.options_cap <= 1.0:
            bad("options_cap", "must lie in (0, 1]")
        if self.workers < 1:
            bad("workers", "must be >= 1")

    def adam_config(self) -> AdamConfig:
        return AdamConfig(self.adam_eta, self.adam_beta1, self.adam_beta2, self.adam_epsilon)

    def budget(self) -> Budget:
        seconds = self.budget_seconds
        if seconds is None and self.max_iterations is None:
            seconds = DEFAULT_BUDGET_SECONDS[self.problem]
        return Budget(seconds, self.max_iterations)

    def cadence(self) -> TraceCadence:
        budget = self.budget()
        if self.trace_every is not None or budget.max_seconds is None:
            return TraceCadence(every=self.trace_every or 1)
        return TraceCadence(every=None, interval=budget.max_seconds / self.grid_points)

    def controller(self, label: str) -> SamplingController:
        common = dict(alpha=self.alpha, n_min=self.n_min, n_max=self.n_max,
                      epsilon_grad=self.epsilon_grad)
        if label == "PD":
            return SamplingController(Rule.PER_DIMENSION_MEDIAN, n_current=self.n0, **common)
        if label == "1D":
            return SamplingController(Rule.SINGLE_UPDATE, n_current=self.n0, **common)
        n = int(label)
        common["n_min"] = min(self.n_min, n)
        common["n_max"] = max(self.n_max, n)
        return SamplingController(Rule.FIXED, n_current=n, **common)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, value):
    kind = CONFIG_FIELDS[name]
    if value is None:
        if kind.startswith("Optional"):
            return None
        raise ConfigError(f"{name}: a value is required")
    try:
        if "float" in kind:
            return float(value)
        if "int" in kind:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "list":
            if isinstance(value, str):
                return [r.strip() for r in value.split(",") if r.strip()]
            return [str(v) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}={value!r}: expected {kind}") from None


def parse_config(path=None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Build a validated config from a YAML file and/or flag overrides.

    Unknown keys are rejected; ``None`` overrides are ignored.
    """
    data = {}
    if path is not None:
        text = Path(path).read_text()
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a key-value mapping")
        data.update(loaded)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    unknown = sorted(set(data) - set(CONFIG_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in data.items()})


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------


def build_instance(cfg: ExperimentConfig):
    if cfg.instance is not None:
        spec = spec_from_dict(yaml.safe_load(Path(cfg.instance).read_text()))
        if spec.to_dict()["problem"] != cfg.problem:
            raise ConfigError(f"instance={cfg.instance!r}: holds a different problem than {cfg.problem!r}")
        return spec
    rng = RngStream(cfg.seed, STREAM_INSTANCE)
    if cfg.problem == "newsvendor":
        return generate_newsvendor_instance(cfg.dimension, rng)
    return generate_options_instance(cfg.dimension, rng, rate=cfg.rate, num_factors=cfg.num_factors)


@dataclass
class Suite:
    """Shared instance and evaluator for every rule of one experiment."""

    cfg: ExperimentConfig
    problem: object
    evaluator: MonteCarloEvaluator

    @classmethod
    def build(cls, cfg: ExperimentConfig) -> "Suite":
        problem = make_problem(build_instance(cfg))
        evaluator = MonteCarloEvaluator(problem, cfg.eval_sample_size, RngStream(cfg.seed, STREAM_EVAL))
        return cls(cfg, problem, evaluator)

    def region(self):
        return self.problem.region(self.cfg.options_cap)

    def run(self, label: str):
        cfg = self.cfg
        rng = RngStream(cfg.seed, rule_stream_id(label))
        try:
            return run_optimization(
                self.problem, self.region(), Method(cfg.method), cfg.controller(label),
                cfg.budget(), rng, self.evaluator, self.problem.default_start(),
                sgd=SgdConfig(cfg.eta0), adam=cfg.adam_config(), cadence=cfg.cadence(),
            )
        except Exception as exc:
            raise RuntimeError(f"rule {label}: {exc}") from exc


def rule_stream_id(label: str) -> int:
    return (STREAM_OPTIMIZE << 32) | zlib.crc32(label.encode())


def _run_one(cfg: ExperimentConfig, label: str):
    return Suite.build(cfg).run(label)


def run_suite(cfg: ExperimentConfig, suite: Optional[Suite] = None) -> dict:
    """Run every configured rule on one shared instance; returns label -> trace."""
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {label: pool.submit(_run_one, cfg, label) for label in cfg.rules}
            return {label: fut.result() for label, fut in futures.items()}
    suite = suite or Suite.build(cfg)
    out = {}
    for label in cfg.rules:
        out[label] = suite.run(label)
        log.info("%s/%s rule %s: %d records, final objective %.6g",
                 cfg.problem, cfg.method, label, len(out[label]), out[label][-1].objective)
    return out


# --------------------------------------------------------------------------
# Trace files
# --------------------------------------------------------------------------


def locf(xs, ys, grid) -> np.ndarray:
    """Last observation carried forward: value at the latest ``xs <= g``."""
    idx = np.searchsorted(np.asarray(xs, dtype=float), grid, side="right") - 1
    idx = np.clip(idx, 0, None)
    return np.asarray(ys, dtype=float)[idx]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _wide_table(traces: dict, axis: str, grid) -> str:
    head = "T" if axis == "wall_seconds" else "S"
    lines = [" ".join([head] + list(traces))]
    cols = []
    for trace in traces.values():
        xs = [getattr(r, axis) for r in trace]
        cols.append(locf(xs, [r.objective for r in trace], grid))
    for j, g in enumerate(grid):
        lines.append(" ".join([_fmt(g)] + [_fmt(c[j]) for c in cols]))
    return "\n".join(lines) + "\n"


def _long_table(trace) -> str:
    buf = io.StringIO()
    buf.write(",".join(LONG_COLUMNS) + "\n")
    for r in trace:
        buf.write(f"{r.iteration},{r.cum_samples},{r.wall_seconds:.6f},{r.batch_size},{r.objective!r}\n")
    return buf.getvalue()


def emit_traces(traces: dict, output_dir, problem: str = "run", method: str = "sgd",
                budget_seconds: Optional[float] = None, grid_points: int = 200) -> list[Path]:
    """Write the wide time-grid file, the wide sample-grid file and one long CSV per rule."""
    if not traces or any(len(t) == 0 for t in traces.values()):
        raise ValueError("emit_traces needs at least one non-empty trace")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{problem}_{method}"
    t_end = budget_seconds or max(t[-1].wall_seconds for t in traces.values())
    s_end = max(t[-1].cum_samples for t in traces.values())
    paths = []
    wide = out / f"{stem}.dat"
    wide.write_text(_wide_table(traces, "wall_seconds", np.linspace(0.0, t_end, grid_points)))
    paths.append(wide)
    samples = out / f"{stem}_samples.dat"
    samples.write_text(_wide_table(traces, "cum_samples", np.linspace(0.0, s_end, grid_points)))
    paths.append(samples)
    for label, trace in traces.items():
        p = out / f"{stem}_{label}.csv"
        p.write_text(_long_table(trace))
        paths.append(p)
    return paths


def read_long_trace(path) -> list[TraceRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split(",")) != LONG_COLUMNS:
        raise ValueError(f"{path}: missing long-format header")
    recs = []
    for line in lines[1:]:
        i, c, w, b, o = line.split(",")
        recs.append(TraceRecord(int(i), int(c), float(w), int(b), float(o)))
    return recs


# --------------------------------------------------------------------------
# Plots
# --------------------------------------------------------------------------


class DataFileError(ValueError):
    pass


RULE_COLORS = {"PD": "blue", "1D": "cyan", "32": "black", "256": "gray", "512": "lightgray"}
TITLES = {
    ("newsvendor", "sgd"): "Newsvendor problem using basic SGD",
    ("newsvendor", "adam"): "Newsvendor problem using Adam",
    ("options", "sgd"): "Options portfolio using basic SGD",
    ("options", "adam"): "Options portfolio using Adam",
}


def read_wide(path) -> tuple[list[str], np.ndarray]:
    """Parse a wide data file into (header, rows); errors carry the line number."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].strip():
        raise DataFileError(f"{path}:1: missing header row")
    header = lines[0].split()
    if len(header) < 2:
        raise DataFileError(f"{path}:1: header needs an axis column and at least one rule column")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != len(header):
            raise DataFileError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise DataFileError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise DataFileError(f"{path}: no data rows")
    return header, np.array(rows)


def default_title(path) -> str:
    stem = Path(path).stem
    for (prob, meth), title in TITLES.items():
        if stem.startswith(f"{prob}_{meth}"):
            return title
    return stem


def emit_plot(data_path, output_path, title: Optional[str] = None) -> Path:
    """Render objective-vs-time curves (one per rule) to a static SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    header, rows = read_wide(data_path)
    with matplotlib.rc_context({"svg.hashsalt": "dynsgd", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        for j, label in enumerate(header[1:], start=1):
            ax.plot(rows[:, 0], rows[:, j], label=label, color=RULE_COLORS.get(label), linewidth=1.0)
        ax.set_xlabel("Time (s)" if header[0] == "T" else "Gradient samples")
        ax.set_ylabel("Expected Utility")
        ax.set_title(title or default_title(data_path))
        ax.legend(loc="upper left", bbox_to_anchor=(1.02, 1.0))
        fig.tight_layout()
        out = Path(output_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out


def final_objectives(traces: dict) -> dict:
    return {label: trace[-1].objective for label, trace in traces.items()}


def summarize(traces: dict) -> str:
    rows = []
    for label, trace in traces.items():
        last = trace[-1]
        rows.append(f"{label:>5}  iters={last.iteration:<8d} samples={last.cum_samples:<10d} "
                    f"N_last={last.batch_size:<6d} objective={last.objective:.6g}")
    return "\n".join(rows)



@dataclass(frozen=True)
class RuleComparison:
    """Final objectives of the dynamic rules against the best fixed-size rule."""

    best_fixed: str
    best_fixed_objective: float
    standard_error: float
    dynamic_objectives: dict

    @property
    def threshold(self) -> float:
        return self.best_fixed_objective - self.standard_error

    @property
    def passed(self) -> bool:
        return all(v >= self.threshold for v in self.dynamic_objectives.values())


def compare_dynamic_to_fixed(traces: dict, evaluator: MonteCarloEvaluator) -> RuleComparison:
    """Check each dynamic rule ends within one evaluator standard error of the best fixed rule.

    The standard error is that of the common-random-number estimate at the
    best fixed rule's final iterate.
    """
    fixed = {k: v for k, v in traces.items() if k.isdigit()}
    dynamic = {k: v for k, v in traces.items() if not k.isdigit()}
    if not fixed or not dynamic:
        raise ValueError("comparison needs at least one fixed and one dynamic rule")
    best = max(fixed, key=lambda k: fixed[k][-1].objective)
    se = evaluator.standard_error(fixed[best].final_iterate)
    return RuleComparison(best, fixed[best][-1].objective, se,
                          {k: v[-1].objective for k, v in dynamic.items()})
