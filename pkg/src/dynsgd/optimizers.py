"""Projected mini-batch SGD and Adam, Euclidean projections, and the run loop."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from .num_core import RngStream
from .sampling_rules import GradientBatchStats, SamplingController, accumulate_stats, next_size


class Method(enum.Enum):
    BASIC_SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class SgdConfig:
    """Step size ``eta0 / i`` at iteration ``i``."""

    eta0: float = 1.0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be positive, got {self.eta0}")

    def step_size(self, iteration: int) -> float:
        return self.eta0 / iteration


@dataclass(frozen=True)
class AdamConfig:
    eta: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"adam eta must be positive, got {self.eta}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must lie in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"beta2 must lie in [0, 1), got {self.beta2}")
        if not self.epsilon > 0:
            raise ValueError(f"adam epsilon must be positive, got {self.epsilon}")


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim), 0)


@dataclass(frozen=True)
class FeasibleRegion:
    """Either the nonnegative orthant or ``{x >= 0, sum(x) <= cap}``."""

    kind: str = "orthant"
    cap: float = 1.0

    def __post_init__(self):
        if self.kind not in ("orthant", "capped_simplex"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if not self.cap > 0:
            raise ValueError(f"cap must be positive, got {self.cap}")

    @classmethod
    def orthant(cls) -> "FeasibleRegion":
        return cls("orthant")

    @classmethod
    def capped_simplex(cls, cap: float = 1.0) -> "FeasibleRegion":
        return cls("capped_simplex", cap)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            return False
        if self.kind == "capped_simplex":
            return float(np.sum(x)) <= self.cap + tol
        return True


@dataclass
class OptimizerState:
    iterate: np.ndarray
    iteration: int = 1
    adam: Optional[AdamState] = None


def project(region: FeasibleRegion, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``region``."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    clipped = np.maximum(v, 0.0)
    # slack keeps projection idempotent when a projected sum rounds above cap
    if region.kind == "orthant" or clipped.sum() <= region.cap * (1.0 + 1e-13):
        return clipped
    return _project_simplex(v, region.cap)


def _project_simplex(v: np.ndarray, cap: float) -> np.ndarray:
    # Sort-based projection onto {x >= 0, sum x = cap}.
    u = np.sort(v, kind="stable")[::-1]
    css = np.cumsum(u) - cap
    ks = np.arange(1, u.size + 1)
    active = np.nonzero(u - css / ks > 0)[0]
    k = active[-1]
    theta = css[k] / (k + 1)
    out = v - theta
    out[out <= 0] = 0.0
    return out


def _check_gradient(ghat, state: OptimizerState) -> np.ndarray:
    g = np.asarray(ghat, dtype=float)
    if g.shape != state.iterate.shape:
        raise ValueError(f"gradient shape {g.shape} does not match iterate {state.iterate.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError(f"non-finite gradient estimate at iteration {state.iteration}")
    return g


def sgd_step(state: OptimizerState, ghat, cfg: SgdConfig, region: FeasibleRegion) -> OptimizerState:
    g = _check_gradient(ghat, state)
    x = project(region, state.iterate - cfg.step_size(state.iteration) * g)
    return OptimizerState(x, state.iteration + 1, state.adam)


def adam_step(state: OptimizerState, ghat, cfg: AdamConfig, region: FeasibleRegion) -> OptimizerState:
    """One Adam update with bias correction, followed by projection."""
    g = _check_gradient(ghat, state)
    a = state.adam if state.adam is not None else AdamState.zeros(g.size)
    t = a.step_count + 1
    m = cfg.beta1 * a.first_moment + (1.0 - cfg.beta1) * g
    v = cfg.beta2 * a.second_moment + (1.0 - cfg.beta2) * g * g
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    x = project(region, state.iterate - cfg.eta * m_hat / (np.sqrt(v_hat) + cfg.epsilon))
    return OptimizerState(x, state.iteration + 1, AdamState(m, v, t))


class GradientOracle(Protocol):
    def sample(self, count: int, rng: RngStream): ...

    def gradients(self, x: np.ndarray, batch) -> np.ndarray: ...


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    cum_samples: int
    wall_seconds: float
    batch_size: int
    objective: float


class Trace(list):
    """List of :class:`TraceRecord` that also carries the last iterate."""

    final_iterate: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Budget:
    """Stop after ``max_seconds`` of optimizer time or ``max_iterations``, whichever first."""

    max_seconds: Optional[float] = None
    max_iterations: Optional[int] = None

    def __post_init__(self):
        if self.max_seconds is None and self.max_iterations is None:
            raise ValueError("budget needs max_seconds and/or max_iterations")
        if self.max_seconds is not None and self.max_seconds < 0:
            raise ValueError("max_seconds must be nonnegative")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")


class OracleError(RuntimeError):
    pass


@dataclass
class TraceCadence:
    """When to evaluate the objective and append a record.

    ``every`` records each ``every``-th iteration; ``interval`` records the
    first iteration after each multiple of ``interval`` optimizer seconds.
    The final iteration is always recorded.
    """

    every: Optional[int] = 1
    interval: Optional[float] = None
    _next_time: float = field(default=0.0, init=False)

    def __post_init__(self):
        if self.interval is not None:
            self._next_time = self.interval

    def due(self, iteration: int, wall: float) -> bool:
        hit = bool(self.every) and iteration % self.every == 0
        if self.interval is not None and wall >= self._next_time:
            hit = True
            while self._next_time <= wall:
                self._next_time += self.interval
        return hit


def run_optimization(
    problem: GradientOracle,
    region: FeasibleRegion,
    method: Method,
    ctl: SamplingController,
    budget: Budget,
    rng: RngStream,
    evaluate: Callable[[np.ndarray], float],
    x0,
    sgd: SgdConfig = SgdConfig(),
    adam: AdamConfig = AdamConfig(),
    cadence: Optional[TraceCadence] = None,
    callback: Optional[Callable[[OptimizerState, GradientBatchStats, int], None]] = None,
) -> Trace:
    """Projected mini-batch optimization with a dynamic batch-size controller.

    Each iteration draws ``ctl.n_current`` scenarios, averages their
    gradients, steps, and asks the controller for the next batch size.
    Objective evaluation happens with the optimizer clock paused.
    ``callback(state_before_step, stats, iteration)`` is invoked each iteration,
    also with the clock paused.
    """
    cadence = cadence or TraceCadence()
    x = np.asarray(x0, dtype=float).copy()
    if not region.contains(x):
        raise ValueError("starting point is not feasible")
    state = OptimizerState(x, 1, AdamState.zeros(x.size) if method is Method.ADAM else None)
    trace = Trace([TraceRecord(0, 0, 0.0, ctl.n_current, float(evaluate(x)))])
    wall = 0.0
    cum = 0
    i = 0
    while True:
        if budget.max_iterations is not None and i >= budget.max_iterations:
            break
        if budget.max_seconds is not None and wall >= budget.max_seconds:
            break
        i += 1
        t0 = time.perf_counter()
        n = ctl.n_current
        try:
            batch = problem.sample(n, rng)
            grads = problem.gradients(state.iterate, batch)
        except Exception as exc:
            raise OracleError(f"gradient oracle failed at iteration {i}: {exc}") from exc
        stats = accumulate_stats(grads)
        before = state
        if method is Method.ADAM:
            state = adam_step(state, stats.mean, adam, region)
        else:
            state = sgd_step(state, stats.mean, sgd, region)
        next_size(stats, ctl)
        wall += time.perf_counter() - t0
        cum += n
        if callback is not None:
            callback(before, stats, i)
        last = (budget.max_iterations is not None and i >= budget.max_iterations) or (
            budget.max_seconds is not None and wall >= budget.max_seconds
        )
        if last or cadence.due(i, wall):
            trace.append(TraceRecord(i, cum, wall, n, float(evaluate(state.iterate))))
    trace.final_iterate = state.iterate
    return trace
