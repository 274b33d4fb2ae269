"""Mini-batch gradient statistics and dynamic batch-size rules.

Each rule picks the next batch size so that ``-ghat`` is a descent direction
with probability ``1 - alpha`` under a normal model of the gradient estimate:

* per-dimension: for each coordinate ``k`` the size that makes
  ``Phi(|mean_k| / sqrt(var_k)) = 1 - alpha``, aggregated by the median;
* single: the size that makes ``P(ghat^T g > 0) = 1 - alpha`` using a
  diagonal covariance;
* fixed: the current size, unchanged.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .num_core import normal_cdf, normal_quantile

# Relative slack for the ceiling so ratios that should be integral are not
# bumped up by rounding noise.
_CEIL_RTOL = 1e-9


class Rule(enum.Enum):
    PER_DIMENSION_MEDIAN = "PD"
    SINGLE_UPDATE = "1D"
    FIXED = "fixed"


@dataclass(frozen=True)
class GradientBatchStats:
    mean: np.ndarray
    var_of_mean: np.ndarray
    batch_size: int

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if np.shape(self.mean) != np.shape(self.var_of_mean):
            raise ValueError("mean and var_of_mean must have the same shape")
        if np.any(np.asarray(self.var_of_mean) < 0):
            raise ValueError("var_of_mean entries must be nonnegative")

    @property
    def dim(self) -> int:
        return int(np.size(self.mean))


@dataclass
class SamplingController:
    """Mutable batch-size state for one optimization run."""

    rule: Rule
    alpha: float = 0.05
    n_current: int = 32
    n_min: int = 4
    n_max: int = 8192
    epsilon_grad: float = 1e-12
    z_alpha: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if self.n_min < 2:
            raise ValueError(f"n_min must be >= 2, got {self.n_min}")
        if self.n_max < self.n_min:
            raise ValueError(f"n_max ({self.n_max}) must be >= n_min ({self.n_min})")
        if self.rule is not Rule.FIXED and not self.n_min <= self.n_current <= self.n_max:
            raise ValueError(
                f"n_current={self.n_current} outside [{self.n_min}, {self.n_max}]"
            )
        if self.rule is Rule.FIXED and self.n_current < 2:
            raise ValueError("fixed batch size must be >= 2")
        if self.epsilon_grad <= 0:
            raise ValueError("epsilon_grad must be positive")
        self.z_alpha = normal_quantile(1.0 - self.alpha)

    @classmethod
    def fixed(cls, n: int, **kwargs) -> "SamplingController":
        kwargs.setdefault("n_min", min(4, n))
        kwargs.setdefault("n_max", max(8192, n))
        return cls(Rule.FIXED, n_current=n, **kwargs)

    def clamp(self, n: float) -> int:
        if not n < self.n_max:  # also catches inf / nan
            return self.n_max
        return max(self.n_min, int(n))


def accumulate_stats(gradient_samples) -> GradientBatchStats:
    """Batch mean and per-coordinate variance of the mean.

    ``var_of_mean_k = sum_j (g_jk - mean_k)^2 / (N (N - 1))``, two-pass.
    """
    g = np.asarray(gradient_samples, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.ndim != 2:
        raise ValueError("gradient samples must form an N x m array")
    n = g.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 gradient samples, got {n}")
    mean = g.mean(axis=0)
    dev = g - mean
    var_of_mean = np.einsum("ij,ij->j", dev, dev) / (n * (n - 1))
    return GradientBatchStats(mean=mean, var_of_mean=var_of_mean, batch_size=n)


def descent_probability_per_dim(stats: GradientBatchStats) -> np.ndarray:
    """``Phi(|mean_k| / sqrt(var_of_mean_k))`` for each coordinate."""
    mean = np.abs(np.asarray(stats.mean, dtype=float))
    var = np.asarray(stats.var_of_mean, dtype=float)
    out = np.empty_like(mean)
    for k, (m, v) in enumerate(zip(mean, var)):
        if v == 0.0:
            out[k] = 1.0 if m != 0.0 else 0.5
        else:
            out[k] = normal_cdf(m / math.sqrt(v))
    return out


def _ceil(x):
    """Ceiling that snaps values within a relative 1e-9 of an integer."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        r = np.round(x)
        near = np.abs(x - r) <= _CEIL_RTOL * np.maximum(1.0, np.abs(x))
        out = np.where(near, r, np.ceil(x))
    return out if out.ndim else float(out)


def per_dimension_candidates(stats: GradientBatchStats, ctl: SamplingController) -> np.ndarray:
    """Unclamped per-coordinate sizes ``ceil(N var_k z^2 / mean_k^2)``.

    Coordinates whose mean is within ``epsilon_grad`` of zero saturate at
    ``n_max``: there is no evidence about their sign.
    """
    mean = np.asarray(stats.mean, dtype=float)
    var = np.asarray(stats.var_of_mean, dtype=float)
    flat = np.abs(mean) <= ctl.epsilon_grad
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ratio = stats.batch_size * var * ctl.z_alpha ** 2 / np.where(flat, 1.0, mean * mean)
    return np.where(flat, float(ctl.n_max), _ceil(ratio))


def lower_median(values) -> float:
    s = np.sort(np.asarray(values, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("median of an empty sequence")
    return float(s[(s.size - 1) // 2])


def per_dimension_next_size(stats: GradientBatchStats, ctl: SamplingController) -> int:
    return ctl.clamp(lower_median(per_dimension_candidates(stats, ctl)))


def single_update_next_size(stats: GradientBatchStats, ctl: SamplingController) -> int:
    mean2 = np.asarray(stats.mean, dtype=float) ** 2
    numerator = float(np.sum(mean2 * np.asarray(stats.var_of_mean, dtype=float)))
    denominator = float(np.sum(mean2)) ** 2
    if denominator <= ctl.epsilon_grad ** 4:
        return ctl.n_max
    return ctl.clamp(_ceil(stats.batch_size * numerator * ctl.z_alpha ** 2 / denominator))


def next_size(stats: GradientBatchStats, ctl: SamplingController) -> int:
    """Batch size for the next iteration; updates ``ctl.n_current``."""
    if ctl.rule is Rule.PER_DIMENSION_MEDIAN:
        n = per_dimension_next_size(stats, ctl)
    elif ctl.rule is Rule.SINGLE_UPDATE:
        n = single_update_next_size(stats, ctl)
    else:
        n = ctl.n_current
    ctl.n_current = n
    return n
