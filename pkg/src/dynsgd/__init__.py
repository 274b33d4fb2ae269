"""Projected mini-batch SGD with dynamic sample sizes.

Batch sizes are chosen each iteration so that the negative gradient
estimate is a descent direction with probability ``1 - alpha``.
"""

from .num_core import RngStream, cholesky_factor, normal_cdf, normal_quantile
from .optimizers import (
    AdamConfig,
    Budget,
    FeasibleRegion,
    Method,
    SgdConfig,
    TraceRecord,
    adam_step,
    project,
    run_optimization,
    sgd_step,
)
from .sampling_rules import (
    GradientBatchStats,
    Rule,
    SamplingController,
    accumulate_stats,
    next_size,
)

__version__ = "0.1.0"
