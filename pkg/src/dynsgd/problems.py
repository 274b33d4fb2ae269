"""Stochastic test problems: exponential-utility newsvendor and a log-optimal option portfolio.

Both problems are maximizations. Oracles here follow one sign convention:
``*_gradient`` functions return per-sample gradients of the NEGATED objective
(so the optimizers always descend), while ``*_objective`` functions and the
evaluator report the objective in its natural maximize orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .num_core import (
    RngStream,
    cholesky_factor,
    constant_correlation_matrix,
    normal_cdf,
    random_correlation_matrix,
    sample_correlated_normals,
)
from .optimizers import FeasibleRegion


@dataclass(frozen=True)
class ScenarioBatch:
    """One row per sampled scenario.

    ``outcomes`` holds demands (newsvendor) or terminal prices (options);
    ``call_payoff`` / ``put_payoff`` are filled for the options problem only.
    """

    kind: str
    outcomes: np.ndarray
    call_payoff: Optional[np.ndarray] = None
    put_payoff: Optional[np.ndarray] = None

    def __len__(self):
        return self.outcomes.shape[0]


def _vec(values) -> np.ndarray:
    return np.asarray(values, dtype=float).copy()


# --------------------------------------------------------------------------
# Newsvendor
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NewsvendorSpec:
    n_products: int
    prices: np.ndarray
    costs: np.ndarray
    risk_aversion: float
    demand_mu: np.ndarray
    demand_sigma: np.ndarray
    demand_corr: np.ndarray
    demand_chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_products
        for name in ("prices", "costs", "demand_mu", "demand_sigma"):
            arr = _vec(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}, got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        corr = np.asarray(self.demand_corr, dtype=float)
        if corr.shape != (n, n):
            raise ValueError(f"demand_corr must be {n}x{n}")
        if not np.allclose(np.diag(corr), 1.0):
            raise ValueError("demand_corr must have unit diagonal")
        if np.any(self.prices <= self.costs):
            raise ValueError("prices must exceed costs for every product")
        if np.any(self.demand_sigma < 0):
            raise ValueError("demand_sigma must be nonnegative")
        if not self.risk_aversion > 0:
            raise ValueError("risk_aversion must be positive")
        object.__setattr__(self, "demand_corr", corr)
        object.__setattr__(self, "demand_chol", cholesky_factor(corr))

    def to_dict(self) -> dict:
        return {
            "problem": "newsvendor",
            "n_products": self.n_products,
            "prices": self.prices.tolist(),
            "costs": self.costs.tolist(),
            "risk_aversion": float(self.risk_aversion),
            "demand_mu": self.demand_mu.tolist(),
            "demand_sigma": self.demand_sigma.tolist(),
            "demand_corr": self.demand_corr.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NewsvendorSpec":
        d = dict(d)
        d.pop("problem", None)
        d["demand_corr"] = np.asarray(d["demand_corr"], dtype=float)
        return cls(**d)


def generate_newsvendor_instance(
    n: int,
    rng: RngStream,
    price_range=(15.0, 30.0),
    cost: float = 10.0,
    risk_aversion: float = 0.02,
    demand_mu: float = 3.0,
    sigma_range=(0.4724, 1.2684),
    demand_rho: float = 0.25,
) -> NewsvendorSpec:
    """Random newsvendor instance; defaults reproduce the 50-product setup."""
    if n < 1:
        raise ValueError("n must be >= 1")
    prices = rng.uniform(price_range[0], price_range[1], size=n)
    sigma = rng.uniform(sigma_range[0], sigma_range[1], size=n)
    return NewsvendorSpec(
        n_products=n,
        prices=prices,
        costs=np.full(n, float(cost)),
        risk_aversion=float(risk_aversion),
        demand_mu=np.full(n, float(demand_mu)),
        demand_sigma=sigma,
        demand_corr=constant_correlation_matrix(n, demand_rho),
    )


def newsvendor_sample(spec: NewsvendorSpec, count: int, rng: RngStream) -> ScenarioBatch:
    """Correlated lognormal demands ``exp(mu + sigma * (L u))``."""
    z = sample_correlated_normals(spec.demand_chol, count, rng)
    return ScenarioBatch("newsvendor", np.exp(spec.demand_mu + spec.demand_sigma * z))


def _newsvendor_profit(spec: NewsvendorSpec, x: np.ndarray, demands: np.ndarray) -> np.ndarray:
    return np.minimum(x, demands) @ spec.prices - spec.costs @ x


def newsvendor_utility(spec: NewsvendorSpec, x, batch: ScenarioBatch) -> np.ndarray:
    """Per-sample utility ``-exp(-lambda * profit)``."""
    x = np.asarray(x, dtype=float)
    return -np.exp(-spec.risk_aversion * _newsvendor_profit(spec, x, batch.outcomes))


def newsvendor_gradient(spec: NewsvendorSpec, x, batch: ScenarioBatch) -> np.ndarray:
    """Per-sample gradients of the negated utility, shape (N, n)."""
    x = np.asarray(x, dtype=float)
    d = batch.outcomes
    lam = spec.risk_aversion
    weight = np.exp(-lam * _newsvendor_profit(spec, x, d))
    marginal = spec.prices * (x < d) - spec.costs
    return -lam * marginal * weight[:, None]


def newsvendor_objective(spec: NewsvendorSpec, x, batch: ScenarioBatch) -> float:
    return float(np.mean(newsvendor_utility(spec, x, batch)))


# --------------------------------------------------------------------------
# Options portfolio
# --------------------------------------------------------------------------


def bs_atm_prices(sigma: float, r: float, s0: float = 1.0) -> tuple[float, float]:
    """Black-Scholes call and put prices for strike ``s0`` and one-year maturity."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if r < 0:
        raise ValueError(f"rate must be nonnegative, got {r}")
    d1 = (r + 0.5 * sigma * sigma) / sigma
    d2 = d1 - sigma
    disc = math.exp(-r)
    call = s0 * (normal_cdf(d1) - disc * normal_cdf(d2))
    put = call - s0 * (1.0 - disc)
    return call, put


@dataclass(frozen=True)
class OptionsPortfolioSpec:
    n_stocks: int
    mu: np.ndarray
    own_cov: np.ndarray
    market_cov: np.ndarray
    rate: float
    s0: np.ndarray
    call_prices: np.ndarray = field(init=False)
    put_prices: np.ndarray = field(init=False)
    own_vol: np.ndarray = field(init=False, repr=False, compare=False)
    own_chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = self.n_stocks
        for name in ("mu", "s0"):
            arr = _vec(getattr(self, name))
            if arr.shape != (m,):
                raise ValueError(f"{name} must have length {m}, got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        for name in ("own_cov", "market_cov"):
            cov = np.asarray(getattr(self, name), dtype=float)
            if cov.shape != (m, m):
                raise ValueError(f"{name} must be {m}x{m}")
            if np.any(np.diag(cov) <= 0):
                raise ValueError(f"{name} must have a positive diagonal")
            object.__setattr__(self, name, cov)
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")
        if np.any(self.s0 <= 0):
            raise ValueError("s0 must be positive")
        vol = np.sqrt(np.diag(self.own_cov))
        mvol = np.sqrt(np.diag(self.market_cov))
        prices = [bs_atm_prices(s, self.rate, s0) for s, s0 in zip(mvol, self.s0)]
        object.__setattr__(self, "call_prices", np.array([c for c, _ in prices]))
        object.__setattr__(self, "put_prices", np.array([p for _, p in prices]))
        object.__setattr__(self, "own_vol", vol)
        object.__setattr__(self, "own_chol", cholesky_factor(self.own_cov / np.outer(vol, vol)))

    @property
    def dim(self) -> int:
        return 2 * self.n_stocks

    def to_dict(self) -> dict:
        return {
            "problem": "options",
            "n_stocks": self.n_stocks,
            "mu": self.mu.tolist(),
            "own_cov": self.own_cov.tolist(),
            "market_cov": self.market_cov.tolist(),
            "rate": float(self.rate),
            "s0": self.s0.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptionsPortfolioSpec":
        d = dict(d)
        d.pop("problem", None)
        return cls(**d)


def _random_cov(m: int, num_factors: int, vol_range, rng: RngStream) -> np.ndarray:
    corr = random_correlation_matrix(m, min(num_factors, m), rng)
    vol = rng.uniform(vol_range[0], vol_range[1], size=m)
    return corr * np.outer(vol, vol)


def generate_options_instance(
    m: int,
    rng: RngStream,
    rate: float = 0.01,
    num_factors: int = 5,
    vol_range=(0.1, 0.6),
    mu_scale: float = 2.0,
    p_positive: float = 0.75,
) -> OptionsPortfolioSpec:
    """Random option-portfolio instance.

    The investor's covariance and the market's (used only for pricing) are
    drawn independently from the same factor-model recipe. Expected returns
    have magnitude ``U[0, mu_scale] * vol`` and are positive with probability
    ``p_positive``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    own = _random_cov(m, num_factors, vol_range, rng)
    market = _random_cov(m, num_factors, vol_range, rng)
    vol = np.sqrt(np.diag(own))
    magnitude = rng.uniform(0.0, mu_scale, size=m) * vol
    sign = np.where(rng.random(m) < p_positive, 1.0, -1.0)
    return OptionsPortfolioSpec(
        n_stocks=m, mu=sign * magnitude, own_cov=own, market_cov=market,
        rate=float(rate), s0=np.ones(m),
    )


def options_sample(spec: OptionsPortfolioSpec, count: int, rng: RngStream) -> ScenarioBatch:
    """Terminal prices under the investor's GBM dynamics, with option payoffs."""
    w = sample_correlated_normals(spec.own_chol, count, rng)
    vol = spec.own_vol
    s1 = spec.s0 * np.exp(spec.mu - 0.5 * vol * vol + vol * w)
    call = np.maximum(s1 - spec.s0, 0.0)
    put = np.maximum(spec.s0 - s1, 0.0)
    return ScenarioBatch("options", s1, call, put)


def options_excess_returns(spec: OptionsPortfolioSpec, batch: ScenarioBatch) -> np.ndarray:
    """Per-sample ``[C1/C0 - (1+r), P1/P0 - (1+r)]``, shape (N, 2m)."""
    growth = 1.0 + spec.rate
    return np.hstack([batch.call_payoff / spec.call_prices - growth,
                      batch.put_payoff / spec.put_prices - growth])


def _wealth(spec: OptionsPortfolioSpec, x, batch: ScenarioBatch):
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise ValueError(f"portfolio must have length {spec.dim}, got shape {x.shape}")
    excess = options_excess_returns(spec, batch)
    wealth = 1.0 + spec.rate + excess @ x
    bad = np.nonzero(wealth <= 0.0)[0]
    if bad.size:
        raise ValueError(
            f"nonpositive wealth {wealth[bad[0]]:.3g} at sample {bad[0]}: portfolio is over-leveraged"
        )
    return excess, wealth


def options_gradient(spec: OptionsPortfolioSpec, x, batch: ScenarioBatch) -> np.ndarray:
    """Per-sample gradients of negated log-wealth, shape (N, 2m), calls first."""
    excess, wealth = _wealth(spec, x, batch)
    return -excess / wealth[:, None]


def options_log_wealth(spec: OptionsPortfolioSpec, x, batch: ScenarioBatch) -> np.ndarray:
    return np.log(_wealth(spec, x, batch)[1])


def options_objective(spec: OptionsPortfolioSpec, x, batch: ScenarioBatch) -> float:
    return float(np.mean(options_log_wealth(spec, x, batch)))


# --------------------------------------------------------------------------
# Oracle adapters and the common-random-number evaluator
# --------------------------------------------------------------------------


class NewsvendorProblem:
    name = "newsvendor"

    def __init__(self, spec: NewsvendorSpec):
        self.spec = spec

    @property
    def dim(self) -> int:
        return self.spec.n_products

    def region(self, cap: float = 1.0) -> FeasibleRegion:
        return FeasibleRegion.orthant()

    def default_start(self) -> np.ndarray:
        return np.ones(self.dim)

    def sample(self, count, rng):
        return newsvendor_sample(self.spec, count, rng)

    def gradients(self, x, batch):
        return newsvendor_gradient(self.spec, x, batch)

    def per_sample_objective(self, x, batch):
        return newsvendor_utility(self.spec, x, batch)


class OptionsProblem:
    name = "options"

    def __init__(self, spec: OptionsPortfolioSpec):
        self.spec = spec

    @property
    def dim(self) -> int:
        return self.spec.dim

    def region(self, cap: float = 1.0) -> FeasibleRegion:
        return FeasibleRegion.capped_simplex(cap)

    def default_start(self) -> np.ndarray:
        return np.zeros(self.dim)

    def sample(self, count, rng):
        return options_sample(self.spec, count, rng)

    def gradients(self, x, batch):
        return options_gradient(self.spec, x, batch)

    def per_sample_objective(self, x, batch):
        return options_log_wealth(self.spec, x, batch)


def make_problem(spec):
    if isinstance(spec, NewsvendorSpec):
        return NewsvendorProblem(spec)
    if isinstance(spec, OptionsPortfolioSpec):
        return OptionsProblem(spec)
    raise TypeError(f"unknown problem spec {type(spec).__name__}")


def spec_from_dict(d: dict):
    kind = d.get("problem")
    if kind == "newsvendor":
        return NewsvendorSpec.from_dict(d)
    if kind == "options":
        return OptionsPortfolioSpec.from_dict(d)
    raise ValueError(f"instance file has unknown problem kind {kind!r}")


class MonteCarloEvaluator:
    """Objective estimate on one scenario batch frozen at construction.

    Every iterate, from every method, is scored on the same batch, so the
    curves differ only through the iterates.
    """

    def __init__(self, problem, eval_sample_size: int, rng: RngStream):
        if eval_sample_size < 2:
            raise ValueError("eval_sample_size must be >= 2")
        self.problem = problem
        self.size = int(eval_sample_size)
        self.batch = problem.sample(self.size, rng)

    def values(self, x) -> np.ndarray:
        return self.problem.per_sample_objective(np.asarray(x, dtype=float), self.batch)

    def __call__(self, x) -> float:
        return float(np.mean(self.values(x)))

    def standard_error(self, x) -> float:
        return float(np.std(self.values(x), ddof=1) / math.sqrt(self.size))


def mc_objective_evaluator(problem, eval_sample_size: int, rng: RngStream) -> MonteCarloEvaluator:
    return MonteCarloEvaluator(problem, eval_sample_size, rng)
