import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dynsgd.num_core import RngStream
from dynsgd.optimizers import (
    AdamConfig,
    AdamState,
    Budget,
    FeasibleRegion,
    Method,
    OptimizerState,
    SgdConfig,
    TraceCadence,
    adam_step,
    project,
    run_optimization,
    sgd_step,
)
from dynsgd.sampling_rules import Rule, SamplingController

from oracles import adam_scalar, kkt_violation, random_capped_simplex_points
from synthetic import NoisyQuadratic

ORTHANT = FeasibleRegion.orthant()
SIMPLEX = FeasibleRegion.capped_simplex(1.0)

vectors = arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50))


# -- projection ---------------------------------------------------------------


def test_orthant_clip():
    np.testing.assert_array_equal(project(ORTHANT, [-1.0, 0.5]), [0.0, 0.5])


def test_simplex_interior_unchanged():
    np.testing.assert_array_equal(project(SIMPLEX, [0.2, 0.3]), [0.2, 0.3])


def test_simplex_example():
    p = project(SIMPLEX, [0.8, 0.6])
    np.testing.assert_allclose(p, [0.6, 0.4], atol=1e-15)
    # KKT oracle on a grid of feasible points
    grid = [(a, b) for a in np.linspace(0, 1, 41) for b in np.linspace(0, 1, 41) if a + b <= 1]
    assert kkt_violation(p, np.array([0.8, 0.6]), grid) <= 1e-12


def test_simplex_ties_map_to_zero():
    p = project(SIMPLEX, [1.0, 1.0, -3.0])
    np.testing.assert_allclose(p, [0.5, 0.5, 0.0])
    p = project(FeasibleRegion.capped_simplex(2.0), [3.0, 1.0, 1.0])
    np.testing.assert_allclose(p, [2.0, 0.0, 0.0])


def test_projection_rejects_nan():
    with pytest.raises(ValueError):
        project(ORTHANT, [np.nan])


@given(vectors, st.sampled_from([ORTHANT, SIMPLEX, FeasibleRegion.capped_simplex(3.5)]))
def test_projection_idempotent_and_feasible(v, region):
    p = project(region, v)
    np.testing.assert_array_equal(project(region, p), p)
    assert np.all(p >= 0)
    if region.kind == "capped_simplex":
        assert p.sum() <= region.cap + 1e-12


@settings(max_examples=50, deadline=None)
@given(vectors, st.integers(0, 2**31))
def test_projection_kkt(v, seed):
    rng = np.random.default_rng(seed)
    p = project(SIMPLEX, v)
    assert kkt_violation(p, v, random_capped_simplex_points(v.size, 100, 1.0, rng)) <= 1e-10
    q = project(ORTHANT, v)
    z = np.abs(rng.standard_normal((100, v.size))) * 10
    assert kkt_violation(q, v, np.vstack([z, np.zeros(v.size)])) <= 1e-10


# -- sgd ------------------------------------------------------------------------


def test_sgd_zero_gradient():
    s = sgd_step(OptimizerState(np.array([1.0, 2.0]), 5), np.zeros(2), SgdConfig(), ORTHANT)
    np.testing.assert_array_equal(s.iterate, [1.0, 2.0])
    assert s.iteration == 6


def test_sgd_interior_step():
    s = sgd_step(OptimizerState(np.array([1.0, 1.0]), 2), np.array([1.0, -1.0]), SgdConfig(1.0), ORTHANT)
    np.testing.assert_array_equal(s.iterate, [0.5, 1.5])


def test_sgd_projection_activates():
    s = sgd_step(OptimizerState(np.array([0.1]), 1), np.array([10.0]), SgdConfig(1.0), ORTHANT)
    np.testing.assert_array_equal(s.iterate, [0.0])


def test_sgd_rejects_nonfinite():
    with pytest.raises(ValueError):
        sgd_step(OptimizerState(np.array([1.0]), 1), np.array([np.inf]), SgdConfig(), ORTHANT)


def test_sgd_config_validation():
    with pytest.raises(ValueError):
        SgdConfig(0.0)


def test_sgd_converges_on_quadratic():
    # curvature >= 1 so the 1/i schedule contracts at rate O(1/i)
    x_star = np.array([3.0, 0.5, 2.0])
    curvature = np.array([1.0, 1.5, 2.0])
    s = OptimizerState(np.full(3, 10.0), 1)
    for _ in range(10**4):
        s = sgd_step(s, curvature * (s.iterate - x_star), SgdConfig(1.0), ORTHANT)
    assert np.linalg.norm(s.iterate - x_star) < 1e-2


# -- adam -----------------------------------------------------------------------


def test_adam_defaults():
    cfg = AdamConfig()
    assert (cfg.eta, cfg.beta1, cfg.beta2, cfg.epsilon) == (0.001, 0.9, 0.999, 1e-8)


@pytest.mark.parametrize("kw", [dict(eta=0), dict(beta1=1.0), dict(beta2=-0.1), dict(epsilon=0)])
def test_adam_config_validation(kw):
    with pytest.raises(ValueError):
        AdamConfig(**kw)


def test_adam_first_step_is_signed():
    g = np.array([3.0, -0.02, 50.0])
    s = OptimizerState(np.full(3, 10.0), 1, AdamState.zeros(3))
    s = adam_step(s, g, AdamConfig(), ORTHANT)
    np.testing.assert_allclose(s.iterate - 10.0, -0.001 * np.sign(g), rtol=1e-6)
    assert s.adam.step_count == 1


def test_adam_zero_gradient():
    s = OptimizerState(np.array([1.0, 2.0]), 1, AdamState.zeros(2))
    s = adam_step(s, np.zeros(2), AdamConfig(), ORTHANT)
    np.testing.assert_array_equal(s.iterate, [1.0, 2.0])


def test_adam_two_steps_match_scalar_recurrence():
    s = OptimizerState(np.array([5.0]), 1, AdamState.zeros(1))
    for g in (1.0, -1.0):
        s = adam_step(s, np.array([g]), AdamConfig(), ORTHANT)
    assert abs(s.iterate[0] - adam_scalar([1.0, -1.0], x0=5.0)[-1]) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_adam_matches_scalar_over_100_steps(seed):
    grads = np.random.default_rng(seed).standard_normal(100) * 3
    s = OptimizerState(np.array([100.0]), 1, AdamState.zeros(1))
    for g in grads:
        s = adam_step(s, np.array([g]), AdamConfig(), ORTHANT)
    assert abs(s.iterate[0] - adam_scalar(grads, x0=100.0)[-1]) <= 1e-12
    assert np.all(s.adam.second_moment >= 0)


# -- run loop ---------------------------------------------------------------------


def quad_problem():
    return NoisyQuadratic(np.array([1.0, 2.0, 0.5]), np.array([0.5, 1.0, 2.0]))


def run(rule=Rule.FIXED, iters=50, method=Method.BASIC_SGD, seed=3, region=ORTHANT, x0=None, **kw):
    prob = quad_problem()
    ctl = SamplingController.fixed(32) if rule is Rule.FIXED else SamplingController(rule)
    return run_optimization(prob, region, method, ctl, Budget(max_iterations=iters),
                            RngStream(seed, 2), lambda x: -float(np.sum((x - prob.x_star) ** 2)),
                            np.zeros(3) if x0 is None else x0, **kw)


def test_zero_iteration_budget():
    tr = run(iters=0)
    assert len(tr) == 1
    assert tr[0].iteration == 0 and tr[0].cum_samples == 0


def test_fixed_rule_batch_sizes():
    tr = run(iters=20)
    assert [r.batch_size for r in tr] == [32] * 21
    assert tr[-1].cum_samples == 32 * 20


@pytest.mark.parametrize("method", list(Method))
@pytest.mark.parametrize("rule", [Rule.PER_DIMENSION_MEDIAN, Rule.SINGLE_UPDATE, Rule.FIXED])
def test_runs_are_deterministic(method, rule):
    strip = lambda tr: [(r.iteration, r.cum_samples, r.batch_size, r.objective) for r in tr]
    assert strip(run(rule, method=method)) == strip(run(rule, method=method))


@pytest.mark.parametrize("method", list(Method))
def test_iterates_stay_feasible(method):
    seen = []
    run(Rule.PER_DIMENSION_MEDIAN, iters=200, method=method, region=SIMPLEX,
        callback=lambda state, stats, i: seen.append(state.iterate.copy()))
    assert all(SIMPLEX.contains(x) for x in seen)


def test_trace_monotone_fields():
    tr = run(Rule.SINGLE_UPDATE, iters=100)
    assert all(a.cum_samples <= b.cum_samples for a, b in zip(tr, tr[1:]))
    assert all(a.wall_seconds <= b.wall_seconds for a, b in zip(tr, tr[1:]))
    assert tr.final_iterate is not None


def test_time_budget_stops():
    prob = quad_problem()
    tr = run_optimization(prob, ORTHANT, Method.BASIC_SGD, SamplingController.fixed(8),
                          Budget(max_seconds=0.2), RngStream(0, 2), lambda x: 0.0, np.zeros(3),
                          cadence=TraceCadence(every=None, interval=0.02))
    assert tr[-1].wall_seconds >= 0.2
    assert 5 <= len(tr) <= 15


def test_cadence_every():
    tr = run(iters=30, cadence=TraceCadence(every=10))
    assert [r.iteration for r in tr] == [0, 10, 20, 30]


def test_infeasible_start_rejected():
    with pytest.raises(ValueError):
        run(x0=np.array([-1.0, 0.0, 0.0]))


def test_oracle_failure_has_context():
    class Broken:
        def sample(self, count, rng):
            raise RuntimeError("boom")

        def gradients(self, x, batch):
            return batch

    with pytest.raises(RuntimeError, match="iteration 1"):
        run_optimization(Broken(), ORTHANT, Method.BASIC_SGD, SamplingController.fixed(4),
                         Budget(max_iterations=3), RngStream(0), lambda x: 0.0, np.zeros(2))
