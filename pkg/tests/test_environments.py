import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esmaml_hc.core import DimensionError, SeedSpec
from esmaml_hc.environments import (
    LinearPolicy,
    Nav2DObjective,
    Nav2DTask,
    TaskDistribution,
    replay_actions,
    rollout,
    sample_task,
    simulate,
    task_objective,
)
from esmaml_hc.objectives import EvaluationError


def loop_rollout(theta, task, noise):
    """Plain scalar re-implementation of one episode."""
    W = np.asarray(theta[:4]).reshape(2, 2)
    b = np.asarray(theta[4:])
    gain = np.asarray(task.action_gain)
    pos = np.asarray(task.start, dtype=float).copy()
    total = 0.0
    for t in range(task.horizon):
        obs = pos + task.obs_noise_std * noise[t]
        a = np.minimum(np.maximum(W @ obs + b, -task.action_max), task.action_max)
        pos = pos + gain @ a + np.asarray(task.drift)
        total -= float(np.hypot(*(pos - np.asarray(task.goal))))
    return total


EXAMPLE = Nav2DTask(goal=(0.5, 0.0), obs_noise_std=0.0, horizon=2)


def test_zero_policy_hand_simulation():
    res = rollout(np.zeros(6), EXAMPLE)
    assert res.total_reward == -1.0
    assert task_objective(EXAMPLE, 1).evaluate(np.zeros(6)) == -1.0


def test_saturated_straight_line_reaches_goal():
    H, a_max = 10, 0.1
    task = Nav2DTask(goal=(a_max * H, 0.0), obs_noise_std=0.0, horizon=H, action_max=a_max)
    res = rollout(LinearPolicy(np.zeros((2, 2)), np.array([5.0, 0.0])), task)
    np.testing.assert_allclose(res.positions[-1], task.goal, atol=1e-12)
    assert res.rewards[-1] == pytest.approx(0.0, abs=1e-12)


def test_noiseless_rollouts_ignore_stream():
    task = Nav2DTask(obs_noise_std=0.0)
    th = SeedSpec(1).generator().standard_normal(6)
    a = rollout(th, task, SeedSpec(2).generator())
    b = rollout(th, task, SeedSpec(3).generator())
    assert a.total_reward == b.total_reward


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_vectorized_matches_loop(seed):
    rng = SeedSpec(seed).generator()
    task = Nav2DTask(goal=tuple(rng.uniform(-0.5, 0.5, 2)), obs_noise_std=1.0,
                     action_gain=((1.3, 0.2), (0.0, -0.7)), drift=(0.01, -0.02), horizon=30)
    th = rng.standard_normal((3, 6))
    noise = rng.standard_normal((3, 30, 2))
    _, _, rew = simulate(th, task, noise)
    for i in range(3):
        assert rew[i].sum() == pytest.approx(loop_rollout(th[i], task, noise[i]), rel=1e-12)


def test_total_reward_recomputed_from_positions():
    task = Nav2DTask(obs_noise_std=1.0, horizon=50)
    res = rollout(SeedSpec(4).generator().standard_normal(6), task, SeedSpec(5).generator())
    recomputed = -np.linalg.norm(res.positions[1:] - np.asarray(task.goal), axis=1).sum()
    assert res.total_reward == pytest.approx(recomputed, rel=1e-12)
    assert res.steps_used == 50


@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_translation_consistency(dx, dy, seed):
    task = Nav2DTask(obs_noise_std=1.0, horizon=20)
    actions = rollout(SeedSpec(seed).generator().standard_normal(6), task,
                      SeedSpec(seed, (1,)).generator()).actions
    shift = np.array([dx, dy])
    moved = Nav2DTask(goal=tuple(np.asarray(task.goal) + shift), obs_noise_std=1.0, horizon=20,
                      start=tuple(shift))
    _, r0 = replay_actions(actions, task)
    _, r1 = replay_actions(actions, moved)
    assert r1 == pytest.approx(r0, rel=1e-9, abs=1e-9)


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
@settings(max_examples=40, deadline=None)
def test_goal_pointing_policy_beats_zero(gx, gy):
    if np.hypot(gx, gy) < 1e-3:
        return
    task = Nav2DTask(goal=(gx, gy), obs_noise_std=0.0)
    kappa = 1.0
    greedy = np.array([-kappa, 0, 0, -kappa, kappa * gx, kappa * gy])
    obj = task_objective(task)
    assert obj.evaluate(greedy) > obj.evaluate(np.zeros(6))


def test_flipped_dynamics_need_different_policies():
    goal = (0.4, 0.3)
    t1 = Nav2DTask(goal=goal, obs_noise_std=0.0)
    t2 = Nav2DTask(goal=goal, obs_noise_std=0.0, action_gain=((-1.0, 0.0), (0.0, -1.0)))
    w = np.linspace(-2, 2, 9)
    b = np.linspace(-0.2, 0.2, 9)
    grid = np.array([[w1, 0, 0, w2, b1, b2] for w1, w2, b1, b2 in itertools.product(w, w, b, b)])
    r1 = Nav2DObjective(t1).evaluate_batch(grid)
    r2 = Nav2DObjective(t2).evaluate_batch(grid)
    near1 = r1 >= r1.max() - 0.1 * abs(r1.max())
    near2 = r2 >= r2.max() - 0.1 * abs(r2.max())
    assert not np.any(near1 & near2)


def test_pack_unpack_round_trip():
    th = SeedSpec(0).generator().standard_normal(6)
    assert np.array_equal(LinearPolicy.unpack(th).pack(), th)


def test_action_is_clipped():
    pol = LinearPolicy(np.eye(2) * 100, np.zeros(2))
    assert np.all(np.abs(pol.act(np.array([1.0, -1.0]), 0.1)) == 0.1)


def test_task_validation():
    with pytest.raises(ValueError):
        Nav2DTask(action_gain=((1, 1), (1, 1)))
    with pytest.raises(ValueError):
        Nav2DTask(horizon=0)
    with pytest.raises(ValueError):
        Nav2DTask(obs_noise_std=-1)


def test_dimension_error():
    with pytest.raises(DimensionError):
        task_objective(EXAMPLE).evaluate(np.zeros(5))


def test_non_finite_state_reports_step():
    task = Nav2DTask(obs_noise_std=0.0, drift=(1e308, 0.0), horizon=5, goal=(0.0, 0.0))
    with pytest.raises(EvaluationError, match="step 2"):
        rollout(np.zeros(6), task)


def test_more_rollouts_lower_variance():
    task = Nav2DTask(obs_noise_std=1.0)
    th = np.array([-0.5, 0, 0, -0.5, 0.1, 0.0])
    one, five = Nav2DObjective(task, 1), Nav2DObjective(task, 5)
    v1 = [one.evaluate(th, SeedSpec(1, (k,)).generator()) for k in range(1000)]
    v5 = [five.evaluate(th, SeedSpec(2, (k,)).generator()) for k in range(1000)]
    assert np.var(v5) < np.var(v1)


def test_degenerate_distribution_gives_unique_task():
    dist = TaskDistribution(goal_low=(0.2, -0.1), goal_high=(0.2, -0.1), gain_range=(1.5, 1.5),
                            drift_low=(0.01, 0.0), drift_high=(0.01, 0.0))
    a = sample_task(dist, "train", SeedSpec(0))
    b = sample_task(dist, "test", SeedSpec(99, (4,)))
    assert a == b
    assert a.goal == (0.2, -0.1) and a.action_gain == ((1.5, 0.0), (0.0, 1.5))


def test_goal_draws_monte_carlo():
    dist = TaskDistribution()
    goals = np.array([sample_task(dist, "train", SeedSpec(0, (k,))).goal for k in range(1000)])
    assert goals.min() >= -0.5 and goals.max() <= 0.5
    assert np.all(np.abs(goals.mean(axis=0)) < 0.05)


def test_train_test_disjoint():
    dist = TaskDistribution(gain_range=(0.5, 1.5), flip_prob=0.5)
    train = {sample_task(dist, "train", SeedSpec(0, (k,))) for k in range(1000)}
    test = {sample_task(dist, "test", SeedSpec(0, (k,))) for k in range(1000)}
    assert train.isdisjoint(test)


def test_objective_pickles():
    import pickle

    obj = task_objective(Nav2DTask(), 2)
    clone = pickle.loads(pickle.dumps(obj))
    th = np.ones(6) * 0.1
    assert clone.evaluate(th, SeedSpec(1).generator()) == obj.evaluate(th, SeedSpec(1).generator())
