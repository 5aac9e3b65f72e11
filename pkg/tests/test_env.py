"""MDP-level tests: observation map, reward shape, reset law, bookkeeping."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etank.dynamics import PendulumState
from etank.env import RESET_MEAN_BETA, RESET_STD_BETA, PendulumEnv, observe, reward


class TestObserve:
    @given(beta=st.floats(-30.0, 30.0), beta_dot=st.floats(-60.0, 60.0))
    @settings(max_examples=200)
    def test_components(self, beta, beta_dot):
        obs = observe(PendulumState(beta, beta_dot))
        assert obs.shape == (3,)
        assert obs[0] ** 2 + obs[1] ** 2 == pytest.approx(1.0, abs=1e-12)
        # tanh rounds to +-1.0 in float64 once |beta_dot| > ~19
        assert -1.0 <= obs[2] <= 1.0

    def test_hanging_observation(self):
        obs = observe(PendulumState(-math.pi / 2, 0.0))
        assert obs[0] == pytest.approx(-1.0)
        assert obs[1] == pytest.approx(0.0, abs=1e-15)
        assert obs[2] == 0.0


class TestReward:
    def test_upright_rest_is_max(self):
        assert reward(math.pi / 2, 0.0, 0.0) == 1.0

    def test_hanging_rest(self):
        assert reward(-math.pi / 2, 0.0, 0.0) == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_mixed_penalties(self):
        # 1 / (1 + 1 + 0.1*tanh(1) + 0.01*2), tanh(1) = 0.761594...
        assert reward(0.0, 1.0, 2.0) == pytest.approx(0.477062952636106, rel=1e-12)

    @given(
        beta=st.floats(-10.0, 10.0),
        beta_dot=st.floats(-50.0, 50.0),
        tau=st.floats(-2.5, 2.5),
    )
    @settings(max_examples=300)
    def test_strictly_positive_and_bounded(self, beta, beta_dot, tau):
        r = reward(beta, beta_dot, tau)
        assert 0.0 < r <= 1.0

    def test_reward_floor_at_clamp(self):
        # worst case: hanging, saturated velocity, torque at the limit
        floor = 1.0 / (1.0 + 2.0 + 0.1 + 0.01 * 2.5)
        assert reward(-math.pi / 2, 1e9, 2.5) >= floor - 1e-12


class TestReset:
    def test_velocity_always_zero(self):
        env = PendulumEnv(seed=5)
        for _ in range(20):
            obs, info = env.reset()
            assert info["beta_dot"] == 0.0
            assert obs[2] == 0.0

    def test_angle_distribution(self):
        env = PendulumEnv(seed=11)
        betas = np.array([env.reset()[1]["beta"] for _ in range(100_000)])
        assert betas.mean() == pytest.approx(RESET_MEAN_BETA, abs=0.01)
        assert betas.std() == pytest.approx(RESET_STD_BETA, rel=0.05)

    def test_seed_reproducibility(self):
        a, b = PendulumEnv(seed=3), PendulumEnv(seed=3)
        for _ in range(5):
            assert a.reset()[1]["beta"] == b.reset()[1]["beta"]

    def test_explicit_angle_override(self):
        env = PendulumEnv(seed=0)
        obs, info = env.reset(beta=0.25)
        assert info["beta"] == 0.25
        assert env.state.beta == 0.25
        assert obs[0] == pytest.approx(math.sin(0.25))
        # the override must not consume a draw from the reset stream
        follow = env.reset()[1]["beta"]
        assert follow == PendulumEnv(seed=0).reset()[1]["beta"]


class TestResetGrid:
    def test_symmetric_and_sorted(self):
        env = PendulumEnv()
        grid = env.reset_grid(9)
        assert len(grid) == 9
        assert grid == sorted(grid)
        assert grid[4] == pytest.approx(RESET_MEAN_BETA)
        for lo, hi in zip(grid, reversed(grid)):
            assert lo - RESET_MEAN_BETA == pytest.approx(-(hi - RESET_MEAN_BETA))

    def test_span_is_three_sigma(self):
        env = PendulumEnv()
        grid = env.reset_grid(2)
        assert grid[0] == pytest.approx(RESET_MEAN_BETA - 3 * RESET_STD_BETA)
        assert grid[1] == pytest.approx(RESET_MEAN_BETA + 3 * RESET_STD_BETA)

    def test_single_point_is_the_mean(self):
        assert PendulumEnv().reset_grid(1) == [RESET_MEAN_BETA]

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            PendulumEnv().reset_grid(0)


class TestStep:
    def test_requires_reset_first(self):
        env = PendulumEnv()
        with pytest.raises(RuntimeError):
            env.step(0.0)

    def test_torque_clamped_to_limit(self):
        env = PendulumEnv(seed=0)
        env.reset()
        res = env.step(100.0)
        assert res.info["applied_torque"] == env.params.torque_limit
        res = env.step(-100.0)
        assert res.info["applied_torque"] == -env.params.torque_limit

    def test_non_finite_torque_rejected(self):
        env = PendulumEnv(seed=0)
        env.reset()
        with pytest.raises(ValueError):
            env.step(math.nan)

    def test_truncates_at_max_steps(self):
        env = PendulumEnv(max_steps=7, seed=0)
        env.reset()
        for k in range(7):
            res = env.step(0.5)
        assert res.truncated
        assert not res.terminal
        with pytest.raises(RuntimeError):
            env.step(0.0)

    def test_no_natural_terminals(self):
        env = PendulumEnv(max_steps=200, seed=2)
        rng = np.random.default_rng(2)
        env.reset()
        for _ in range(200):
            res = env.step(rng.uniform(-2.5, 2.5))
            assert not res.terminal

    def test_reward_uses_post_step_state_and_applied_torque(self):
        env = PendulumEnv(seed=4)
        env.reset()
        res = env.step(9.0)  # clamps to 2.5
        expected = reward(res.info["beta"], res.info["beta_dot"], 2.5)
        assert res.reward == expected

    def test_reward_within_declared_range(self):
        env = PendulumEnv(seed=8)
        lo, hi = env.reward_range
        assert lo > 0.0
        env.reset()
        rng = np.random.default_rng(8)
        for _ in range(300):
            res = env.step(rng.uniform(-3.0, 3.0))
            assert lo <= res.reward <= hi
            if res.truncated:
                env.reset()

    def test_dbeta_matches_state_change(self):
        env = PendulumEnv(seed=6)
        env.reset()
        before = env.state.beta
        res = env.step(1.0)
        assert res.info["dbeta"] == pytest.approx(env.state.beta - before, abs=1e-15)

    def test_same_seed_same_trajectory(self):
        a, b = PendulumEnv(seed=9), PendulumEnv(seed=9)
        a.reset(), b.reset()
        for k in range(50):
            ra, rb = a.step(0.3 * (-1) ** k), b.step(0.3 * (-1) ** k)
            assert np.array_equal(ra.obs, rb.obs)
            assert ra.reward == rb.reward

    def test_bad_max_steps(self):
        with pytest.raises(ValueError):
            PendulumEnv(max_steps=0)

    def test_state_property_before_reset(self):
        with pytest.raises(RuntimeError):
            PendulumEnv().state
