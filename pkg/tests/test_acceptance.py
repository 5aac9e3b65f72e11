"""Acceptance gate: ten numbered end-to-end criteria.

Each test carries a `criterion` marker; the terminal summary prints one
PASS/FAIL line per criterion (see conftest).  Criteria 6-10 share two sets
of desk-scale training runs built once per session:

* ``free_runs``: five seeds with an unlimited (logging-only) tank,
* ``budget_runs``: five seeds under termination-on-depletion with the
  budget set to the task energy estimated from the best free agent.

The desk optimizer settings differ from the full-scale defaults; the
README's "desk configuration" section explains each delta and the
exploration scheme that makes desk-scale swing-up learnable at all.  The
full-scale run (default hyperparameters, 200 epochs) takes hours and only
executes when ETANK_FULL_SCALE=1.
"""

import math
import os
import time

import numpy as np
import pytest

from etank import neural
from etank.dynamics import PendulumParams, PendulumState, simulate_control_interval, mechanical_energy
from etank.env import PendulumEnv
from etank.evaluation import agent_policy, random_policy, run_episodes, estimate_task_energy
from etank.passivize import (
    ExtendedTerminationWrapper,
    ForceField,
    ForceFieldWrapper,
    InferenceTankWrapper,
)
from etank.sac import Batch, SacAgent, SacConfig, train
from etank.tank import TankMode, TankState, continuous_tank_oracle, delta_energy, update

SEEDS = (0, 1, 2, 3, 4)

DESK = SacConfig(
    hidden_sizes=(64, 64),
    epochs=60,
    actor_lr=1e-3,
    critic_lr=1e-3,
    entropy_lr=1e-3,
    gradient_steps_per_epoch=1000,
    target_update_period=1,
    soft_update_tau=0.005,
    screen_candidates=8,
)

FULL = SacConfig(epochs=200)  # stock defaults, i.e. the full-scale recipe

DESK_RETURN_BAR = 1200.0
FULL_RETURN_BAR = 1800.0
EVAL_EPISODES = 20


def plain_env(capacity=math.inf, max_steps=500):
    return InferenceTankWrapper(PendulumEnv(max_steps=max_steps), capacity)


def evaluate(agent, episodes=EVAL_EPISODES, seed=10_000, capacity=math.inf):
    env = plain_env(capacity)
    env.seed(seed)
    stats, _ = run_episodes(env, agent_policy(agent), episodes)
    returns = float(np.mean([s.return_ for s in stats]))
    distance = float(np.mean([s.final_window_error for s in stats]))
    return returns, distance, stats


# -- shared training runs ---------------------------------------------------


@pytest.fixture(scope="session")
def free_runs():
    """Five unconstrained desk seeds; wall time covers training only."""
    results = {}
    started = time.perf_counter()
    for seed in SEEDS:
        results[seed] = train(plain_env(), DESK, seed)
    wall = time.perf_counter() - started
    for r in results.values():
        r.agent.actor = r.best_actor  # evaluate the checkpointed best policy
    return results, wall


@pytest.fixture(scope="session")
def free_evals(free_runs):
    results, _ = free_runs
    return {
        seed: evaluate(r.agent, seed=10_000 + seed)[:2] for seed, r in results.items()
    }


def pick_reference(results, evals):
    """Highest-eval seed, preferring seeds whose robustness screen passed."""
    pool = [s for s, r in results.items() if r.screen_passed] or list(results)
    return max(pool, key=lambda s: evals[s][0])


@pytest.fixture(scope="session")
def task_energy_ref(free_runs, free_evals):
    """e* of the best free agent: max spent energy over 100 ungated episodes."""
    results, _ = free_runs
    ref_seed = pick_reference(results, free_evals)
    env = plain_env()
    env.seed(777)
    report = estimate_task_energy(env, agent_policy(results[ref_seed].agent), 100)
    return ref_seed, report


@pytest.fixture(scope="session")
def budget_runs(task_energy_ref):
    """Five seeds trained under termination-on-depletion with e0 = e*."""
    _, report = task_energy_ref
    e0 = report.e_star
    results = {}
    for seed in SEEDS:
        env = ExtendedTerminationWrapper(PendulumEnv(max_steps=500), e0)
        results[seed] = train(env, DESK, seed)
    for r in results.values():
        r.agent.actor = r.best_actor
    return results, e0


@pytest.fixture(scope="session")
def budget_evals(budget_runs):
    results, _ = budget_runs
    return {
        seed: evaluate(r.agent, seed=20_000 + seed)[:2] for seed, r in results.items()
    }


# -- criterion 1: sampled withdrawal equals the continuous work integral ----


@pytest.mark.criterion(1, "exact energy sampling over one control interval")
def test_sampled_energy_matches_quadrature():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        period = float(rng.uniform(0.002, 0.1))
        params = PendulumParams(control_period=period)
        state = PendulumState(rng.uniform(-math.pi, math.pi), rng.uniform(-8.0, 8.0))
        w = float(rng.uniform(-params.torque_limit, params.torque_limit))
        res = simulate_control_interval(state, w, 0.0, params)
        sampled = w * (res.state.beta - state.beta)
        assert abs(sampled - res.injected_energy) <= 1e-9 * max(1.0, abs(sampled))


# -- criterion 2: closed-loop storage never rises unrequested ---------------


@pytest.mark.criterion(2, "sampled storage decrease along rollouts")
def test_storage_decrease_random_policy():
    rng = np.random.default_rng(2)
    tol = 1e-6
    for field in (False, True):
        env = plain_env(capacity=1e4, max_steps=50)
        env.seed(20 + field)
        for _ in range(50):
            obs, _ = env.reset()
            storage = mechanical_energy(env.state, env.params) + env.tank.level
            while True:
                w = float(rng.uniform(-2.5, 2.5))
                delta = float(rng.uniform(-1.0, 1.0)) if field else 0.0
                res = env.step(w, external_torque=delta)
                nxt = mechanical_energy(env.state, env.params) + res.tank_level
                injected_external = delta * res.info["dbeta"]
                assert nxt - storage - injected_external <= tol
                storage = nxt
                if res.terminal or res.truncated:
                    break


# -- criterion 3: tank invariants on recorded rollouts ----------------------


@pytest.mark.criterion(3, "tank level, spent-energy, and gate invariants")
def test_tank_invariants_on_rollouts():
    rng = np.random.default_rng(3)
    streams = []
    # small capacity exercises gating and depletion; record the invariants live
    for episode in range(20):
        env = plain_env(capacity=2.0, max_steps=100)
        env.seed(300 + episode)
        env.reset()
        spent_prev = 0.0
        draws = []
        while True:
            res = env.step(float(rng.uniform(-2.5, 2.5)))
            assert 0.0 <= res.tank_level <= 2.0
            assert res.energy_spent >= spent_prev  # spent ledger is monotone
            if res.gated:
                assert res.applied_torque == 0.0
            spent_prev = res.energy_spent
            draws.append((res.info["applied_torque"], res.info["dbeta"]))
            if res.terminal or res.truncated:
                break
        streams.append(draws)
    # same recorded draw stream through both update rules, pathwise
    for draws in streams:
        no_refill = TankState.fresh(10.0, mode=TankMode.NO_REFILL)
        refill = TankState.fresh(10.0, mode=TankMode.REFILL_ALLOWED)
        for w, dq in draws:
            no_refill = update(no_refill, delta_energy(w, dq, no_refill.mode))
            refill = update(refill, delta_energy(w, dq, refill.mode))
            assert no_refill.spent >= refill.spent - 1e-12
            assert no_refill.level <= refill.level + 1e-12


# -- criterion 4: discrete tank tracks the continuous storage exactly -------


@pytest.mark.criterion(4, "continuous/discrete tank equivalence")
def test_discrete_tank_matches_continuous_oracle():
    rng = np.random.default_rng(4)
    params = PendulumParams()
    e0 = 50.0
    for _ in range(20):
        state = PendulumState(rng.uniform(-math.pi, math.pi), rng.uniform(-4.0, 4.0))
        tank = TankState.fresh(e0, mode=TankMode.REFILL_ALLOWED)
        v = e0
        for _ in range(50):
            w = float(rng.uniform(-params.torque_limit, params.torque_limit))
            res = simulate_control_interval(state, w, 0.0, params)
            tank = update(tank, delta_energy(w, res.state.beta - state.beta, tank.mode))
            v = continuous_tank_oracle(res.beta_trace, w, v)
            assert abs(tank.level - v) <= 1e-9 * e0
            state = res.state


# -- criterion 5: analytic gradients vs central finite differences ----------


def _fd_net_grads(net, loss, h=1e-5):
    grads = []
    for arr in net.weights + net.biases:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            fp = loss()
            arr[idx] = orig - h
            fm = loss()
            arr[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def _rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-10)


@pytest.mark.criterion(5, "actor, critic, and temperature gradients vs finite differences")
def test_gradients_match_finite_differences():
    tol = 1e-4
    cfg = SacConfig(hidden_sizes=(8, 8), steps_per_epoch=500)
    agent = SacAgent(3, 2.5, cfg, seed=5)
    rng = np.random.default_rng(5)
    n = 4
    batch = Batch(
        obs=rng.standard_normal((n, 3)),
        actions=np.tanh(rng.standard_normal((n, 1))),
        rewards=rng.uniform(0.3, 1.0, (n, 1)),
        next_obs=rng.standard_normal((n, 3)),
        terminals=np.zeros((n, 1)),
    )
    noise = rng.standard_normal((n, 1))

    # actor: reparameterized objective through squash and min-critic
    def actor_loss():
        a, log_prob, _ = agent._policy(batch.obs, noise)
        xa = np.hstack([batch.obs, a])
        q1, _ = neural.forward(agent.critic1, xa)
        q2, _ = neural.forward(agent.critic2, xa)
        return float(np.mean(agent.alpha * log_prob - np.minimum(q1, q2)))

    _, grads, log_prob = agent._actor_gradients(batch.obs, noise)
    for g, num in zip(grads.d_weights + grads.d_biases, _fd_net_grads(agent.actor, actor_loss)):
        assert _rel_err(g, num) < tol

    # both critics: mean squared error against a frozen target
    y = agent.critic_targets(batch)
    xs = np.hstack([batch.obs, batch.actions])
    for critic in (agent.critic1, agent.critic2):

        def critic_loss():
            q, _ = neural.forward(critic, xs)
            return float(np.mean((q - y) ** 2))

        q, cache = neural.forward(critic, xs)
        _, cgrads = neural.backward(critic, cache, (2.0 / n) * (q - y))
        for g, num in zip(
            cgrads.d_weights + cgrads.d_biases, _fd_net_grads(critic, critic_loss)
        ):
            assert _rel_err(g, num) < tol

    # temperature: d/d(log alpha) of -alpha * (log_prob + target entropy)
    analytic = float(-agent.alpha * np.mean(log_prob + agent.target_entropy))
    h = 1e-5
    v = agent.log_alpha.value

    def alpha_loss(log_alpha):
        return float(np.mean(-math.exp(log_alpha) * (log_prob + agent.target_entropy)))

    numeric = (alpha_loss(v + h) - alpha_loss(v - h)) / (2.0 * h)
    assert abs(analytic - numeric) / max(abs(numeric), 1e-10) < tol


# -- criterion 6: the task is learned -----------------------------------


@pytest.mark.criterion(6, "desk-scale learning: return bar on 3 of 5 seeds under 30 min")
def test_desk_learning(free_runs):
    results, wall = free_runs
    reached = {
        seed: max(e.return_ for e in r.epochs) for seed, r in results.items()
    }
    passing = sum(best >= DESK_RETURN_BAR for best in reached.values())
    assert wall < 1800.0, f"5-seed desk training took {wall:.0f}s"
    assert passing >= 3, f"per-seed best epoch returns: {reached}"


@pytest.mark.criterion(6, "full-scale learning (ETANK_FULL_SCALE=1)")
@pytest.mark.skipif(
    os.environ.get("ETANK_FULL_SCALE") != "1",
    reason="full-scale run takes hours; set ETANK_FULL_SCALE=1 to include it",
)
def test_full_scale_learning():
    reached = {}
    for seed in SEEDS:
        result = train(plain_env(), FULL, seed)
        reached[seed] = max(e.return_ for e in result.epochs)
    passing = sum(best >= FULL_RETURN_BAR for best in reached.values())
    assert passing >= 3, f"per-seed best epoch returns: {reached}"


# -- criterion 7: training energy: hard cap vs unconstrained spending -------


@pytest.mark.criterion(7, "budget cap holds; unconstrained training spends >= 5x the budget")
def test_training_energy_budget(free_runs, budget_runs):
    results_free, _ = free_runs
    results_budget, e0 = budget_runs
    for seed, r in results_budget.items():
        worst = max(ep.energy_spent for ep in r.episodes)
        assert worst <= e0, f"seed {seed} episode spent {worst} J over budget {e0} J"
    max_free = max(
        max(ep.energy_spent for ep in r.episodes) for r in results_free.values()
    )
    assert max_free >= 5.0 * e0, f"max unconstrained episode {max_free} J vs 5x{e0} J"


# -- criterion 8: inference-time passivization under a draining field -------


def _field_eval(agent, field, capacity, episodes, seed):
    env = ForceFieldWrapper(plain_env(capacity), field)
    env.seed(seed)
    stats, _ = run_episodes(env, agent_policy(agent), episodes)
    return stats


@pytest.mark.criterion(8, "wrapped policy stays within budget under a draining field")
def test_inference_passivization(free_runs, task_energy_ref):
    results, _ = free_runs
    ref_seed, report = task_energy_ref
    agent = results[ref_seed].agent
    e_star = report.e_star

    # pick the field: smallest magnitude that drains the wrapped tank every
    # probe episode and pushes unconstrained consumption past e*
    magnitude = None
    probes = {}
    for mag in (0.25, 0.5, 1.0, 1.5, 2.0):
        field = ForceField("velocity_aligned", mag)
        probe_u = _field_eval(agent, field, math.inf, 10, seed=555)
        probe_w = _field_eval(agent, field, e_star, 10, seed=555)
        mean_u = float(np.mean([s.energy_spent for s in probe_u]))
        depleted = sum(s.depleted for s in probe_w)
        probes[mag] = (mean_u, depleted)
        if mean_u > e_star and depleted == len(probe_w):
            magnitude = mag
            break
    assert magnitude is not None, f"no probed magnitude drains the tank: {probes}"

    field = ForceField("velocity_aligned", magnitude)
    unwrapped = _field_eval(agent, field, math.inf, 100, seed=8100)
    assert float(np.mean([s.energy_spent for s in unwrapped])) > e_star
    wrapped = _field_eval(agent, field, e_star, 100, seed=8200)
    over = [s.energy_spent for s in wrapped if s.energy_spent > e_star]
    assert not over, f"wrapped episodes exceeded the budget: {over}"

    # no field: replay the estimation stream with the tank set to its own
    # measured worst case; the budget guard must then be free of charge
    env = plain_env()
    env.seed(777)
    bare, _ = run_episodes(env, agent_policy(agent), 100)
    env = plain_env(e_star)
    env.seed(777)
    guarded, _ = run_episodes(env, agent_policy(agent), 100)
    assert sum(s.depleted for s in guarded) == 0
    ret_bare = float(np.mean([s.return_ for s in bare]))
    ret_guarded = float(np.mean([s.return_ for s in guarded]))
    assert abs(ret_bare - ret_guarded) <= 0.05 * ret_bare


# -- criterion 9: training under a budget lowers the learned task energy ----


@pytest.mark.criterion(9, "budget-trained policy's task energy stays at or below the budget")
def test_task_energy_direction(task_energy_ref, budget_runs, budget_evals):
    _, report_free = task_energy_ref
    results, e0 = budget_runs
    best_seed = pick_reference(results, budget_evals)
    env = plain_env()
    env.seed(778)
    report_budget = estimate_task_energy(env, agent_policy(results[best_seed].agent), 100)
    assert report_budget.e_star <= e0
    assert report_budget.e_star <= report_free.e_star


# -- criterion 10: both agents settle at the same position error ------------


@pytest.mark.criterion(10, "final position error agrees across the two agents")
def test_final_error_agreement(free_evals, budget_evals):
    gaps = {
        seed: abs(free_evals[seed][1] - budget_evals[seed][1]) for seed in SEEDS
    }
    agreeing = sum(gap <= 0.1 for gap in gaps.values())
    assert agreeing >= 3, f"per-seed final-error gaps: {gaps}"


# -- training-run invariants (not numbered criteria) -------------------------


class TestTrainingRunInvariants:
    def test_temperature_stays_positive_and_finite(self, free_runs):
        results, _ = free_runs
        for r in results.values():
            assert all(e.alpha > 0.0 and math.isfinite(e.alpha) for e in r.epochs)
            assert r.agent.healthy()

    def test_best_checkpoint_beats_random_by_2x(self, free_runs, free_evals):
        # the reward floor (~0.32/step) caps the trained/random ratio near 3;
        # 2x is the strongest seed-robust bound this reward admits
        env = plain_env()
        env.seed(999)
        policy = random_policy(env.params.torque_limit, np.random.default_rng(999))
        stats, _ = run_episodes(env, policy, EVAL_EPISODES)
        random_return = float(np.mean([s.return_ for s in stats]))
        for seed, (trained_return, _) in free_evals.items():
            assert trained_return >= 2.0 * random_return, (
                f"seed {seed}: {trained_return:.1f} vs random {random_return:.1f}"
            )

    def test_budget_training_hits_the_wall(self, budget_runs):
        # exploration must actually exercise the depletion terminal
        results, _ = budget_runs
        for r in results.values():
            assert any(ep.term_cause == "depleted" for ep in r.episodes)
