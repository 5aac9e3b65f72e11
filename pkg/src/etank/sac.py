"""Soft actor-critic on the manual numpy networks.

Squashed-Gaussian actor, twin critics with target networks and min-backup,
and an automatically tuned entropy temperature.

Exploration samples the squashed-Gaussian policy each control step.  In the
default correlated mode the standard-normal draw behind that sample is held
constant for noise_hold_steps steps, so exploratory torque stays coherent
for about half a swing period.  At a 50 Hz control rate a fresh draw every
step averages out mechanically: measured over 1e5 random steps the plant
never exceeds ~0.8 rad/s, nowhere near the ~7.7 rad/s a swing-up needs, and
the reward's velocity term makes motionless hanging a strict local optimum
that uncorrelated noise cannot escape.  The per-step marginal distribution
of each action is unchanged; only the joint across steps is.  Setting
exploration="per-step-gaussian" restores fully independent draws.

The actor head emits [mean, log_std]; actions are tanh-squashed to [-1, 1]
and scaled by the plant torque limit at the environment boundary.  Replay
stores the normalized action.  All math is float64 and every random draw
flows from one seed, so a run is reproducible bit for bit.
"""

from __future__ import annotations

import copy
import json
import math
import os
import time
from dataclasses import dataclass, asdict
from typing import NamedTuple, Optional

import numpy as np

from . import neural
from .neural import Mlp, ScalarAdam

__all__ = [
    "SacConfig",
    "ReplayBuffer",
    "Batch",
    "SacAgent",
    "TrainingDiverged",
    "EpisodeRecord",
    "EpochRecord",
    "TrainResult",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

CHECKPOINT_MAGIC = "etank-agent"
CHECKPOINT_VERSION = 1


@dataclass
class SacConfig:
    hidden_sizes: tuple = (256, 256)
    actor_lr: float = 0.005
    critic_lr: float = 0.005
    entropy_lr: float = 0.005
    soft_update_tau: float = 0.003
    target_update_period: int = 5  # gradient steps between target blends
    batch_size: int = 256
    gamma: float = 0.99
    replay_capacity: int = 1_000_000
    epochs: int = 200
    steps_per_epoch: int = 2500
    steps_per_trajectory: int = 500
    steps_before_training: int = 2500  # uniform-random warmup, no updates
    gradient_steps_per_epoch: int = 500
    exploration: str = "correlated-gaussian"
    noise_hold_steps: int = 40  # ~half the pendulum's natural period at 50 Hz
    eval_episodes_per_epoch: int = 12  # 0 selects the best actor by training return instead
    # post-training robustness screen over the top-scoring checkpoints;
    # 0 keeps the single best scorer unchecked
    screen_candidates: int = 0
    screen_grid_points: int = 128
    screen_horizon_steps: int = 300
    screen_error_limit: float = 0.5

    def __post_init__(self):
        if isinstance(self.hidden_sizes, list):
            self.hidden_sizes = tuple(self.hidden_sizes)
        for name in (
            "actor_lr",
            "critic_lr",
            "entropy_lr",
            "soft_update_tau",
            "batch_size",
            "epochs",
            "steps_per_epoch",
            "steps_per_trajectory",
            "gradient_steps_per_epoch",
            "replay_capacity",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 < self.soft_update_tau <= 1.0:
            raise ValueError("soft_update_tau must be in (0, 1]")
        if self.steps_per_epoch % self.steps_per_trajectory != 0:
            raise ValueError("steps_per_epoch must be a multiple of steps_per_trajectory")
        if self.target_update_period < 1:
            raise ValueError("target_update_period must be >= 1")
        if self.steps_before_training < 0:
            raise ValueError("steps_before_training must be >= 0")
        if self.exploration not in ("correlated-gaussian", "per-step-gaussian"):
            raise ValueError(
                f"unsupported exploration mode {self.exploration!r}; "
                "use correlated-gaussian or per-step-gaussian"
            )
        if self.noise_hold_steps < 1:
            raise ValueError("noise_hold_steps must be >= 1")
        if self.eval_episodes_per_epoch < 0:
            raise ValueError("eval_episodes_per_epoch must be >= 0")
        if self.screen_candidates < 0:
            raise ValueError("screen_candidates must be >= 0")
        if self.screen_grid_points < 1 or self.screen_horizon_steps < 1:
            raise ValueError("screen grid and horizon must be >= 1")
        if not self.screen_error_limit > 0.0:
            raise ValueError("screen_error_limit must be positive")


class TrainingDiverged(RuntimeError):
    """Raised when losses or parameters stop being finite."""

    def __init__(self, message: str, dump_path: Optional[str] = None):
        super().__init__(message)
        self.dump_path = dump_path


class Batch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray  # shape (n, 1)
    next_obs: np.ndarray
    terminals: np.ndarray  # shape (n, 1), float 0/1; truncation is not terminal


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._obs = np.empty((capacity, obs_dim), dtype=np.float64)
        self._actions = np.empty((capacity, 1), dtype=np.float64)
        self._rewards = np.empty((capacity, 1), dtype=np.float64)
        self._next_obs = np.empty((capacity, obs_dim), dtype=np.float64)
        self._terminals = np.empty((capacity, 1), dtype=np.float64)
        self._rng = rng
        self._idx = 0
        self.size = 0

    def add(
        self,
        obs: np.ndarray,
        action: float,
        reward: float,
        next_obs: np.ndarray,
        terminal: bool,
        truncated: bool,
    ) -> None:
        if terminal and truncated:
            raise ValueError("a transition cannot be both terminal and truncated")
        i = self._idx
        self._obs[i] = obs
        self._actions[i] = action
        self._rewards[i] = reward
        self._next_obs[i] = next_obs
        self._terminals[i] = 1.0 if terminal else 0.0
        self._idx = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self._rng.integers(0, self.size, size=n)
        return Batch(
            self._obs[idx],
            self._actions[idx],
            self._rewards[idx],
            self._next_obs[idx],
            self._terminals[idx],
        )


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


class SacAgent:
    """Actor, twin critics, their targets, and the entropy temperature."""

    def __init__(self, obs_dim: int, torque_limit: float, config: SacConfig, seed):
        self.obs_dim = obs_dim
        self.torque_limit = float(torque_limit)
        self.config = config
        self.target_entropy = -1.0  # minus the action dimension
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init_ss, act_ss = ss.spawn(2)
        init_rng = np.random.default_rng(init_ss)
        self._action_rng = np.random.default_rng(act_ss)
        hidden = list(config.hidden_sizes)
        self.actor = neural.init_mlp([obs_dim] + hidden + [2], init_rng, output_scale=0.01)
        self.critic1 = neural.init_mlp([obs_dim + 1] + hidden + [1], init_rng)
        self.critic2 = neural.init_mlp([obs_dim + 1] + hidden + [1], init_rng)
        self.target1 = self.critic1.copy()
        self.target2 = self.critic2.copy()
        self.log_alpha = ScalarAdam(0.0)
        self.update_count = 0
        self._held_noise: Optional[np.ndarray] = None
        self._explore_step = 0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha.value)

    # -- acting ---------------------------------------------------------

    def _policy(self, obs: np.ndarray, noise: np.ndarray):
        """Reparameterized squashed-Gaussian sample for a batch.

        Returns (a, log_prob, aux) where a is the normalized action in
        [-1, 1], log_prob its density under the squashed distribution, and
        aux carries the intermediates the actor backward pass needs.
        """
        out, cache = neural.forward(self.actor, obs)
        mean = out[:, 0:1]
        log_std_raw = out[:, 1:2]
        log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(log_std)
        u = mean + std * noise
        a = np.tanh(u)
        gauss = -0.5 * noise**2 - log_std - 0.5 * math.log(2.0 * math.pi)
        # log(1 - tanh(u)^2) in a form stable for large |u|
        squash = 2.0 * (math.log(2.0) - u - _softplus(-2.0 * u))
        log_prob = gauss - squash
        aux = {
            "cache": cache,
            "u": u,
            "a": a,
            "std": std,
            "noise": noise,
            "log_std_raw": log_std_raw,
        }
        return a, log_prob, aux

    def begin_episode(self) -> None:
        """Restart the exploration-noise schedule at an episode boundary."""
        self._held_noise = None
        self._explore_step = 0

    def _exploration_noise(self) -> np.ndarray:
        if self.config.exploration == "per-step-gaussian":
            return self._action_rng.standard_normal((1, 1))
        if self._held_noise is None or self._explore_step % self.config.noise_hold_steps == 0:
            self._held_noise = self._action_rng.standard_normal((1, 1))
        self._explore_step += 1
        return self._held_noise

    def sample_action(self, obs: np.ndarray) -> tuple[float, float]:
        """One stochastic normalized action and its log-density."""
        obs = np.asarray(obs, dtype=np.float64).reshape(1, -1)
        noise = self._exploration_noise()
        a, log_prob, _ = self._policy(obs, noise)
        value = float(a[0, 0])
        if not math.isfinite(value):
            raise TrainingDiverged("actor produced a non-finite action")
        return value, float(log_prob[0, 0])

    def deterministic_action(self, obs: np.ndarray) -> float:
        obs = np.asarray(obs, dtype=np.float64).reshape(1, -1)
        out, _ = neural.forward(self.actor, obs)
        value = float(np.tanh(out[0, 0]))
        if not math.isfinite(value):
            raise TrainingDiverged("actor produced a non-finite action")
        return value

    def act(self, obs: np.ndarray, deterministic: bool = True) -> float:
        """Policy output as a motor torque in N*m."""
        if deterministic:
            return self.torque_limit * self.deterministic_action(obs)
        return self.torque_limit * self.sample_action(obs)[0]

    # -- learning -------------------------------------------------------

    def _actor_gradients(self, obs: np.ndarray, noise: np.ndarray):
        """Loss and parameter gradients of E[alpha*log pi - min(Q1,Q2)].

        The reparameterized chain runs through tanh squashing, the clamped
        log-std head, and whichever critic is the pointwise minimum.  noise
        is the frozen standard-normal draw, so the same (obs, noise) pair
        always yields the same loss; the finite-difference tests rely on
        that determinism.
        """
        n = obs.shape[0]
        scale = 1.0 / n
        a, log_prob, aux = self._policy(obs, noise)
        xa = np.hstack([obs, a])
        q1, c1 = neural.forward(self.critic1, xa)
        q2, c2 = neural.forward(self.critic2, xa)
        take1 = q1 <= q2
        alpha = self.alpha
        loss = float(np.mean(alpha * log_prob - np.minimum(q1, q2)))
        gin1, _ = neural.backward(self.critic1, c1, -scale * take1)
        gin2, _ = neural.backward(self.critic2, c2, -scale * (~take1))
        g_a = (gin1 + gin2)[:, self.obs_dim :]  # dL/da, action column only
        u, astd = aux["u"], aux["std"]
        g_u = alpha * scale * 2.0 * np.tanh(u) + g_a * (1.0 - aux["a"] ** 2)
        g_log_std = g_u * astd * noise - alpha * scale
        in_range = (aux["log_std_raw"] > LOG_STD_MIN) & (aux["log_std_raw"] < LOG_STD_MAX)
        g_out = np.hstack([g_u, g_log_std * in_range])
        _, grads = neural.backward(self.actor, aux["cache"], g_out)
        return loss, grads, log_prob

    def critic_targets(self, batch: Batch) -> np.ndarray:
        noise = self._action_rng.standard_normal((batch.next_obs.shape[0], 1))
        next_a, next_logp, _ = self._policy(batch.next_obs, noise)
        xs = np.hstack([batch.next_obs, next_a])
        q1, _ = neural.forward(self.target1, xs)
        q2, _ = neural.forward(self.target2, xs)
        soft_q = np.minimum(q1, q2) - self.alpha * next_logp
        return batch.rewards + self.config.gamma * (1.0 - batch.terminals) * soft_q

    def update(self, batch: Batch) -> dict:
        cfg = self.config
        n = batch.obs.shape[0]
        scale = 1.0 / n

        # critics against the frozen soft target
        y = self.critic_targets(batch)
        xs = np.hstack([batch.obs, batch.actions])
        critic_losses = []
        for critic, lr in ((self.critic1, cfg.critic_lr), (self.critic2, cfg.critic_lr)):
            q, cache = neural.forward(critic, xs)
            err = q - y
            _, grads = neural.backward(critic, cache, (2.0 * scale) * err)
            neural.adam_step(critic, grads, lr)
            critic_losses.append(float(np.mean(err**2)))

        # actor through the refreshed critics
        noise = self._action_rng.standard_normal((n, 1))
        alpha = self.alpha
        actor_loss, actor_grads, log_prob = self._actor_gradients(batch.obs, noise)
        neural.adam_step(self.actor, actor_grads, cfg.actor_lr)

        # temperature: d/d(log_alpha) of mean(-alpha * (log_prob + target))
        g_log_alpha = float(-alpha * np.mean(log_prob + self.target_entropy))
        self.log_alpha.step(g_log_alpha, cfg.entropy_lr)

        self.update_count += 1
        if self.update_count % cfg.target_update_period == 0:
            neural.soft_update(self.target1, self.critic1, cfg.soft_update_tau)
            neural.soft_update(self.target2, self.critic2, cfg.soft_update_tau)

        losses = {
            "critic1_loss": critic_losses[0],
            "critic2_loss": critic_losses[1],
            "actor_loss": actor_loss,
            "alpha": alpha,
        }
        if not all(math.isfinite(v) for v in losses.values()):
            raise TrainingDiverged(f"non-finite training losses: {losses}")
        return losses

    def healthy(self) -> bool:
        return (
            math.isfinite(self.log_alpha.value)
            and all(
                net.all_finite()
                for net in (self.actor, self.critic1, self.critic2, self.target1, self.target2)
            )
        )


# -- training loop -------------------------------------------------------


@dataclass
class EpisodeRecord:
    episode: int
    epoch: int
    return_: float
    length: int
    energy_spent: Optional[float]  # None when the env has no tank
    depleted: bool
    term_cause: str  # none | truncated | depleted


@dataclass
class EpochRecord:
    epoch: int
    env_steps: int
    return_: float  # summed reward over the epoch's steps
    episodes: int
    mean_episode_return: float
    eval_return: float  # mean deterministic-eval return; nan when eval is off
    max_episode_energy: Optional[float]
    mean_episode_energy: Optional[float]
    depletions: int
    alpha: float
    critic1_loss: float
    critic2_loss: float
    actor_loss: float


@dataclass
class TrainResult:
    agent: SacAgent
    best_actor: Mlp
    best_epoch: int
    best_return: float  # the selection score: eval return, or epoch return when eval is off
    screen_passed: Optional[bool]  # None when the screen is off
    epochs: list
    episodes: list
    wall_time: float


def train(env, config: SacConfig, seed: int, progress=None, dump_dir=None) -> TrainResult:
    """Run SAC on env and return the trained agent plus logs.

    env may be the bare pendulum or any wrapper from passivize; per-episode
    energy is logged whenever step results carry tank fields.  After each
    epoch the current actor is scored with eval_episodes_per_epoch
    deterministic episodes on a private copy of env, started from the
    env's fixed reset_grid of initial angles, and the best-scoring actor
    is kept; stochastic epoch returns make a noisy selection signal, so
    the held-out eval is what "best" means here.  With screen_candidates
    set, the screen_candidates top scorers are additionally screened on a
    dense start grid and the best scorer that settles from every start
    wins; if none does, selection falls back to the raw top scorer and
    TrainResult.screen_passed records False.  progress, if given, is
    called with each EpochRecord as it completes.  On divergence the agent
    state is dumped under dump_dir (when set) and the raised
    TrainingDiverged carries the dump path.
    """
    started = time.perf_counter()
    ss = np.random.SeedSequence(seed)
    env_ss, agent_ss, replay_ss, warmup_ss = ss.spawn(4)
    env.seed(env_ss)
    agent = SacAgent(env.observation_dim, env.params.torque_limit, config, agent_ss)
    replay = ReplayBuffer(config.replay_capacity, env.observation_dim, np.random.default_rng(replay_ss))
    warmup_rng = np.random.default_rng(warmup_ss)
    limit = env.params.torque_limit
    eval_env = copy.deepcopy(env) if config.eval_episodes_per_epoch > 0 else None

    obs, _ = env.reset()
    try:
        return _train_loop(
            env, config, progress, started, agent, replay, warmup_rng, limit, obs,
            eval_env,
        )
    except TrainingDiverged as exc:
        if dump_dir is not None and exc.dump_path is None:
            os.makedirs(dump_dir, exist_ok=True)
            dump_path = os.path.join(dump_dir, f"diverged_seed{seed}.npz")
            save_checkpoint(dump_path, agent, {"diverged": True, "seed": seed})
            raise TrainingDiverged(str(exc), dump_path) from exc
        raise


def _deterministic_eval(env, agent, episodes: int) -> float:
    total = 0.0
    for beta0 in env.reset_grid(episodes):
        obs, _ = env.reset(beta=beta0)
        while True:
            res = env.step(agent.act(obs))
            total += res.reward
            obs = res.obs
            if res.terminal or res.truncated:
                break
    return total / episodes


def _actor_torque(actor: Mlp, obs, limit: float) -> float:
    out, _ = neural.forward(actor, np.asarray(obs, dtype=np.float64).reshape(1, -1))
    return limit * float(np.tanh(out[0, 0]))


def _screen_actor(env, actor: Mlp, limit: float, config) -> bool:
    """True when the actor settles upright from every screened start.

    The per-epoch eval grid is too coarse to notice narrow slivers of the
    start distribution from which a policy overshoots the catch and keeps
    rotating, so the kept checkpoint is re-checked on a much denser grid.
    A start fails if the episode ends early (budget depletion on a
    training wrapper) or its final-window position error stays above
    screen_error_limit; a settled policy sits near 0, a rotating one
    averages near 1.
    """
    horizon = min(config.screen_horizon_steps, env.max_steps)
    window = max(1, horizon // 3)
    for beta0 in env.reset_grid(config.screen_grid_points):
        obs, _ = env.reset(beta=beta0)
        errors = []
        for _ in range(horizon):
            res = env.step(_actor_torque(actor, obs, limit))
            obs = res.obs
            errors.append(1.0 - obs[0])  # d_k read straight off the observation
            if res.terminal:
                return False
            if res.truncated:
                break
        if float(np.mean(errors[-window:])) > config.screen_error_limit:
            return False
    return True


def _train_loop(env, config, progress, started, agent, replay, warmup_rng, limit, obs,
                eval_env):
    episode_return = 0.0
    episode_len = 0
    episode_idx = 0
    total_steps = 0
    # warmup torque blocks share the exploration hold length
    warmup_hold = config.noise_hold_steps if config.exploration == "correlated-gaussian" else 1
    warmup_torque = 0.0
    epoch_logs: list = []
    episode_logs: list = []
    keep = max(1, config.screen_candidates)
    candidates: list = []  # (score, epoch, actor snapshot), best score first
    last_losses = {"critic1_loss": math.nan, "critic2_loss": math.nan,
                   "actor_loss": math.nan, "alpha": agent.alpha}

    for epoch in range(config.epochs):
        epoch_return = 0.0
        epoch_episode_returns: list = []
        epoch_energies: list = []
        depletions = 0
        for _ in range(config.steps_per_epoch):
            if total_steps < config.steps_before_training:
                if episode_len % warmup_hold == 0:
                    warmup_torque = float(warmup_rng.uniform(-limit, limit))
                torque = warmup_torque
                action = torque / limit
            else:
                action, _ = agent.sample_action(obs)
                torque = limit * action
            res = env.step(torque)
            replay.add(obs, action, res.reward, res.obs, res.terminal, res.truncated)
            episode_return += res.reward
            epoch_return += res.reward
            episode_len += 1
            total_steps += 1
            obs = res.obs
            if res.terminal or res.truncated:
                energy = getattr(res, "energy_spent", None)
                depleted = bool(getattr(res, "depleted", False))
                cause = "depleted" if res.terminal else "truncated"
                episode_logs.append(
                    EpisodeRecord(
                        episode=episode_idx,
                        epoch=epoch,
                        return_=episode_return,
                        length=episode_len,
                        energy_spent=energy,
                        depleted=depleted,
                        term_cause=cause,
                    )
                )
                epoch_episode_returns.append(episode_return)
                if energy is not None:
                    epoch_energies.append(energy)
                if depleted:
                    depletions += 1
                episode_idx += 1
                episode_return = 0.0
                episode_len = 0
                obs, _ = env.reset()
                agent.begin_episode()

        if total_steps >= config.steps_before_training and replay.size >= config.batch_size:
            loss_sums = {"critic1_loss": 0.0, "critic2_loss": 0.0, "actor_loss": 0.0}
            for _ in range(config.gradient_steps_per_epoch):
                losses = agent.update(replay.sample(config.batch_size))
                for k in loss_sums:
                    loss_sums[k] += losses[k]
            last_losses = {
                k: v / config.gradient_steps_per_epoch for k, v in loss_sums.items()
            }
            last_losses["alpha"] = agent.alpha
            if not agent.healthy():
                raise TrainingDiverged("non-finite parameters after epoch updates")

        eval_return = math.nan
        if eval_env is not None:
            # fixed start grid, deterministic acting: no training stream
            # is consumed and every epoch faces the same initial states
            eval_return = _deterministic_eval(eval_env, agent, config.eval_episodes_per_epoch)

        record = EpochRecord(
            epoch=epoch,
            env_steps=total_steps,
            return_=epoch_return,
            episodes=len(epoch_episode_returns),
            mean_episode_return=(
                float(np.mean(epoch_episode_returns)) if epoch_episode_returns else math.nan
            ),
            eval_return=eval_return,
            max_episode_energy=(max(epoch_energies) if epoch_energies else None),
            mean_episode_energy=(
                float(np.mean(epoch_energies)) if epoch_energies else None
            ),
            depletions=depletions,
            alpha=last_losses["alpha"],
            critic1_loss=last_losses["critic1_loss"],
            critic2_loss=last_losses["critic2_loss"],
            actor_loss=last_losses["actor_loss"],
        )
        epoch_logs.append(record)
        score = epoch_return if eval_env is None else eval_return
        if math.isfinite(score) and (
            len(candidates) < keep or score > candidates[-1][0]
        ):
            candidates.append((score, epoch, agent.actor.copy()))
            candidates.sort(key=lambda c: (-c[0], c[1]))
            del candidates[keep:]
        if progress is not None:
            progress(record)

    screen_passed = None
    if not candidates:
        best_return, best_epoch, best_actor = -math.inf, -1, agent.actor.copy()
    else:
        best_return, best_epoch, best_actor = candidates[0]
        if config.screen_candidates > 0:
            screen_env = eval_env if eval_env is not None else copy.deepcopy(env)
            screen_passed = False
            for score, epoch, actor in candidates:
                if _screen_actor(screen_env, actor, limit, config):
                    best_return, best_epoch, best_actor = score, epoch, actor
                    screen_passed = True
                    break

    return TrainResult(
        agent=agent,
        best_actor=best_actor,
        best_epoch=best_epoch,
        best_return=best_return,
        screen_passed=screen_passed,
        epochs=epoch_logs,
        episodes=episode_logs,
        wall_time=time.perf_counter() - started,
    )


# -- checkpoints ----------------------------------------------------------


def _pack_net(arrays: dict, name: str, net: Mlp) -> None:
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"{name}_w{i}"] = w
        arrays[f"{name}_b{i}"] = b
        arrays[f"{name}_mw{i}"] = net.m_w[i]
        arrays[f"{name}_vw{i}"] = net.v_w[i]
        arrays[f"{name}_mb{i}"] = net.m_b[i]
        arrays[f"{name}_vb{i}"] = net.v_b[i]
    arrays[f"{name}_adam_t"] = np.array([net.adam_t], dtype=np.int64)


def _unpack_net(data, name: str, n_layers: int) -> Mlp:
    net = Mlp(
        weights=[data[f"{name}_w{i}"] for i in range(n_layers)],
        biases=[data[f"{name}_b{i}"] for i in range(n_layers)],
        m_w=[data[f"{name}_mw{i}"] for i in range(n_layers)],
        v_w=[data[f"{name}_vw{i}"] for i in range(n_layers)],
        m_b=[data[f"{name}_mb{i}"] for i in range(n_layers)],
        v_b=[data[f"{name}_vb{i}"] for i in range(n_layers)],
        adam_t=int(data[f"{name}_adam_t"][0]),
    )
    return net


def save_checkpoint(path, agent: SacAgent, extra_meta: Optional[dict] = None) -> None:
    """Portable npz snapshot of the full agent, tagged with a magic header."""
    meta = {
        "magic": CHECKPOINT_MAGIC,
        "format_version": CHECKPOINT_VERSION,
        "obs_dim": agent.obs_dim,
        "torque_limit": agent.torque_limit,
        "config": asdict(agent.config),
        "update_count": agent.update_count,
        "target_entropy": agent.target_entropy,
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays: dict = {"meta_json": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for name, net in (
        ("actor", agent.actor),
        ("critic1", agent.critic1),
        ("critic2", agent.critic2),
        ("target1", agent.target1),
        ("target2", agent.target2),
    ):
        _pack_net(arrays, name, net)
    arrays["log_alpha"] = np.array(
        [agent.log_alpha.value, agent.log_alpha.m, agent.log_alpha.v, agent.log_alpha.t]
    )
    np.savez_compressed(path, **arrays)


def load_checkpoint(path) -> tuple[SacAgent, dict]:
    """Rebuild an agent from save_checkpoint output.

    Raises ValueError on anything that is not an agent checkpoint of the
    supported version.
    """
    try:
        data = np.load(path, allow_pickle=False)
    except Exception as exc:
        raise ValueError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta_json" not in data:
        raise ValueError(f"{path} is missing the checkpoint header")
    meta = json.loads(bytes(data["meta_json"]).decode())
    if meta.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not an agent checkpoint (bad magic)")
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version {meta.get('format_version')}"
        )
    config = SacConfig(**meta["config"])
    agent = SacAgent(meta["obs_dim"], meta["torque_limit"], config, seed=0)
    n_layers = len(config.hidden_sizes) + 1
    agent.actor = _unpack_net(data, "actor", n_layers)
    agent.critic1 = _unpack_net(data, "critic1", n_layers)
    agent.critic2 = _unpack_net(data, "critic2", n_layers)
    agent.target1 = _unpack_net(data, "target1", n_layers)
    agent.target2 = _unpack_net(data, "target2", n_layers)
    la = data["log_alpha"]
    agent.log_alpha = ScalarAdam(value=float(la[0]), m=float(la[1]), v=float(la[2]), t=int(la[3]))
    agent.update_count = int(meta["update_count"])
    agent.target_entropy = float(meta["target_entropy"])
    return agent, meta
