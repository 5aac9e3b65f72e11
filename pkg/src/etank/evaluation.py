"""Episode rollouts, task-energy estimation, and evaluation summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .tank import task_energy

__all__ = [
    "STEP_COLUMNS",
    "EpisodeStats",
    "TaskEnergyReport",
    "agent_policy",
    "random_policy",
    "run_episode",
    "run_episodes",
    "estimate_task_energy",
]

# fixed step-log schema, one row per control step
STEP_COLUMNS = [
    "k",
    "beta",
    "beta_dot",
    "w",
    "w_bar",
    "reward",
    "e_k",
    "e_hat_k",
    "gated",
    "depleted",
    "term_cause",
]

Policy = Callable[[np.ndarray], float]


@dataclass
class EpisodeStats:
    episode: int
    return_: float
    length: int
    energy_spent: Optional[float]
    depleted: bool
    gated_steps: int
    final_window_error: float  # mean distance 1 - sin(beta) over the last window
    term_cause: str


@dataclass
class TaskEnergyReport:
    e_star: float  # J, max episode energy over the batch
    episodes: list  # EpisodeStats


def agent_policy(agent, deterministic: bool = True) -> Policy:
    def policy(obs: np.ndarray) -> float:
        return agent.act(obs, deterministic=deterministic)

    return policy


def random_policy(torque_limit: float, rng: np.random.Generator) -> Policy:
    def policy(_obs: np.ndarray) -> float:
        return float(rng.uniform(-torque_limit, torque_limit))

    return policy


def run_episode(
    env,
    policy: Policy,
    episode: int = 0,
    final_window: int = 100,
    collect_steps: bool = False,
) -> tuple[EpisodeStats, Optional[list]]:
    """Roll one episode to termination or truncation.

    Works with the bare env or any wrapper; tank columns fall back to an
    infinite level when no tank is present.  Step rows follow STEP_COLUMNS,
    with k counting control steps from 1 and each row holding post-step
    values.
    """
    obs, _ = env.reset()
    rows: Optional[list] = [] if collect_steps else None
    total = 0.0
    k = 0
    gated_steps = 0
    distances: list = []
    depleted = False
    energy = None
    term_cause = "none"
    while True:
        res = env.step(policy(obs))
        k += 1
        total += res.reward
        beta = res.info["beta"]
        distances.append(1.0 - math.sin(beta))
        gated = bool(getattr(res, "gated", False))
        gated_steps += gated
        depleted = bool(getattr(res, "depleted", False)) or depleted
        energy = getattr(res, "energy_spent", None)
        done = res.terminal or res.truncated
        if done:
            term_cause = "depleted" if res.terminal else "truncated"
        if rows is not None:
            w_bar = getattr(res, "applied_torque", res.info.get("applied_torque"))
            rows.append(
                [
                    k,
                    beta,
                    res.info["beta_dot"],
                    getattr(res, "commanded_torque", w_bar),
                    w_bar,
                    res.reward,
                    getattr(res, "tank_level", math.inf),
                    energy if energy is not None else math.nan,
                    int(gated),
                    int(getattr(res, "depleted", False)),
                    term_cause if done else "none",
                ]
            )
        obs = res.obs
        if done:
            break
    window = distances[-final_window:] if final_window > 0 else distances
    stats = EpisodeStats(
        episode=episode,
        return_=total,
        length=k,
        energy_spent=energy,
        depleted=depleted,
        gated_steps=gated_steps,
        final_window_error=float(np.mean(window)),
        term_cause=term_cause,
    )
    return stats, rows


def run_episodes(
    env,
    policy: Policy,
    episodes: int,
    final_window: int = 100,
    collect_steps: bool = False,
) -> tuple[list, Optional[list]]:
    """Roll several episodes; step rows, if collected, gain a leading
    episode index column."""
    stats = []
    all_rows: Optional[list] = [] if collect_steps else None
    for ep in range(episodes):
        s, rows = run_episode(env, policy, ep, final_window, collect_steps)
        stats.append(s)
        if all_rows is not None and rows is not None:
            all_rows.extend([ep] + r for r in rows)
    return stats, all_rows


def estimate_task_energy(env, policy: Policy, episodes: int = 100) -> TaskEnergyReport:
    """Worst-case episode energy of a policy run without gating.

    env must log energy (wrap it with an infinite-capacity tank when the
    policy is meant to run unconstrained); the estimate is the maximum
    final spent energy over the batch.
    """
    stats, _ = run_episodes(env, policy, episodes)
    energies = [s.energy_spent for s in stats]
    if any(e is None for e in energies):
        raise ValueError("env does not log energy; wrap it with a tank")
    return TaskEnergyReport(e_star=task_energy(energies), episodes=stats)
