"""Pendulum swing-up MDP around the rod plant.

Observations are [sin(beta), cos(beta), tanh(beta_dot)].  Episodes start
near the hanging rest state and truncate after a fixed step count; the
plain task has no terminal states, so truncation bootstraps during
training.  The reward is a strictly positive inverse-cost shaped toward
the upright state:

    r = 1 / (1 + |sin(beta) - 1| + 0.1 * |tanh(beta_dot)| + 0.01 * |tau|)

evaluated on the post-step state with the torque that actually reached the
plant after clamping (and after any gate a wrapper applies).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import PendulumParams, PendulumState, simulate_control_interval

__all__ = ["StepResult", "PendulumEnv", "observe", "reward"]

RESET_MEAN_BETA = -math.pi / 2
RESET_STD_BETA = 0.05 * math.pi
EVAL_GRID_SIGMAS = 3.0


def observe(state: PendulumState) -> np.ndarray:
    return np.array(
        [math.sin(state.beta), math.cos(state.beta), math.tanh(state.beta_dot)],
        dtype=np.float64,
    )


def reward(beta: float, beta_dot: float, applied_torque: float) -> float:
    cost = (
        1.0
        + abs(math.sin(beta) - 1.0)
        + 0.1 * abs(math.tanh(beta_dot))
        + 0.01 * abs(applied_torque)
    )
    return 1.0 / cost


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    terminal: bool  # true MDP termination; never both with truncated
    truncated: bool  # time-limit cut, value bootstraps across it
    info: dict = field(default_factory=dict)


class PendulumEnv:
    """Swing-up task; step() takes a motor torque in N*m."""

    observation_dim = 3
    action_dim = 1

    def __init__(
        self,
        params: Optional[PendulumParams] = None,
        max_steps: int = 500,
        seed: Optional[int] = None,
    ):
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.params = params if params is not None else PendulumParams()
        self.max_steps = max_steps
        # worst case: hanging opposite the target at the torque clamp
        self.reward_range = (
            1.0 / (1.0 + 2.0 + 0.1 + 0.01 * self.params.torque_limit),
            1.0,
        )
        self._rng = np.random.default_rng(seed)
        self._state: Optional[PendulumState] = None
        self._steps = 0
        self._done = False

    def seed(self, seed: Optional[int]) -> None:
        self._rng = np.random.default_rng(seed)

    @property
    def state(self) -> PendulumState:
        if self._state is None:
            raise RuntimeError("reset() before reading state")
        return self._state

    def reset(self, beta: Optional[float] = None) -> tuple[np.ndarray, dict]:
        """Start a fresh episode; beta overrides the random initial angle."""
        if beta is None:
            beta = RESET_MEAN_BETA + RESET_STD_BETA * self._rng.standard_normal()
        self._state = PendulumState(beta=float(beta), beta_dot=0.0)
        self._steps = 0
        self._done = False
        return observe(self._state), {"beta": self._state.beta, "beta_dot": 0.0}

    def reset_grid(self, n: int) -> list:
        """n initial angles spread evenly over +-3 sigma of the reset draw.

        A fixed spread instead of sampling: policies that fail from one
        flank of the start distribution lose score every time, not at the
        whim of a sampler.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        if n == 1:
            return [RESET_MEAN_BETA]
        zs = np.linspace(-EVAL_GRID_SIGMAS, EVAL_GRID_SIGMAS, n)
        return [float(RESET_MEAN_BETA + RESET_STD_BETA * z) for z in zs]

    def step(self, torque: float, external_torque: float = 0.0) -> StepResult:
        if self._state is None:
            raise RuntimeError("reset() before step()")
        if self._done:
            raise RuntimeError("episode over; reset() the env")
        torque = float(torque)
        if not math.isfinite(torque):
            raise ValueError("non-finite torque")
        limit = self.params.torque_limit
        applied = min(max(torque, -limit), limit)
        result = simulate_control_interval(self._state, applied, external_torque, self.params)
        self._state = result.state
        self._steps += 1
        truncated = self._steps >= self.max_steps
        self._done = truncated
        r = reward(result.state.beta, result.state.beta_dot, applied)
        info = {
            "applied_torque": applied,
            "external_torque": external_torque,
            "beta": result.state.beta,
            "beta_dot": result.state.beta_dot,
            "dbeta": result.beta_trace[-1] - result.beta_trace[0],
        }
        return StepResult(observe(result.state), r, False, truncated, info)
