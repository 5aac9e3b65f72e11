"""Wrappers that put an energy tank between a policy and the plant.

Three wrappers cover the two places a budget can act:

* InferenceTankWrapper guards an already-trained policy.  The gate is
  evaluated against the tank level at the start of every control step;
  below threshold the plant receives zero torque but the episode keeps
  running, so a depleted controller is simply detached.
* ExtendedTerminationWrapper shapes training.  The full torque always
  reaches the plant, but the episode ends (true terminal, no bootstrap)
  once the tank falls below threshold.  It refuses environments whose
  reward can be zero or negative, because the scheme only pressures the
  policy toward budget-frugal behavior when living longer is always worth
  reward.
* ExtendedStateWrapper also trains with an active gate but instead of
  terminating appends the remaining-budget fraction to the observation,
  letting the policy condition on what is left.

A ForceFieldWrapper injects a disturbance torque at the plant's external
channel.  The disturbance never touches the tank ledger: the budget only
accounts for energy the controller itself pushes through the actuator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import StepResult
from .tank import DEFAULT_GATE_EPSILON, TankMode, TankState, delta_energy, update

__all__ = [
    "PassiveStepResult",
    "InferenceTankWrapper",
    "ExtendedTerminationWrapper",
    "ExtendedStateWrapper",
    "ForceField",
    "ForceFieldWrapper",
]


@dataclass
class PassiveStepResult:
    obs: np.ndarray
    reward: float
    terminal: bool
    truncated: bool
    info: dict
    inner: StepResult
    tank_level: float  # J after this step's withdrawal
    tank_fraction: float
    energy_spent: float  # J, cumulative this episode
    gated: bool  # gate was closed when the step began
    depleted: bool
    commanded_torque: float  # clamped policy output
    applied_torque: float  # what the plant received


class _Wrapper:
    """Delegation shared by every wrapper; step/reset differ per subclass."""

    def __init__(self, env):
        self.env = env

    def seed(self, seed) -> None:
        self.env.seed(seed)

    def reset_grid(self, n: int) -> list:
        return self.env.reset_grid(n)

    @property
    def unwrapped(self):
        return getattr(self.env, "unwrapped", self.env)

    @property
    def state(self):
        return self.env.state

    @property
    def params(self):
        return self.env.params

    @property
    def reward_range(self):
        return self.env.reward_range

    @property
    def max_steps(self):
        return self.env.max_steps

    @property
    def observation_dim(self):
        return self.env.observation_dim

    @property
    def action_dim(self):
        return self.env.action_dim


class _TankWrapper(_Wrapper):
    def __init__(self, env, capacity: float, epsilon: float = DEFAULT_GATE_EPSILON):
        super().__init__(env)
        self.capacity = float(capacity)
        self.epsilon = float(epsilon)
        self.tank = TankState.fresh(self.capacity, self.epsilon, TankMode.NO_REFILL)

    def reset(self, beta=None):
        self.tank = TankState.fresh(self.capacity, self.epsilon, TankMode.NO_REFILL)
        return self.env.reset(beta=beta)

    def _clamp(self, torque: float) -> float:
        limit = self.params.torque_limit
        return min(max(float(torque), -limit), limit)


class InferenceTankWrapper(_TankWrapper):
    """Budget guard for deployment; capacity=math.inf gives a transparent
    wrapper that only logs energy."""

    def step(self, torque: float, external_torque: float = 0.0) -> PassiveStepResult:
        commanded = self._clamp(torque)
        gate_was_open = self.tank.gate_open
        applied = commanded if gate_was_open else 0.0
        res = self.env.step(applied, external_torque)
        de = delta_energy(applied, res.info["dbeta"], TankMode.NO_REFILL)
        self.tank = update(self.tank, de)
        return PassiveStepResult(
            obs=res.obs,
            reward=res.reward,
            terminal=res.terminal,
            truncated=res.truncated,
            info=res.info,
            inner=res,
            tank_level=self.tank.level,
            tank_fraction=self.tank.fraction,
            energy_spent=self.tank.spent,
            gated=not gate_was_open,
            depleted=self.tank.depleted,
            commanded_torque=commanded,
            applied_torque=applied,
        )


class ExtendedTerminationWrapper(_TankWrapper):
    """Training scheme: spend freely, but depletion ends the episode."""

    def __init__(self, env, capacity: float, epsilon: float = DEFAULT_GATE_EPSILON):
        rng = getattr(env, "reward_range", None)
        if rng is None:
            raise ValueError("env must declare a reward_range")
        if rng[0] <= 0.0:
            raise ValueError(
                "termination-on-depletion needs strictly positive rewards, "
                f"got reward_range {rng}; otherwise early death can pay"
            )
        super().__init__(env, capacity, epsilon)

    def step(self, torque: float, external_torque: float = 0.0) -> PassiveStepResult:
        commanded = self._clamp(torque)
        res = self.env.step(commanded, external_torque)
        de = delta_energy(commanded, res.info["dbeta"], TankMode.NO_REFILL)
        self.tank = update(self.tank, de)
        out_of_budget = self.tank.level < self.tank.epsilon
        # depletion is a true MDP terminal and outranks the time limit
        terminal = res.terminal or out_of_budget
        truncated = res.truncated and not terminal
        return PassiveStepResult(
            obs=res.obs,
            reward=res.reward,
            terminal=terminal,
            truncated=truncated,
            info=res.info,
            inner=res,
            tank_level=self.tank.level,
            tank_fraction=self.tank.fraction,
            energy_spent=self.tank.spent,
            gated=False,
            depleted=out_of_budget or self.tank.depleted,
            commanded_torque=commanded,
            applied_torque=commanded,
        )


class ExtendedStateWrapper(_TankWrapper):
    """Training scheme: active gate plus the budget fraction as a fourth
    observation component; episodes only end by the inner time limit."""

    @property
    def observation_dim(self):
        return self.env.observation_dim + 1

    def _extend(self, obs: np.ndarray) -> np.ndarray:
        return np.append(obs, self.tank.fraction)

    def reset(self, beta=None):
        obs, info = super().reset(beta=beta)
        return self._extend(obs), info

    def step(self, torque: float, external_torque: float = 0.0) -> PassiveStepResult:
        commanded = self._clamp(torque)
        gate_was_open = self.tank.gate_open
        applied = commanded if gate_was_open else 0.0
        res = self.env.step(applied, external_torque)
        de = delta_energy(applied, res.info["dbeta"], TankMode.NO_REFILL)
        self.tank = update(self.tank, de)
        return PassiveStepResult(
            obs=self._extend(res.obs),
            reward=res.reward,
            terminal=res.terminal,
            truncated=res.truncated,
            info=res.info,
            inner=res,
            tank_level=self.tank.level,
            tank_fraction=self.tank.fraction,
            energy_spent=self.tank.spent,
            gated=not gate_was_open,
            depleted=self.tank.depleted,
            commanded_torque=commanded,
            applied_torque=applied,
        )


@dataclass(frozen=True)
class ForceField:
    """Disturbance torque profile evaluated once per control step."""

    profile: str  # "constant" or "velocity_aligned"
    magnitude: float  # N*m

    def __post_init__(self):
        if self.profile not in ("constant", "velocity_aligned"):
            raise ValueError(f"unknown force field profile {self.profile!r}")
        if not math.isfinite(self.magnitude):
            raise ValueError("magnitude must be finite")

    def torque(self, state) -> float:
        if self.profile == "constant":
            return self.magnitude
        # velocity_aligned opposes the current motion, draining the plant
        return -self.magnitude * float(np.sign(state.beta_dot))


class ForceFieldWrapper(_Wrapper):
    """Adds a state-dependent disturbance to whatever it wraps.

    The field torque is computed from the pre-step plant state and rides
    the external channel, so with a tank wrapper inside it the disturbance
    reaches the plant but never the ledger.
    """

    def __init__(self, env, field: ForceField):
        super().__init__(env)
        self.field = field

    def reset(self, beta=None):
        return self.env.reset(beta=beta)

    def step(self, torque: float, external_torque: float = 0.0):
        delta = self.field.torque(self.state)
        return self.env.step(torque, external_torque + delta)
