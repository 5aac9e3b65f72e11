"""Rigid pendulum plant integrated with a semi-implicit Euler scheme.

The plant is a uniform rod of mass m and length l pivoting about one end,
actuated by a motor torque at the pivot plus an optional external torque
channel.  Angle beta is measured from the horizontal axis pointing right,
so beta = -pi/2 is the rod hanging at rest and beta = +pi/2 is upright.

    I * dd_beta = tau + delta - d * d_beta - (m*g*l/2) * cos(beta)

with I = m*l^2/3 the rotational inertia about the pivot.  The controller
runs at a fixed period and holds its torque constant while the plant is
integrated on a finer substep grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "PendulumParams",
    "PendulumState",
    "IntervalResult",
    "substep",
    "simulate_control_interval",
    "mechanical_energy",
]


@dataclass(frozen=True)
class PendulumParams:
    """Physical and integration constants, SI units throughout."""

    mass: float = 1.0  # kg
    length: float = 1.0  # m
    friction: float = 0.1  # N*m*s/rad, viscous
    gravity: float = 9.81  # m/s^2
    torque_limit: float = 2.5  # N*m; below max gravity torque, so swing-up needs pumping
    control_period: float = 0.02  # s (50 Hz)
    substeps_per_control: int = 10

    def __post_init__(self) -> None:
        for name in ("mass", "length", "gravity", "control_period"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.friction < 0.0 or self.torque_limit < 0.0:
            raise ValueError("friction and torque_limit must be non-negative")
        if self.substeps_per_control < 1:
            raise ValueError("substeps_per_control must be >= 1")

    @property
    def inertia(self) -> float:
        """Rotational inertia of a uniform rod about its end, kg*m^2."""
        return self.mass * self.length**2 / 3.0

    @property
    def substep_dt(self) -> float:
        return self.control_period / self.substeps_per_control


class PendulumState(NamedTuple):
    beta: float  # rad, unwrapped
    beta_dot: float  # rad/s


class IntervalResult(NamedTuple):
    """One control interval of plant evolution plus energy bookkeeping."""

    state: PendulumState
    injected_energy: float  # J, work done by the applied torque along the substep path
    dissipated_energy: float  # J, trapezoidal estimate of friction losses
    beta_trace: np.ndarray  # substep positions incl. both endpoints


def _acceleration(beta: float, beta_dot: float, torque: float, params: PendulumParams) -> float:
    gravity_torque = 0.5 * params.mass * params.gravity * params.length * math.cos(beta)
    return (torque - params.friction * beta_dot - gravity_torque) / params.inertia


def substep(
    state: PendulumState,
    applied_torque: float,
    external_torque: float,
    dt: float,
    params: PendulumParams,
) -> PendulumState:
    """Advance one substep of length dt with both torques held constant.

    Semi-implicit Euler: velocity first, then position with the updated
    velocity.  This keeps the long-horizon energy error bounded instead of
    growing secularly, which the energy accounting tests rely on.
    """
    if not (math.isfinite(state.beta) and math.isfinite(state.beta_dot)):
        raise ValueError(f"non-finite state {state!r}")
    if not (math.isfinite(applied_torque) and math.isfinite(external_torque)):
        raise ValueError("non-finite torque input")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    accel = _acceleration(state.beta, state.beta_dot, applied_torque + external_torque, params)
    beta_dot = state.beta_dot + dt * accel
    beta = state.beta + dt * beta_dot
    return PendulumState(beta, beta_dot)


def simulate_control_interval(
    state: PendulumState,
    applied_torque: float,
    external_torque: float,
    params: PendulumParams,
) -> IntervalResult:
    """Hold both torques constant for one control period and integrate.

    The injected-energy accumulator is the exact work of the applied torque
    along the realized substep path, sum of tau * (beta_{i+1} - beta_i).
    With a constant torque this telescopes to tau * (beta_end - beta_start),
    which is what the sampled tank update charges for the interval.  The
    dissipation accumulator integrates d * beta_dot^2 by the trapezoid rule
    on the same grid.
    """
    if abs(applied_torque) > params.torque_limit + 1e-12:
        raise ValueError(
            f"applied torque {applied_torque} exceeds limit {params.torque_limit}"
        )
    dt = params.substep_dt
    n = params.substeps_per_control
    trace = np.empty(n + 1, dtype=np.float64)
    trace[0] = state.beta
    injected = 0.0
    dissipated = 0.0
    current = state
    for i in range(n):
        nxt = substep(current, applied_torque, external_torque, dt, params)
        injected += applied_torque * (nxt.beta - current.beta)
        dissipated += 0.5 * dt * params.friction * (
            current.beta_dot**2 + nxt.beta_dot**2
        )
        trace[i + 1] = nxt.beta
        current = nxt
    return IntervalResult(current, injected, dissipated, trace)


def mechanical_energy(state: PendulumState, params: PendulumParams) -> float:
    """Kinetic plus potential energy in J, zero at the hanging rest state."""
    kinetic = 0.5 * params.inertia * state.beta_dot**2
    potential = 0.5 * params.mass * params.gravity * params.length * (1.0 + math.sin(state.beta))
    return kinetic + potential
