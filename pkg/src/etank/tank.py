"""Virtual energy tank: budget bookkeeping and the torque gate.

The tank starts an episode holding a finite energy budget.  Every control
step withdraws the energy the actuator actually injected into the plant,
sampled as w * (q_after - q_before) with the torque held constant over the
step, so the discrete ledger matches the continuous storage flow exactly.
A policy's torque only reaches the plant while the tank holds at least the
gate threshold; below it the gate substitutes zero torque.

Two withdrawal modes exist.  NO_REFILL charges max(0, w*dq), so energy the
plant returns to the actuator is forfeited and the spent counter is
monotone.  REFILL_ALLOWED charges the signed work and exists as a
verification ledger, not as a control mode: it is the discrete twin of the
continuous tank state and may go negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable

import numpy as np

__all__ = [
    "TankMode",
    "TankState",
    "DEFAULT_GATE_EPSILON",
    "delta_energy",
    "update",
    "gate",
    "task_energy",
    "continuous_tank_oracle",
]

DEFAULT_GATE_EPSILON = 1e-3  # J


class TankMode(Enum):
    NO_REFILL = "no_refill"
    REFILL_ALLOWED = "refill_allowed"


@dataclass(frozen=True)
class TankState:
    """Immutable tank snapshot; update() returns a new instance.

    level + spent == capacity holds for a NO_REFILL tank built by fresh(),
    including after the depletion floor.  capacity may be math.inf, which
    disables gating and turns the tank into a pure energy logger.
    """

    level: float  # J remaining
    capacity: float  # J at episode start
    spent: float = 0.0  # J withdrawn so far
    epsilon: float = DEFAULT_GATE_EPSILON  # J, gate threshold
    mode: TankMode = TankMode.NO_REFILL
    depleted: bool = False  # a withdrawal exceeded the remaining level

    @classmethod
    def fresh(
        cls,
        capacity: float,
        epsilon: float = DEFAULT_GATE_EPSILON,
        mode: TankMode = TankMode.NO_REFILL,
    ) -> "TankState":
        if math.isnan(capacity) or capacity < 0.0:
            raise ValueError("capacity must be >= 0 (math.inf allowed)")
        if not 0.0 <= epsilon < math.inf:
            raise ValueError("epsilon must be finite and >= 0")
        return cls(level=capacity, capacity=capacity, epsilon=epsilon, mode=mode)

    @property
    def gate_open(self) -> bool:
        return self.level >= self.epsilon

    @property
    def fraction(self) -> float:
        """level / capacity in [0, 1]; 1.0 for an infinite logger tank."""
        if math.isinf(self.capacity):
            return 1.0
        if self.capacity == 0.0:
            return 0.0
        return self.level / self.capacity


def delta_energy(w, dq, mode: TankMode) -> float:
    """Energy to withdraw for one control step.

    w is the torque vector actually applied over the step and dq the
    realized joint displacement.  Signed work in REFILL_ALLOWED mode,
    clipped at zero in NO_REFILL mode.
    """
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    dq = np.atleast_1d(np.asarray(dq, dtype=np.float64))
    if w.shape != dq.shape:
        raise ValueError(f"shape mismatch: torque {w.shape} vs displacement {dq.shape}")
    if not (np.isfinite(w).all() and np.isfinite(dq).all()):
        raise ValueError("non-finite torque or displacement")
    work = float(np.dot(w, dq))
    if mode is TankMode.NO_REFILL:
        return max(0.0, work)
    return work


def update(tank: TankState, de: float) -> TankState:
    """Withdraw de joules and return the successor tank state.

    NO_REFILL requires de >= 0; a withdrawal larger than the remaining
    level floors the tank at zero, pins spent to the capacity, and sets the
    depleted flag (the overdraw is at most one step's energy).
    REFILL_ALLOWED applies the signed ledger with no floor.
    """
    if not math.isfinite(de):
        raise ValueError("non-finite energy delta")
    if tank.mode is TankMode.NO_REFILL:
        if de < 0.0:
            raise ValueError("negative withdrawal in NO_REFILL mode")
        if de > tank.level:
            return replace(tank, level=0.0, spent=tank.capacity, depleted=True)
    return replace(tank, level=tank.level - de, spent=tank.spent + de)


def gate(tank: TankState, w):
    """Pass w through while the tank is at or above threshold, else zero it."""
    if tank.gate_open:
        return w
    if np.isscalar(w):
        return type(w)(0)
    return np.zeros_like(np.asarray(w))


def task_energy(final_spent: Iterable[float]) -> float:
    """Worst-case episode energy: max over per-episode final spent values."""
    values = [float(v) for v in final_spent]
    if not values:
        raise ValueError("task_energy needs at least one episode")
    if any(not math.isfinite(v) for v in values):
        raise ValueError("non-finite episode energy")
    return max(values)


def continuous_tank_oracle(position_trace, applied_torque, v0: float) -> float:
    """Integrate the continuous storage flow dV/dt = -w . q_dot along a trace.

    The torque is constant over the trace, so the flow integrates exactly to
    the sum of w . dq over the substep grid; this is the independent check
    that the sampled per-step withdrawal matches the continuous tank.  May
    return a negative value: the oracle carries the signed ledger.
    """
    trace = np.asarray(position_trace, dtype=np.float64)
    if trace.ndim == 1:
        trace = trace[:, None]
    if trace.shape[0] < 2:
        raise ValueError("position trace needs at least two samples")
    w = np.atleast_1d(np.asarray(applied_torque, dtype=np.float64))
    if w.shape[0] != trace.shape[1]:
        raise ValueError("torque dimension does not match trace")
    increments = np.diff(trace, axis=0)
    return float(v0 - np.sum(increments @ w))
