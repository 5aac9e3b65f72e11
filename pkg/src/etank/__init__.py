"""Energy-tank passivization of torque-controlled RL policies.

The package wraps a control policy with a virtual energy tank: every
control step withdraws the energy the actuator actually injected into the
plant, and a gate cuts the torque once the budget is gone.  It ships a
pendulum swing-up plant, three tank wrappers (inference gating, training
with termination on depletion, training with the budget in the state), a
from-scratch numpy soft actor-critic, and a CLI to train, estimate task
energy, evaluate, and compare runs.
"""

from .dynamics import PendulumParams, PendulumState, mechanical_energy, simulate_control_interval
from .env import PendulumEnv, StepResult
from .passivize import (
    ExtendedStateWrapper,
    ExtendedTerminationWrapper,
    ForceField,
    ForceFieldWrapper,
    InferenceTankWrapper,
    PassiveStepResult,
)
from .sac import SacAgent, SacConfig, TrainingDiverged, load_checkpoint, save_checkpoint, train
from .tank import (
    DEFAULT_GATE_EPSILON,
    TankMode,
    TankState,
    continuous_tank_oracle,
    delta_energy,
    gate,
    task_energy,
    update,
)

__version__ = "0.1.0"

__all__ = [
    "PendulumParams",
    "PendulumState",
    "mechanical_energy",
    "simulate_control_interval",
    "PendulumEnv",
    "StepResult",
    "InferenceTankWrapper",
    "ExtendedTerminationWrapper",
    "ExtendedStateWrapper",
    "ForceField",
    "ForceFieldWrapper",
    "PassiveStepResult",
    "SacAgent",
    "SacConfig",
    "TrainingDiverged",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "TankMode",
    "TankState",
    "DEFAULT_GATE_EPSILON",
    "delta_energy",
    "update",
    "gate",
    "task_energy",
    "continuous_tank_oracle",
    "__version__",
]
