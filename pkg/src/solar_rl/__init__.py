"""Q-learning control of sensing rate on indoor solar-harvesting sensor nodes.

Modules: ``traces`` (light data), ``energy`` (storage and load), ``envsim``
(15-minute decision slots), ``qlearn`` (tabular agent), ``experiments``
(day-by-day, dynamic interval, shared and transfer methods) and ``cli``.
"""

from .energy import HardwareConfig, NodeEnergyState
from .envsim import ObservedState, env_step, observe, run_day
from .experiments import ExperimentReport, derive_seed
from .qlearn import ConvergenceCriterion, Hyperparameters, QTable, train_on_trace, evaluate_policy
from .traces import LightTrace, Placement, archetype, generate_synthetic, load_trace

__all__ = [
    "ConvergenceCriterion", "ExperimentReport", "HardwareConfig", "Hyperparameters", "LightTrace",
    "NodeEnergyState", "ObservedState", "Placement", "QTable", "archetype", "derive_seed",
    "env_step", "evaluate_policy", "generate_synthetic", "load_trace", "observe", "run_day",
    "train_on_trace",
]
__version__ = "0.1.0"
