"""Learning-aided green offloading: bandit-estimated latencies steered by virtual energy queues."""

from .config import RunConfig, default_config, validate_config
from .controller import EnergyLedger, QueueState, price, select, slot_energy, update_queues
from .engine import RunResult, Simulation, SimulationError, SlotTrace, new_simulation, run
from .environment import (
    ArrivalSpec,
    Environment,
    MetaDistributions,
    NodeProfile,
    TaskSpec,
    TrueMeans,
    build_environment,
    draw_profiles,
    reciprocal_uniform_mean,
)
from .learner import Estimates, LearnerState, Strategy
from .metrics import (
    BoundConstants,
    RunningSummary,
    bound_constants,
    feasibility_report,
    oracle_slot,
    queue_stats,
    regret_curve,
)
from .model import ConfigError, Decision, Feedback, SlotContext, SystemConstants, Task

__version__ = "0.1.0"
