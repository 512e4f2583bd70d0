"""Slot loop: estimate, select, realize, account energy, update queues, learn.

Estimates for slot ``t`` are frozen before any task of the slot is placed and
never include slot-``t`` feedback. Queues move once per slot, after all tasks
have been assigned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import metrics
from .controller import EnergyLedger, QueueState, select, slot_energy, update_queues
from .environment import Environment
from .learner import LearnerState, Strategy
from .model import SlotContext
from .rng import stream


class SimulationError(RuntimeError):
    def __init__(self, t: int, cause: Exception):
        self.t = t
        self.cause = cause
        super().__init__(f"slot {t}: {cause}")


@dataclass
class SlotTrace:
    t: int
    nodes: np.ndarray
    sizes: np.ndarray
    works: np.ndarray
    eta: np.ndarray
    kappa: np.ndarray
    rate: np.ndarray
    freq: np.ndarray
    d_tr: np.ndarray
    d_pr: np.ndarray
    energy: np.ndarray
    backlog: np.ndarray
    backlog_start_total: float
    latency: float
    expected_latency: float
    oracle_latency: float
    estimate_hash: str
    explored: int = 0
    checkpoint: bool = True

    @property
    def n_tasks(self) -> int:
        return len(self.nodes)

    @property
    def task_latency(self) -> np.ndarray:
        return self.d_tr + self.d_pr

    @property
    def regret_increment(self) -> float:
        return self.expected_latency - self.oracle_latency


@dataclass
class Simulation:
    """One run's mutable state; advance it with :meth:`step` or :meth:`run`."""

    env: Environment
    learner: LearnerState
    queues: QueueState
    V: float
    explore_rng: np.random.Generator | None = None
    ledger: EnergyLedger | None = None
    t: int = 0
    checkpoint_every: int = 1
    _means: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if not self.V >= 0:
            raise ValueError("V must be nonnegative")
        n = self.env.n_nodes
        if self.ledger is None:
            self.ledger = EnergyLedger.empty(n)
        if self.explore_rng is None:
            self.explore_rng = stream(self.env.seed, "exploration")
        self._means = self.env.true_means().arrays(n)

    def step(self) -> SlotTrace:
        t = self.t
        try:
            ctx = self.env.next_slot(t)
            estimates = self.learner.snapshot_estimates(t, self.env.constants)
            decision = select(
                ctx, self.queues, estimates, self.V,
                strategy=self.learner.strategy, rng=self.explore_rng, epsilon=self.learner.epsilon,
            )
            feedback = self.env.realize(ctx, decision)
            energies = slot_energy(ctx, decision, self.env.n_nodes)
            start_total = float(self.queues.backlog.sum())
            self.queues = update_queues(self.queues, energies)
            self.ledger.add(energies)
            self.learner.record(ctx, decision, feedback)
            oracle, _ = metrics.oracle_slot(ctx, self._means)
            expected = metrics.expected_latency(ctx, decision, self._means)
        except Exception as exc:
            raise SimulationError(t, exc) from exc
        self.t += 1
        return self._trace(ctx, decision, feedback, energies, start_total, oracle, expected, estimates.digest())

    def _trace(self, ctx: SlotContext, decision, feedback, energies, start_total, oracle, expected, digest):
        nodes = decision.nodes
        return SlotTrace(
            t=ctx.t,
            nodes=nodes,
            sizes=ctx.sizes,
            works=ctx.works,
            eta=np.array([ctx.eta[int(n)] if n > 0 else np.nan for n in nodes]),
            kappa=np.array([ctx.kappa[int(n)] for n in nodes]),
            rate=feedback.rate,
            freq=feedback.freq,
            d_tr=feedback.d_tr,
            d_pr=feedback.d_pr,
            energy=energies,
            backlog=self.queues.backlog,
            backlog_start_total=start_total,
            latency=float(feedback.latency.sum()),
            expected_latency=expected,
            oracle_latency=oracle,
            estimate_hash=digest,
            explored=0 if decision.explored is None else int(decision.explored.sum()),
            checkpoint=self.checkpoint_every > 0 and ctx.t % self.checkpoint_every == 0,
        )

    def run(self, horizon: int) -> Iterator[SlotTrace]:
        for _ in range(int(horizon)):
            yield self.step()

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "V": self.V,
            "environment": self.env.state_dict(),
            "learner": self.learner.state_dict(),
            "backlog": self.queues.backlog.tolist(),
            "budget": self.queues.budget.tolist(),
            "ledger": {
                "per_slot": self.ledger.per_slot.tolist(),
                "cumulative": self.ledger.cumulative.tolist(),
                "slots_elapsed": self.ledger.slots_elapsed,
            },
            "exploration": self.explore_rng.bit_generator.state,
        }

    @classmethod
    def from_state_dict(cls, env: Environment, state: dict, checkpoint_every: int = 1) -> Simulation:
        """Resume a run; ``env`` must be freshly built from the same config."""
        env.load_state_dict(state["environment"])
        explore = stream(env.seed, "exploration")
        explore.bit_generator.state = state["exploration"]
        led = state["ledger"]
        return cls(
            env=env,
            learner=LearnerState.from_state_dict(state["learner"]),
            queues=QueueState(np.array(state["backlog"]), np.array(state["budget"])),
            V=state["V"],
            explore_rng=explore,
            ledger=EnergyLedger(np.array(led["per_slot"]), np.array(led["cumulative"]), led["slots_elapsed"]),
            t=state["t"],
            checkpoint_every=checkpoint_every,
        )


@dataclass
class RunResult:
    traces: list[SlotTrace]
    simulation: Simulation

    @property
    def learner(self) -> LearnerState:
        return self.simulation.learner

    @property
    def queues(self) -> QueueState:
        return self.simulation.queues

    @property
    def ledger(self) -> EnergyLedger:
        return self.simulation.ledger


def run(
    env: Environment,
    learner: LearnerState,
    queues: QueueState,
    V: float,
    horizon: int,
    checkpoint_every: int = 1,
    explore_rng: np.random.Generator | None = None,
) -> RunResult:
    """Run ``horizon`` slots and collect every trace."""
    sim = Simulation(env, learner, queues, V, explore_rng=explore_rng, checkpoint_every=checkpoint_every)
    return RunResult(list(sim.run(horizon)), sim)


def new_simulation(env: Environment, strategy=Strategy.UCB1, V: float = 100.0, epsilon: float = 0.1,
                   checkpoint_every: int = 1) -> Simulation:
    learner = LearnerState(env.n_nodes, strategy=strategy, epsilon=epsilon)
    return Simulation(env, learner, QueueState.initial(env.budgets), V, checkpoint_every=checkpoint_every)
