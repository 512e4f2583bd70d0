"""Virtual energy queues and price-minimizing node selection.

Each node carries a virtual queue whose backlog is the energy "debt" accrued
above its per-slot budget. A task is sent to the accessible node with the
lowest price: queue-weighted energy plus ``V`` times estimated latency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learner import Estimates, Strategy
from .model import DEVICE, ConfigError, Decision, SlotContext, Task


@dataclass
class QueueState:
    backlog: np.ndarray
    budget: np.ndarray

    @classmethod
    def initial(cls, budget) -> QueueState:
        budget = np.asarray(budget, dtype=float)
        if np.any(budget <= 0):
            raise ConfigError("budgets must be positive")
        return cls(backlog=np.zeros(len(budget)), budget=budget)


@dataclass
class EnergyLedger:
    per_slot: np.ndarray
    cumulative: np.ndarray
    slots_elapsed: int = 0

    @classmethod
    def empty(cls, n_nodes: int) -> EnergyLedger:
        return cls(np.zeros(n_nodes), np.zeros(n_nodes), 0)

    def add(self, energies: np.ndarray) -> None:
        self.per_slot = energies
        self.cumulative = self.cumulative + energies
        self.slots_elapsed += 1


def price(task: Task, node: int, queues: QueueState, ctx: SlotContext, rho_hat, phi_hat, V: float) -> float:
    """Price of placing ``task`` on ``node``; ``rho_hat``/``phi_hat`` are indexable by node id."""
    if node not in ctx.kappa:
        raise ConfigError(f"slot {ctx.t}: node {node} is not accessible")
    w, size = task.work_cycles, task.size_bits
    energy = queues.backlog[node] * ctx.kappa[node] * w
    latency = phi_hat[node] * w
    if node != DEVICE:
        energy = energy + queues.backlog[DEVICE] * ctx.eta[node] * size
        latency = latency + rho_hat[node] * size
    return energy + V * latency


def price_matrix(ctx: SlotContext, queues: QueueState, rho_hat, phi_hat, V: float) -> np.ndarray:
    """Prices for every (task, accessible node) pair; columns follow ``ctx.accessible``.

    Evaluates the same expression as :func:`price`, term for term.
    """
    acc = ctx.nodes
    w = ctx.works[:, None]
    size = ctx.sizes[:, None]
    fog = acc > 0
    energy = (queues.backlog[acc] * ctx.kappa_arr) * w
    energy = np.where(fog, energy + (queues.backlog[DEVICE] * ctx.eta_arr) * size, energy)
    latency = np.asarray(phi_hat)[acc] * w
    latency = np.where(fog, latency + np.asarray(rho_hat)[acc] * size, latency)
    return energy + V * latency


def select(
    ctx: SlotContext,
    queues: QueueState,
    estimates: Estimates,
    V: float,
    strategy: Strategy = Strategy.UCB1,
    rng: np.random.Generator | None = None,
    epsilon: float = 0.1,
) -> Decision:
    """Assign each task of the slot to its minimum-price accessible node.

    Queues are held fixed for the whole slot. Ties go to the lowest node id.
    Under epsilon-greedy each task independently flips a coin; on heads it
    goes to a uniformly drawn accessible node. ``estimates`` must then hold
    the empirical means.
    """
    k = len(ctx.tasks)
    if k == 0:
        return Decision(np.zeros(0, dtype=np.int64))
    prices = price_matrix(ctx, queues, estimates.rho_hat, estimates.phi_hat, V)
    nodes = ctx.nodes[np.argmin(prices, axis=1)]
    explored = None
    if strategy is Strategy.EPS_GREEDY:
        if rng is None:
            raise ConfigError("epsilon-greedy selection needs an exploration generator")
        coins = rng.random(k)
        picks = rng.integers(len(ctx.nodes), size=k)
        explored = coins < epsilon
        nodes = np.where(explored, ctx.nodes[picks], nodes)
    return Decision(nodes, explored)


def slot_energy(ctx: SlotContext, decision: Decision, n_nodes: int) -> np.ndarray:
    """Energy drawn on every node during the slot, accumulated in task order."""
    energies = [0.0] * n_nodes
    for task, node in zip(ctx.tasks, decision.nodes):
        node = int(node)
        if node == DEVICE:
            energies[DEVICE] += ctx.kappa[DEVICE] * task.work_cycles
        else:
            energies[DEVICE] += ctx.eta[node] * task.size_bits
            energies[node] += ctx.kappa[node] * task.work_cycles
    return np.array(energies)


def update_queues(queues: QueueState, energies: np.ndarray) -> QueueState:
    """Drain every queue by its budget (floored at 0), then add this slot's energy."""
    energies = np.asarray(energies, dtype=float)
    if np.any(energies < 0):
        raise ConfigError("energies must be nonnegative")
    backlog = np.maximum(queues.backlog - queues.budget, 0.0) + energies
    return QueueState(backlog=backlog, budget=queues.budget)
