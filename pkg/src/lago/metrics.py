"""Regret, feasibility and backlog statistics, plus closed-form bound constants.

Regret is measured against an unconstrained clairvoyant baseline: every task
goes to the accessible node with the smallest true expected latency, ignoring
energy budgets. That baseline is never worse than the best budget-respecting
policy, so the regret reported here overstates the true regret.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .environment import TrueMeans
from .model import ConfigError, Decision, SlotContext, SystemConstants


def expected_latency_matrix(ctx: SlotContext, rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    acc = ctx.nodes
    lat = phi[acc] * ctx.works[:, None]
    return np.where(acc > 0, lat + rho[acc] * ctx.sizes[:, None], lat)


def oracle_slot(ctx: SlotContext, means: TrueMeans | tuple[np.ndarray, np.ndarray]) -> tuple[float, Decision]:
    """Minimal expected slot latency D*(t) and the per-task choices attaining it."""
    rho, phi = _mean_arrays(ctx, means)
    if not ctx.tasks:
        return 0.0, Decision(np.zeros(0, dtype=np.int64))
    lat = expected_latency_matrix(ctx, rho, phi)
    best = np.argmin(lat, axis=1)
    return float(lat[np.arange(len(best)), best].sum()), Decision(ctx.nodes[best])


def expected_latency(ctx: SlotContext, decision: Decision, means: TrueMeans | tuple[np.ndarray, np.ndarray]) -> float:
    """Expected slot latency of ``decision`` under the true means."""
    rho, phi = _mean_arrays(ctx, means)
    nodes = np.asarray(decision.nodes, dtype=np.int64)
    lat = phi[nodes] * ctx.works + np.where(nodes > 0, rho[nodes] * ctx.sizes, 0.0)
    return float(lat.sum())


def _mean_arrays(ctx, means):
    if isinstance(means, TrueMeans):
        n = max(max(means.phi) + 1, ctx.accessible[-1] + 1)
        return means.arrays(n)
    return means


@dataclass(frozen=True)
class RegretCurves:
    expected: np.ndarray
    realized: np.ndarray

    @property
    def final_expected(self) -> float:
        return float(self.expected[-1]) if len(self.expected) else 0.0

    @property
    def final_realized(self) -> float:
        return float(self.realized[-1]) if len(self.realized) else 0.0


def regret_curve(traces: Sequence, oracle: Sequence[float] | None = None) -> RegretCurves:
    """Running time-averaged regret R(t) for t = 1..T.

    ``traces`` carry ``expected_latency`` and ``latency`` per slot. The oracle
    stream defaults to each trace's ``oracle_latency``.
    """
    expected = np.array([tr.expected_latency for tr in traces], dtype=float)
    realized = np.array([tr.latency for tr in traces], dtype=float)
    if oracle is None:
        oracle = [tr.oracle_latency for tr in traces]
    oracle = np.asarray(oracle, dtype=float)
    if len(oracle) != len(expected):
        raise ConfigError(f"oracle stream has {len(oracle)} slots, traces have {len(expected)}")
    steps = np.arange(1, len(expected) + 1)
    return RegretCurves(
        expected=np.cumsum(expected - oracle) / steps,
        realized=np.cumsum(realized - oracle) / steps,
    )


@dataclass(frozen=True)
class FeasibilityReport:
    average: np.ndarray
    ratio: np.ndarray
    violated: np.ndarray
    running: np.ndarray

    @property
    def any_violation(self) -> bool:
        return bool(self.violated.any())


def feasibility_report(traces: Sequence, budgets, tolerance: float = 0.0) -> FeasibilityReport:
    """Per-node time-averaged energy against its budget.

    A node is flagged when its average exceeds ``budget * (1 + tolerance)``.
    """
    budgets = np.asarray(budgets, dtype=float)
    if len(traces) == 0:
        zeros = np.zeros(len(budgets))
        return FeasibilityReport(zeros, zeros, np.zeros(len(budgets), dtype=bool), np.zeros((0, len(budgets))))
    energies = np.array([tr.energy for tr in traces], dtype=float)
    cumulative = np.cumsum(energies, axis=0)
    running = cumulative / np.arange(1, len(energies) + 1)[:, None]
    average = running[-1]
    ratio = average / budgets
    return FeasibilityReport(average, ratio, ratio > 1.0 + tolerance, running)


@dataclass(frozen=True)
class QueueStats:
    series: np.ndarray

    @property
    def final(self) -> float:
        return float(self.series[-1]) if len(self.series) else 0.0


def queue_stats(traces: Sequence) -> QueueStats:
    """Running average of total backlog, (1/t) * sum over slots tau < t of sum_n Q_n(tau).

    Uses the backlog held at the start of each slot.
    """
    totals = np.array([tr.backlog_start_total for tr in traces], dtype=float)
    return QueueStats(np.cumsum(totals) / np.arange(1, len(totals) + 1))


@dataclass(frozen=True)
class BoundConstants:
    B: float
    theta1: float
    theta2: float
    V: float
    T: int
    n_fog: int
    a_max: int

    @property
    def regret_bound(self) -> float:
        return regret_bound(self, self.V, self.T)

    def backlog_bound(self, epsilon: float) -> float:
        """Time-averaged total backlog bound for a feasibility slack ``epsilon``."""
        if not epsilon > 0:
            raise ConfigError("epsilon must be positive")
        return (self.B + self.V * (self.theta1 + self.theta2)) / epsilon

    def as_dict(self) -> dict:
        return {
            "B": self.B,
            "theta1": self.theta1,
            "theta2": self.theta2,
            "V": self.V,
            "T": self.T,
            "regret_bound": self.regret_bound,
        }


def bound_constants(constants: SystemConstants, budgets, V: float, T: int) -> BoundConstants:
    c = constants
    budgets = np.asarray(budgets, dtype=float)
    kw2 = (c.kappa_max * c.w_max) ** 2
    el2 = (c.eta_max * c.l_max) ** 2
    B = (
        float(np.sum(budgets**2)) / 2.0
        + c.a_max**2 * max(kw2, el2) / 2.0
        + c.n_fog**2 * c.a_max**2 * kw2 / 2.0
    )
    theta1 = 2.0 * c.w_max * c.phi_max * c.a_max
    theta2 = 2.0 * c.l_max * c.rho_max * c.a_max
    return BoundConstants(B, theta1, theta2, float(V), int(T), c.n_fog, c.a_max)


def regret_bound(bc: BoundConstants, V: float, T: int) -> float:
    """Horizon-T regret bound: B/V plus the two learning terms."""
    log_t = math.log(T) if T > 1 else 0.0
    term1 = 3.0 / (2.0 * T) + math.sqrt(6.0 * bc.a_max * (bc.n_fog + 1) * log_t / T)
    term2 = 3.0 / (2.0 * T) + math.sqrt(6.0 * bc.a_max * bc.n_fog * log_t / T)
    return bc.B / V + term1 * bc.theta1 + term2 * bc.theta2


class RunningSummary:
    """Streaming totals over slot records; feeds both the runner and the verifier.

    Accepts any object with ``n_tasks``, ``latency``, ``expected_latency``,
    ``oracle_latency``, ``energy`` and ``backlog_start_total``. Sums are taken
    in slot order so two passes over the same records agree bit for bit.
    """

    def __init__(self, n_nodes: int):
        self.slots = 0
        self.tasks = 0
        self.latency = 0.0
        self.regret_expected = 0.0
        self.regret_realized = 0.0
        self.backlog = 0.0
        self.energy = np.zeros(n_nodes)

    def add(self, rec) -> None:
        self.slots += 1
        self.tasks += int(rec.n_tasks)
        self.latency += rec.latency
        self.regret_expected += rec.expected_latency - rec.oracle_latency
        self.regret_realized += rec.latency - rec.oracle_latency
        self.backlog += rec.backlog_start_total
        self.energy = self.energy + np.asarray(rec.energy, dtype=float)

    def extend(self, records: Iterable) -> RunningSummary:
        for rec in records:
            self.add(rec)
        return self

    def result(self) -> dict:
        T = max(self.slots, 1)
        avg_energy = self.energy / T
        return {
            "slots": self.slots,
            "tasks": self.tasks,
            "average_latency": self.latency / self.tasks if self.tasks else 0.0,
            "average_slot_latency": self.latency / T,
            "average_energy": avg_energy.tolist(),
            "total_energy": float(avg_energy.sum()),
            "regret_expected": self.regret_expected / T,
            "regret_realized": self.regret_realized / T,
            "average_backlog": self.backlog / T,
        }
