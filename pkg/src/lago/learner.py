"""Per-node bandit statistics and optimistic latency estimates.

Latency is minimized, so optimism means subtracting the confidence radius
from the empirical mean and clamping at zero. A node that has never been
played keeps estimate 0, the most optimistic value available.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ConfigError, Decision, Feedback, SlotContext, SystemConstants


class Strategy(str, enum.Enum):
    UCB1 = "ucb1"
    UCBT = "ucbt"
    NCONFR = "nconfr"
    EPS_GREEDY = "eps"

    @classmethod
    def parse(cls, value: str | Strategy) -> Strategy:
        if isinstance(value, cls):
            return value
        aliases = {"eps_greedy": cls.EPS_GREEDY, "epsilon": cls.EPS_GREEDY, "ucb-tuned": cls.UCBT}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown strategy {value!r}; expected one of ucb1, ucbt, nconfr, eps") from None


def log_slot(t: int) -> float:
    """Natural log of the slot index, clamped to 0 for t <= 1."""
    return math.log(t) if t > 1 else 0.0


def ucb1_radius(scale: float, t: int, counts: np.ndarray) -> np.ndarray:
    """``scale * sqrt(3 ln t / (2 h))`` for each count ``h > 0`` (0 elsewhere)."""
    counts = np.asarray(counts, dtype=float)
    out = np.zeros_like(counts)
    played = counts > 0
    out[played] = scale * np.sqrt(3.0 * log_slot(t) / (2.0 * counts[played]))
    return out


def tuned_radius(scale: float, t: int, counts: np.ndarray, mean: np.ndarray, sq_sum: np.ndarray) -> np.ndarray:
    """UCB-tuned radius on observations normalized by ``scale``.

    ``scale * sqrt(ln t / h * min(1/4, V))`` where ``V`` is the sample variance
    of the normalized observations plus ``sqrt(2 ln t / h)``.
    """
    counts = np.asarray(counts, dtype=float)
    out = np.zeros_like(counts)
    played = counts > 0
    h = counts[played]
    lt = log_slot(t)
    m = mean[played] / scale
    var = np.maximum(sq_sum[played] / (scale * scale) / h - m * m, 0.0)
    v = var + np.sqrt(2.0 * lt / h)
    out[played] = scale * np.sqrt(lt / h * np.minimum(0.25, v))
    return out


@dataclass(frozen=True)
class Estimates:
    rho_hat: np.ndarray
    phi_hat: np.ndarray

    def digest(self) -> str:
        return hashlib.blake2b(self.rho_hat.tobytes() + self.phi_hat.tobytes(), digest_size=8).hexdigest()


@dataclass
class LearnerState:
    """Selection counts and empirical means of 1/R (fog only) and 1/F.

    Index 0 of ``mean_rho`` belongs to the device and stays 0.
    """

    n_nodes: int
    strategy: Strategy = Strategy.UCB1
    epsilon: float = 0.1
    counts: np.ndarray = field(default=None)
    mean_rho: np.ndarray = field(default=None)
    mean_phi: np.ndarray = field(default=None)
    sq_rho: np.ndarray = field(default=None)
    sq_phi: np.ndarray = field(default=None)

    def __post_init__(self):
        self.strategy = Strategy.parse(self.strategy)
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        n = self.n_nodes
        if self.counts is None:
            self.counts = np.zeros(n, dtype=np.int64)
        if self.mean_rho is None:
            self.mean_rho = np.zeros(n)
        if self.mean_phi is None:
            self.mean_phi = np.zeros(n)
        if self.sq_rho is None:
            self.sq_rho = np.zeros(n)
        if self.sq_phi is None:
            self.sq_phi = np.zeros(n)

    def snapshot_estimates(self, t: int, constants: SystemConstants) -> Estimates:
        """Estimates used for every task of slot ``t``."""
        if self.strategy in (Strategy.NCONFR, Strategy.EPS_GREEDY):
            return Estimates(self.mean_rho.copy(), self.mean_phi.copy())
        if self.strategy is Strategy.UCB1:
            r_rho = ucb1_radius(constants.rho_max, t, self.counts)
            r_phi = ucb1_radius(constants.phi_max, t, self.counts)
        else:
            r_rho = tuned_radius(constants.rho_max, t, self.counts, self.mean_rho, self.sq_rho)
            r_phi = tuned_radius(constants.phi_max, t, self.counts, self.mean_phi, self.sq_phi)
        rho_hat = np.maximum(self.mean_rho - r_rho, 0.0)
        rho_hat[0] = 0.0
        phi_hat = np.maximum(self.mean_phi - r_phi, 0.0)
        return Estimates(rho_hat, phi_hat)

    def record(self, ctx: SlotContext, decision: Decision, feedback: Feedback) -> None:
        """Fold one slot of feedback into counts and running means."""
        nodes = np.asarray(decision.nodes, dtype=np.int64)
        if len(nodes) != len(feedback.d_pr) or len(nodes) != len(ctx.tasks):
            raise ConfigError(f"slot {ctx.t}: decision and feedback cover different task sets")
        if len(nodes) == 0:
            return
        n = self.n_nodes
        # 1/F = d_pr / W and 1/R = d_tr / L, recovered from observed latencies
        inv_f = feedback.d_pr / ctx.works
        offloaded = nodes > 0
        inv_r = np.zeros(len(nodes))
        if offloaded.any():
            inv_r[offloaded] = feedback.d_tr[offloaded] / ctx.sizes[offloaded]

        added = np.bincount(nodes, minlength=n)
        touched = np.flatnonzero(added)
        old = self.counts[touched].astype(float)
        new_counts = self.counts[touched] + added[touched]
        new = new_counts.astype(float)
        sum_phi = np.bincount(nodes, weights=inv_f, minlength=n)[touched]
        sum_rho = np.bincount(nodes, weights=inv_r, minlength=n)[touched]
        self.mean_phi[touched] = self.mean_phi[touched] * old / new + sum_phi / new
        fog = touched > 0
        self.mean_rho[touched[fog]] = self.mean_rho[touched[fog]] * old[fog] / new[fog] + sum_rho[fog] / new[fog]
        self.counts[touched] = new_counts
        if self.strategy is Strategy.UCBT:
            self.sq_phi += np.bincount(nodes, weights=inv_f * inv_f, minlength=n)
            self.sq_rho += np.bincount(nodes, weights=inv_r * inv_r, minlength=n)

    def state_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "epsilon": self.epsilon,
            "counts": self.counts.tolist(),
            "mean_rho": self.mean_rho.tolist(),
            "mean_phi": self.mean_phi.tolist(),
            "sq_rho": self.sq_rho.tolist(),
            "sq_phi": self.sq_phi.tolist(),
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> LearnerState:
        return cls(
            n_nodes=len(state["counts"]),
            strategy=Strategy.parse(state["strategy"]),
            epsilon=state["epsilon"],
            counts=np.array(state["counts"], dtype=np.int64),
            mean_rho=np.array(state["mean_rho"], dtype=float),
            mean_phi=np.array(state["mean_phi"], dtype=float),
            sq_rho=np.array(state["sq_rho"], dtype=float),
            sq_phi=np.array(state["sq_phi"], dtype=float),
        )
