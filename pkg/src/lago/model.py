"""Domain types shared by the simulator, learner, controller and metrics.

Node 0 is always the IoT device; fog nodes are numbered 1..N. Every physical
quantity is held in SI base units (bits, CPU cycles, seconds, joules).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

DEVICE = 0


class ConfigError(ValueError):
    """Raised when a value violates a documented invariant.

    ``problems`` lists one message per offending field so callers can report
    all of them at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _reciprocal_matches(value: float, bound: float) -> bool:
    expected = 1.0 / bound
    return abs(value - expected) <= math.ulp(expected)


@dataclass(frozen=True)
class Task:
    """One unit of work: ``id`` is the ``(slot, ordinal)`` pair."""

    id: tuple[int, int]
    size_bits: float
    work_cycles: float

    def __post_init__(self):
        problems = []
        if not self.size_bits > 0 or not math.isfinite(self.size_bits):
            problems.append(f"task {self.id}: size_bits must be positive, got {self.size_bits}")
        if not self.work_cycles > 0 or not math.isfinite(self.work_cycles):
            problems.append(f"task {self.id}: work_cycles must be positive, got {self.work_cycles}")
        if problems:
            raise ConfigError(problems)

    def check_bounds(self, constants: SystemConstants) -> None:
        problems = []
        if self.size_bits > constants.l_max:
            problems.append(f"task {self.id}: size_bits {self.size_bits} exceeds l_max {constants.l_max}")
        if self.work_cycles > constants.w_max:
            problems.append(f"task {self.id}: work_cycles {self.work_cycles} exceeds w_max {constants.w_max}")
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class SystemConstants:
    """System-wide bounds used by the confidence radius and the bound constants.

    ``rho_max`` and ``phi_max`` default to ``1/r_min`` and ``1/f_min``; if given
    explicitly they must agree with those reciprocals to within one ulp.
    """

    n_fog: int
    a_max: int
    l_max: float
    w_max: float
    r_min: float
    f_min: float
    eta_max: float
    kappa_max: float
    rho_max: float | None = None
    phi_max: float | None = None

    def __post_init__(self):
        problems = []
        for name, floor in (("n_fog", 0), ("a_max", 1)):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                problems.append(f"{name} must be an integer, got {value!r}")
            elif value < floor:
                problems.append(f"{name} must be at least {floor}")
        for name in ("l_max", "w_max", "r_min", "f_min", "eta_max", "kappa_max"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating)) or not value > 0 or not math.isfinite(value):
                problems.append(f"{name} must be positive, got {value!r}")
        if not problems:
            for name, bound_name in (("rho_max", "r_min"), ("phi_max", "f_min")):
                bound = getattr(self, bound_name)
                value = getattr(self, name)
                if value is None:
                    object.__setattr__(self, name, 1.0 / bound)
                elif not _reciprocal_matches(value, bound):
                    problems.append(
                        f"{name}={value!r} is inconsistent with {bound_name}={bound!r} "
                        f"(expected {1.0 / bound!r})"
                    )
        if problems:
            raise ConfigError(problems)

    @property
    def n_nodes(self) -> int:
        return self.n_fog + 1


@dataclass(frozen=True)
class SlotContext:
    """Everything the device observes at the start of slot ``t``.

    ``eta`` has an entry for every accessible fog node, ``kappa`` for every
    accessible node. The per-task and per-node numpy views are derived once at
    construction and shared by the hot paths.
    """

    t: int
    tasks: tuple[Task, ...]
    accessible: tuple[int, ...]
    eta: Mapping[int, float]
    kappa: Mapping[int, float]
    sizes: np.ndarray = field(init=False, repr=False, compare=False)
    works: np.ndarray = field(init=False, repr=False, compare=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    eta_arr: np.ndarray = field(init=False, repr=False, compare=False)
    kappa_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        problems = []
        acc = tuple(int(n) for n in self.accessible)
        if DEVICE not in acc:
            problems.append(f"slot {self.t}: accessible set must contain the device (node 0)")
        if len(set(acc)) != len(acc) or list(acc) != sorted(acc):
            problems.append(f"slot {self.t}: accessible set must be strictly increasing node ids")
        fog = {n for n in acc if n != DEVICE}
        if set(self.eta) != fog:
            problems.append(f"slot {self.t}: eta must be defined exactly for accessible fog nodes")
        if set(self.kappa) != set(acc):
            problems.append(f"slot {self.t}: kappa must be defined exactly for accessible nodes")
        if any(not v > 0 for v in self.eta.values()):
            problems.append(f"slot {self.t}: eta values must be positive")
        if any(not v > 0 for v in self.kappa.values()):
            problems.append(f"slot {self.t}: kappa values must be positive")
        if problems:
            raise ConfigError(problems)
        object.__setattr__(self, "accessible", acc)
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "sizes", np.array([x.size_bits for x in self.tasks], dtype=float))
        object.__setattr__(self, "works", np.array([x.work_cycles for x in self.tasks], dtype=float))
        object.__setattr__(self, "nodes", np.array(acc, dtype=np.int64))
        object.__setattr__(self, "eta_arr", np.array([self.eta.get(n, 0.0) for n in acc], dtype=float))
        object.__setattr__(self, "kappa_arr", np.array([self.kappa[n] for n in acc], dtype=float))

    def check_bounds(self, constants: SystemConstants) -> None:
        problems = []
        if len(self.tasks) > constants.a_max:
            problems.append(f"slot {self.t}: {len(self.tasks)} tasks exceed a_max {constants.a_max}")
        if self.accessible[-1] > constants.n_fog:
            problems.append(f"slot {self.t}: node {self.accessible[-1]} outside 0..{constants.n_fog}")
        if any(v > constants.eta_max for v in self.eta.values()):
            problems.append(f"slot {self.t}: eta exceeds eta_max {constants.eta_max}")
        if any(v > constants.kappa_max for v in self.kappa.values()):
            problems.append(f"slot {self.t}: kappa exceeds kappa_max {constants.kappa_max}")
        if problems:
            raise ConfigError(problems)
        for task in self.tasks:
            task.check_bounds(constants)


@dataclass(frozen=True)
class Decision:
    """Offloading decision for one slot, aligned with ``ctx.tasks``.

    ``explored`` marks tasks placed by an epsilon-greedy exploration coin.
    """

    nodes: np.ndarray
    explored: np.ndarray | None = None

    def assignments(self, ctx: SlotContext) -> dict[tuple[int, int], int]:
        return {task.id: int(n) for task, n in zip(ctx.tasks, self.nodes)}

    def validate(self, ctx: SlotContext) -> None:
        if len(self.nodes) != len(ctx.tasks):
            raise ConfigError(
                f"slot {ctx.t}: decision covers {len(self.nodes)} tasks, slot has {len(ctx.tasks)}"
            )
        bad = sorted({int(n) for n in self.nodes} - set(ctx.accessible))
        if bad:
            raise ConfigError(f"slot {ctx.t}: decision uses non-accessible node(s) {bad}")


@dataclass(frozen=True)
class Feedback:
    """Per-task observations returned at the end of a slot.

    ``rate`` is NaN for tasks processed on the device.
    """

    rate: np.ndarray
    freq: np.ndarray
    d_tr: np.ndarray
    d_pr: np.ndarray

    def __post_init__(self):
        if not (len(self.rate) == len(self.freq) == len(self.d_tr) == len(self.d_pr)):
            raise ConfigError("feedback arrays must have equal length")
        if np.any(self.d_tr < 0) or np.any(self.d_pr < 0):
            raise ConfigError("latencies must be nonnegative")
        if not (np.all(np.isfinite(self.d_tr)) and np.all(np.isfinite(self.d_pr))):
            raise ConfigError("latencies must be finite")

    @property
    def latency(self) -> np.ndarray:
        return self.d_tr + self.d_pr
