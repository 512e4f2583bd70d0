"""Stochastic fog-assisted IoT world: arrivals, accessibility, channel and CPU draws.

The environment is the only holder of the true per-node latency means; the
learner and controller never see them. All randomness flows through the named
streams in :mod:`lago.rng`, so a trace is a pure function of (config, seed).

Draw order inside a slot is fixed: task count and sizes (``tasks`` stream),
accessible subset (``subsets``), energy coefficients (``coefficients``, kappa
for every accessible node in id order, then eta for accessible fog nodes in
id order). On realization, rates are drawn for offloaded tasks in task order
(``rates``) and frequencies for all tasks in task order (``frequencies``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import DEVICE, ConfigError, Decision, Feedback, SlotContext, SystemConstants, Task
from .rng import stream


def reciprocal_uniform_mean(low: float, high: float) -> float:
    """E[1/X] for X ~ Unif(low, high); ``1/low`` when the support is a point."""
    if low == high:
        return 1.0 / low
    return math.log(high / low) / (high - low)


@dataclass(frozen=True)
class NodeProfile:
    node: int
    freq_low: float
    freq_high: float
    kappa_low: float
    kappa_high: float
    budget: float
    rate_low: float | None = None
    rate_high: float | None = None
    eta_low: float | None = None
    eta_high: float | None = None

    def __post_init__(self):
        problems = []
        pairs = [("freq", self.freq_low, self.freq_high), ("kappa", self.kappa_low, self.kappa_high)]
        if self.node == DEVICE:
            if self.rate_low is not None or self.eta_low is not None:
                problems.append("node 0: the device has no rate or eta support")
        else:
            pairs += [("rate", self.rate_low, self.rate_high), ("eta", self.eta_low, self.eta_high)]
        for name, low, high in pairs:
            if low is None or high is None:
                problems.append(f"node {self.node}: {name} support missing")
            elif not (0 < low < high) or not math.isfinite(high):
                problems.append(f"node {self.node}: {name} support must satisfy 0 < low < high, got ({low}, {high})")
        if not self.budget > 0:
            problems.append(f"node {self.node}: budget must be positive")
        if problems:
            raise ConfigError(problems)

    def check_bounds(self, constants: SystemConstants) -> None:
        problems = []
        if self.freq_low < constants.f_min:
            problems.append(f"node {self.node}: freq_low {self.freq_low} below f_min {constants.f_min}")
        if self.kappa_high > constants.kappa_max:
            problems.append(f"node {self.node}: kappa_high {self.kappa_high} above kappa_max {constants.kappa_max}")
        if self.node != DEVICE:
            if self.rate_low < constants.r_min:
                problems.append(f"node {self.node}: rate_low {self.rate_low} below r_min {constants.r_min}")
            if self.eta_high > constants.eta_max:
                problems.append(f"node {self.node}: eta_high {self.eta_high} above eta_max {constants.eta_max}")
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class TrueMeans:
    """Closed-form E[1/R] per fog node and E[1/F] per node."""

    rho: dict[int, float]
    phi: dict[int, float]

    def arrays(self, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
        rho = np.zeros(n_nodes)
        phi = np.zeros(n_nodes)
        for n, v in self.rho.items():
            rho[n] = v
        for n, v in self.phi.items():
            phi[n] = v
        return rho, phi


@dataclass(frozen=True)
class MetaDistributions:
    """Two-level sampling ranges for node heterogeneity.

    Each ``*_low``/``*_high`` pair gives the Unif range from which a fog node's
    own support endpoint is drawn once at build time. Device and shared
    coefficient supports are used directly.
    """

    rate_low: tuple[float, float] = (5e6, 1.5e7)
    rate_high: tuple[float, float] = (5e7, 1.5e8)
    freq_low: tuple[float, float] = (5e9, 1.5e10)
    freq_high: tuple[float, float] = (1.5e10, 2.5e10)
    device_freq: tuple[float, float] = (1e9, 1e10)
    device_kappa: tuple[float, float] = (1e-10, 5e-10)
    fog_kappa: tuple[float, float] = (5e-9, 1.5e-8)
    fog_eta: tuple[float, float] = (1e-7, 1e-6)
    budget: float = 0.5


def draw_profiles(meta: MetaDistributions, n_fog: int, seed: int) -> list[NodeProfile]:
    rng = stream(seed, "profiles")
    profiles = [
        NodeProfile(DEVICE, *meta.device_freq, *meta.device_kappa, budget=meta.budget),
    ]
    for n in range(1, n_fog + 1):
        rate_low = rng.uniform(*meta.rate_low)
        rate_high = rng.uniform(*meta.rate_high)
        freq_low = rng.uniform(*meta.freq_low)
        freq_high = rng.uniform(*meta.freq_high)
        profiles.append(
            NodeProfile(
                n,
                freq_low=float(freq_low),
                freq_high=float(freq_high),
                kappa_low=meta.fog_kappa[0],
                kappa_high=meta.fog_kappa[1],
                budget=meta.budget,
                rate_low=float(rate_low),
                rate_high=float(rate_high),
                eta_low=meta.fog_eta[0],
                eta_high=meta.fog_eta[1],
            )
        )
    return profiles


@dataclass(frozen=True)
class ArrivalSpec:
    """``fixed``: exactly ``count`` tasks per slot. ``poisson``: Poisson(``rate``)
    tasks truncated at ``cap``."""

    mode: str = "fixed"
    count: int = 10
    rate: float = 10.0
    cap: int = 10

    def __post_init__(self):
        if self.mode not in ("fixed", "poisson"):
            raise ConfigError(f"arrivals.mode must be 'fixed' or 'poisson', got {self.mode!r}")
        if self.mode == "fixed" and self.count < 0:
            raise ConfigError("arrivals.count must be nonnegative")
        if self.mode == "poisson" and (self.rate < 0 or self.cap < 0):
            raise ConfigError("arrivals.rate and arrivals.cap must be nonnegative")

    @property
    def max_count(self) -> int:
        return self.count if self.mode == "fixed" else self.cap


@dataclass(frozen=True)
class TaskSpec:
    """Task size distribution (bits) and computation intensity (cycles/bit)."""

    kind: str = "loguniform"
    low: float = 1e4
    high: float = 4e5
    intensity: float = 1000.0

    def __post_init__(self):
        problems = []
        if self.kind not in ("loguniform", "uniform", "fixed"):
            problems.append(f"tasks.kind must be loguniform, uniform or fixed, got {self.kind!r}")
        if not self.low > 0:
            problems.append("tasks.low must be positive")
        if self.kind != "fixed" and not self.high > self.low:
            problems.append("tasks.high must exceed tasks.low")
        if not self.intensity > 0:
            problems.append("tasks.intensity must be positive")
        if problems:
            raise ConfigError(problems)

    @property
    def max_size(self) -> float:
        return self.low if self.kind == "fixed" else self.high

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        if self.kind == "loguniform":
            # clip guards the exp/log round trip at the upper edge
            return np.minimum(np.exp(rng.uniform(math.log(self.low), math.log(self.high), k)), self.high)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, k)
        return np.full(k, float(self.low))


@dataclass
class Environment:
    profiles: list[NodeProfile]
    constants: SystemConstants
    arrivals: ArrivalSpec
    tasks: TaskSpec
    n_a: int
    seed: int
    coefficient_mode: str = "per_slot"
    slots_generated: int = 0
    _rngs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n_fog = self.constants.n_fog
        if [p.node for p in self.profiles] != list(range(n_fog + 1)):
            raise ConfigError(f"profiles must cover nodes 0..{n_fog} in order")
        if not (1 if n_fog else 0) <= self.n_a <= n_fog:
            raise ConfigError(f"n_a must lie in {min(1, n_fog)}..{n_fog}, got {self.n_a}")
        if self.coefficient_mode not in ("per_slot", "per_node"):
            raise ConfigError(f"coefficient_mode must be per_slot or per_node, got {self.coefficient_mode!r}")
        if self.arrivals.max_count > self.constants.a_max:
            raise ConfigError(f"arrival count {self.arrivals.max_count} exceeds a_max {self.constants.a_max}")
        if self.tasks.max_size > self.constants.l_max:
            raise ConfigError(f"task size bound {self.tasks.max_size} exceeds l_max {self.constants.l_max}")
        if self.tasks.max_size * self.tasks.intensity > self.constants.w_max:
            raise ConfigError(f"task work bound exceeds w_max {self.constants.w_max}")
        for p in self.profiles:
            p.check_bounds(self.constants)

        nan = float("nan")
        self.rate_low = np.array([nan if p.rate_low is None else p.rate_low for p in self.profiles])
        self.rate_high = np.array([nan if p.rate_high is None else p.rate_high for p in self.profiles])
        self.freq_low = np.array([p.freq_low for p in self.profiles])
        self.freq_high = np.array([p.freq_high for p in self.profiles])
        self.kappa_low = np.array([p.kappa_low for p in self.profiles])
        self.kappa_high = np.array([p.kappa_high for p in self.profiles])
        self.eta_low = np.array([nan if p.eta_low is None else p.eta_low for p in self.profiles])
        self.eta_high = np.array([nan if p.eta_high is None else p.eta_high for p in self.profiles])
        self.budgets = np.array([p.budget for p in self.profiles])
        if not self._rngs:
            self._rngs = {
                name: stream(self.seed, name)
                for name in ("subsets", "tasks", "rates", "frequencies", "coefficients")
            }
        if self.coefficient_mode == "per_node":
            rng = stream(self.seed, "coefficients")
            self._fixed_kappa = rng.uniform(self.kappa_low, self.kappa_high)
            self._fixed_eta = np.zeros(self.n_nodes)
            self._fixed_eta[1:] = rng.uniform(self.eta_low[1:], self.eta_high[1:])

    @property
    def n_nodes(self) -> int:
        return self.constants.n_fog + 1

    def next_slot(self, t: int) -> SlotContext:
        if t != self.slots_generated:
            raise ConfigError(f"slots must be generated in order: expected t={self.slots_generated}, got t={t}")
        task_rng = self._rngs["tasks"]
        if self.arrivals.mode == "fixed":
            k = self.arrivals.count
        else:
            k = min(int(task_rng.poisson(self.arrivals.rate)), self.arrivals.cap)
        sizes = self.tasks.draw(task_rng, k)
        works = sizes * self.tasks.intensity
        fog = np.sort(self._rngs["subsets"].choice(self.constants.n_fog, self.n_a, replace=False)) + 1
        acc = np.concatenate(([DEVICE], fog))
        if self.coefficient_mode == "per_slot":
            coef = self._rngs["coefficients"]
            kappa_vals = coef.uniform(self.kappa_low[acc], self.kappa_high[acc])
            eta_vals = coef.uniform(self.eta_low[fog], self.eta_high[fog])
        else:
            kappa_vals = self._fixed_kappa[acc]
            eta_vals = self._fixed_eta[fog]
        self.slots_generated += 1
        return SlotContext(
            t=t,
            tasks=tuple(Task((t, i), float(s), float(w)) for i, (s, w) in enumerate(zip(sizes, works))),
            accessible=tuple(int(n) for n in acc),
            eta={int(n): float(v) for n, v in zip(fog, eta_vals)},
            kappa={int(n): float(v) for n, v in zip(acc, kappa_vals)},
        )

    def realize(self, ctx: SlotContext, decision: Decision) -> Feedback:
        decision.validate(ctx)
        nodes = np.asarray(decision.nodes, dtype=np.int64)
        offloaded = nodes > 0
        rate = np.full(len(nodes), np.nan)
        if offloaded.any():
            picked = nodes[offloaded]
            rate[offloaded] = self._rngs["rates"].uniform(self.rate_low[picked], self.rate_high[picked])
        freq = self._rngs["frequencies"].uniform(self.freq_low[nodes], self.freq_high[nodes])
        d_tr = np.zeros(len(nodes))
        d_tr[offloaded] = ctx.sizes[offloaded] / rate[offloaded]
        d_pr = ctx.works / freq
        return Feedback(rate=rate, freq=freq, d_tr=d_tr, d_pr=d_pr)

    def true_means(self) -> TrueMeans:
        rho = {p.node: reciprocal_uniform_mean(p.rate_low, p.rate_high) for p in self.profiles if p.node != DEVICE}
        phi = {p.node: reciprocal_uniform_mean(p.freq_low, p.freq_high) for p in self.profiles}
        return TrueMeans(rho=rho, phi=phi)

    def state_dict(self) -> dict:
        return {
            "slots_generated": self.slots_generated,
            "rngs": {name: rng.bit_generator.state for name, rng in self._rngs.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        self.slots_generated = int(state["slots_generated"])
        for name, bg_state in state["rngs"].items():
            self._rngs[name].bit_generator.state = bg_state


def build_environment(
    profiles: list[NodeProfile],
    constants: SystemConstants,
    arrivals: ArrivalSpec,
    n_a: int,
    seed: int,
    tasks: TaskSpec | None = None,
    coefficient_mode: str = "per_slot",
) -> Environment:
    return Environment(
        profiles=list(profiles),
        constants=constants,
        arrivals=arrivals,
        tasks=tasks or TaskSpec(),
        n_a=n_a,
        seed=seed,
        coefficient_mode=coefficient_mode,
    )
