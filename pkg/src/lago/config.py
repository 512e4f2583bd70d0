"""Run configuration: parsing, defaults and validation.

A run is a pure function of its :class:`RunConfig`. Documents are plain
mappings (loaded from JSON or YAML); unspecified fields take the defaults
below, and the system constants not given explicitly are derived from the
node and task distributions so that every realized draw respects them.

Task sizes default to log-uniform over [1e4, 4e5] bits. This stands in for
the real-world IoT size trace, which is not bundled; it keeps the default
0.5 J budgets feasible while leaving them binding.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .environment import ArrivalSpec, Environment, MetaDistributions, NodeProfile, TaskSpec, build_environment, draw_profiles
from .learner import Strategy
from .model import ConfigError, SystemConstants

CONSTANT_KEYS = ("n_fog", "a_max", "l_max", "w_max", "r_min", "f_min", "rho_max", "phi_max", "eta_max", "kappa_max")
RUN_KEYS = ("n_a", "V", "horizon", "seed", "strategy", "epsilon", "checkpoint_every", "coefficient_mode", "out")
SECTION_KEYS = ("arrivals", "tasks", "nodes", "profiles")

DEFAULTS: dict[str, Any] = {
    "n_fog": 20,
    "n_a": 10,
    "V": 100.0,
    "horizon": 500_000,
    "seed": 0,
    "strategy": "ucb1",
    "epsilon": 0.1,
    "checkpoint_every": 1000,
    "coefficient_mode": "per_slot",
    "out": "runs/default",
}


@dataclass(frozen=True)
class RunConfig:
    constants: SystemConstants
    meta: MetaDistributions = field(default_factory=MetaDistributions)
    arrivals: ArrivalSpec = field(default_factory=ArrivalSpec)
    tasks: TaskSpec = field(default_factory=TaskSpec)
    profiles: tuple[NodeProfile, ...] | None = None
    n_a: int = 10
    V: float = 100.0
    horizon: int = 500_000
    seed: int = 0
    strategy: Strategy = Strategy.UCB1
    epsilon: float = 0.1
    checkpoint_every: int = 1000
    coefficient_mode: str = "per_slot"
    out: str = "runs/default"

    def node_profiles(self) -> list[NodeProfile]:
        if self.profiles is not None:
            return list(self.profiles)
        return draw_profiles(self.meta, self.constants.n_fog, self.seed)

    def build_environment(self) -> Environment:
        return build_environment(
            self.node_profiles(),
            self.constants,
            self.arrivals,
            self.n_a,
            self.seed,
            tasks=self.tasks,
            coefficient_mode=self.coefficient_mode,
        )

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> dict:
        c = self.constants
        doc = {k: getattr(c, k) for k in CONSTANT_KEYS}
        doc.update(
            n_a=self.n_a,
            V=self.V,
            horizon=self.horizon,
            seed=self.seed,
            strategy=self.strategy.value,
            epsilon=self.epsilon,
            checkpoint_every=self.checkpoint_every,
            coefficient_mode=self.coefficient_mode,
            out=self.out,
            arrivals=dataclasses.asdict(self.arrivals),
            tasks=dataclasses.asdict(self.tasks),
            nodes={k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self.meta).items()},
        )
        if self.profiles is not None:
            doc["profiles"] = [dataclasses.asdict(p) for p in self.profiles]
        return doc


def load_document(path: str | Path) -> dict:
    """Read a JSON or YAML config document."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        doc = json.loads(text)
    else:
        doc = yaml.safe_load(text)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def _section(raw: Mapping, key: str, problems: list) -> dict:
    value = raw.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        problems.append(f"{key} must be a mapping")
        return {}
    return dict(value)


def _build(cls, kwargs: dict, name: str, problems: list):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(kwargs) - known)
    if unknown:
        problems.append(f"{name}: unknown field(s) {unknown}")
        kwargs = {k: v for k, v in kwargs.items() if k in known}
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        problems.extend(exc.problems)
    except TypeError as exc:
        problems.append(f"{name}: {exc}")
    return None


def _positive_int(raw: Mapping, key: str, problems: list, allow_zero: bool = False):
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            problems.append(f"{key} must be an integer, got {value!r}")
            return None
    if value < 0 or (value == 0 and not allow_zero):
        problems.append(f"{key} must be {'nonnegative' if allow_zero else 'positive'}")
        return None
    return value


def validate_config(raw: Mapping) -> RunConfig:
    """Turn a raw config document into a :class:`RunConfig`.

    Every violated field is collected and reported together in one
    :class:`ConfigError`.
    """
    problems: list[str] = []
    if not isinstance(raw, Mapping):
        raise ConfigError("config document must be a mapping")
    unknown = sorted(set(raw) - set(CONSTANT_KEYS) - set(RUN_KEYS) - set(SECTION_KEYS))
    if unknown:
        problems.append(f"unknown field(s) {unknown}")
    doc = {**DEFAULTS, **{k: v for k, v in raw.items() if v is not None}}

    nodes = _section(raw, "nodes", problems)
    nodes = {k: tuple(v) if isinstance(v, list) else v for k, v in nodes.items()}
    meta = _build(MetaDistributions, nodes, "nodes", problems)
    if meta is not None:
        for f in dataclasses.fields(MetaDistributions):
            value = getattr(meta, f.name)
            if isinstance(value, tuple) and (len(value) != 2 or not 0 < value[0] < value[1]):
                problems.append(f"nodes.{f.name} must be a pair 0 < low < high, got {value!r}")
            elif not isinstance(value, tuple) and not value > 0:
                problems.append(f"nodes.{f.name} must be positive")
    arrivals = _build(ArrivalSpec, _section(raw, "arrivals", problems), "arrivals", problems)
    tasks = _build(TaskSpec, _section(raw, "tasks", problems), "tasks", problems)

    profiles = None
    if raw.get("profiles") is not None:
        if not isinstance(raw["profiles"], list):
            problems.append("profiles must be a list")
        else:
            built = [_build(NodeProfile, dict(p), f"profiles[{i}]", problems) for i, p in enumerate(raw["profiles"])]
            if all(p is not None for p in built):
                profiles = tuple(built)

    ints = {}
    for key in ("n_fog", "n_a", "horizon", "checkpoint_every", "seed"):
        ints[key] = _positive_int(doc, key, problems, allow_zero=key in ("n_fog", "n_a", "horizon", "checkpoint_every", "seed"))

    V = doc["V"]
    if isinstance(V, bool) or not isinstance(V, (int, float)) or not V > 0:
        problems.append(f"V must be positive, got {V!r}")
    strategy = None
    try:
        strategy = Strategy.parse(doc["strategy"])
    except ConfigError as exc:
        problems.extend(exc.problems)
    eps = doc["epsilon"]
    if isinstance(eps, bool) or not isinstance(eps, (int, float)) or not 0.0 <= eps <= 1.0:
        problems.append(f"epsilon must be a probability in [0, 1], got {eps!r}")
    if doc["coefficient_mode"] not in ("per_slot", "per_node"):
        problems.append(f"coefficient_mode must be per_slot or per_node, got {doc['coefficient_mode']!r}")

    constants = None
    if meta is not None and arrivals is not None and tasks is not None and ints["n_fog"] is not None:
        derived = _derived_constants(meta, arrivals, tasks, profiles)
        kwargs = {"n_fog": ints["n_fog"], **derived}
        kwargs.update({k: raw[k] for k in CONSTANT_KEYS if k in raw and k != "n_fog" and raw[k] is not None})
        for key in ("a_max",):
            if isinstance(kwargs.get(key), float) and kwargs[key].is_integer():
                kwargs[key] = int(kwargs[key])
        constants = _build(SystemConstants, kwargs, "constants", problems)
    if profiles is not None and ints["n_fog"] is not None and len(profiles) != ints["n_fog"] + 1:
        problems.append(f"profiles must list nodes 0..{ints['n_fog']}")
    if ints["n_a"] is not None and ints["n_fog"] is not None and ints["n_a"] > ints["n_fog"]:
        problems.append(f"n_a ({ints['n_a']}) must not exceed n_fog ({ints['n_fog']})")

    if problems:
        raise ConfigError(problems)

    cfg = RunConfig(
        constants=constants,
        meta=meta,
        arrivals=arrivals,
        tasks=tasks,
        profiles=profiles,
        n_a=ints["n_a"],
        V=float(V),
        horizon=ints["horizon"],
        seed=ints["seed"],
        strategy=strategy,
        epsilon=float(eps),
        checkpoint_every=ints["checkpoint_every"],
        coefficient_mode=doc["coefficient_mode"],
        out=str(doc["out"]),
    )
    try:
        cfg.build_environment()
    except ConfigError as exc:
        raise ConfigError(exc.problems) from None
    return cfg


def _derived_constants(meta: MetaDistributions, arrivals: ArrivalSpec, tasks: TaskSpec, profiles) -> dict:
    if profiles is not None:
        fog = [p for p in profiles if p.node != 0]
        r_min = min((p.rate_low for p in fog), default=meta.rate_low[0])
        f_min = min(p.freq_low for p in profiles)
        eta_max = max((p.eta_high for p in fog), default=meta.fog_eta[1])
        kappa_max = max(p.kappa_high for p in profiles)
    else:
        r_min = meta.rate_low[0]
        f_min = min(meta.device_freq[0], meta.freq_low[0])
        eta_max = meta.fog_eta[1]
        kappa_max = max(meta.device_kappa[1], meta.fog_kappa[1])
    return {
        "a_max": max(arrivals.max_count, 1),
        "l_max": tasks.max_size,
        "w_max": tasks.max_size * tasks.intensity,
        "r_min": r_min,
        "f_min": f_min,
        "eta_max": eta_max,
        "kappa_max": kappa_max,
    }


def default_config(**overrides) -> RunConfig:
    """The reference-scale defaults, with optional top-level field overrides."""
    return validate_config(overrides)


def apply_overrides(raw: Mapping, **flags) -> dict:
    """Fold CLI-style overrides into a raw document.

    ``arrivals`` sets a fixed per-slot count and raises ``a_max`` to match.
    """
    doc = dict(raw)
    for key in ("seed", "horizon", "V", "n_a", "strategy", "epsilon", "out", "checkpoint_every"):
        if flags.get(key) is not None:
            doc[key] = flags[key]
    if flags.get("arrivals") is not None:
        count = int(flags["arrivals"])
        doc["arrivals"] = {"mode": "fixed", "count": count}
        doc["a_max"] = max(count, 1)
    return doc
