"""Command-line experiment runner.

    lago run    [--config PATH] [overrides] [--resume STATE]
    lago sweep  --param {V,arrival_count,n_a,strategy} --values A,B,C [--seeds 1,2,3] [--jobs N]
    lago verify TRACE [--summary PATH]

Exit codes: 0 success, 1 simulation failure, 2 invalid config or usage,
3 I/O failure, 4 trace verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import RunConfig, apply_overrides, load_document, validate_config
from .engine import Simulation, SimulationError, new_simulation
from .metrics import RunningSummary, bound_constants
from .model import ConfigError
from .trace import TraceFormatError, TraceWriter, verify_trace, write_summary

log = logging.getLogger("lago")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3, 4
SWEEP_PARAMS = ("V", "arrival_count", "n_a", "strategy")
TRACE_NAME = "trace.csv"
SUMMARY_NAME = "summary.json"
STATE_NAME = "state.json"

TASK_SIZE_NOTE = (
    "Task sizes default to log-uniform over [1e4, 4e5] bits (override under 'tasks' in the config). "
    "The real-world IoT size trace used for the original experiments is not bundled."
)


@dataclass
class RunOutcome:
    summary: dict
    trace_path: Path
    summary_path: Path


def _prepare_dir(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc.strerror or exc}") from exc


def run_once(config: RunConfig, resume: dict | None = None) -> RunOutcome:
    """Execute one run and persist its trace, summary and final state under ``config.out``."""
    out = Path(config.out)
    _prepare_dir(out)
    env = config.build_environment()
    if resume is None:
        sim = new_simulation(env, config.strategy, config.V, config.epsilon, config.checkpoint_every)
    else:
        sim = Simulation.from_state_dict(env, resume, checkpoint_every=config.checkpoint_every)
    meta = {
        "n_nodes": env.n_nodes,
        "budgets": env.budgets.tolist(),
        "initial_backlog": sim.queues.backlog.tolist(),
        "start_t": sim.t,
        "checkpoint_every": config.checkpoint_every,
        "seed": config.seed,
    }
    totals = RunningSummary(env.n_nodes)
    trace_path = out / TRACE_NAME
    with TraceWriter(trace_path, meta) as writer:
        for tr in sim.run(config.horizon):
            writer.write(tr)
            totals.add(tr)
    result = totals.result()
    budgets = env.budgets
    ratio = np.asarray(result["average_energy"]) / budgets
    summary = {
        "format": "lago-summary",
        "version": 1,
        "seed": config.seed,
        "start_t": meta["start_t"],
        **result,
        "budget_ratio": ratio.tolist(),
        "violations": np.flatnonzero(ratio > 1.0).tolist(),
        "final_backlog": sim.queues.backlog.tolist(),
        "bound_constants": bound_constants(config.constants, budgets, config.V, max(sim.t, 1)).as_dict(),
        "config": config.to_mapping(),
        "trace_file": TRACE_NAME,
        "trace_sha256": writer.sha256,
    }
    summary_path = out / SUMMARY_NAME
    write_summary(summary_path, summary)
    (out / STATE_NAME).write_text(json.dumps(sim.state_dict()) + "\n", encoding="utf-8")
    return RunOutcome(summary, trace_path, summary_path)


def _sweep_value(param: str, raw: str):
    if param == "strategy":
        return raw.strip()
    if param == "V":
        return float(raw)
    return int(raw)


def sweep_configs(base: dict, param: str, values: Sequence, seeds: Sequence[int], out: Path) -> list[tuple]:
    """Expand a sweep into ``((value, seed), RunConfig)`` jobs, each with its own output directory."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    jobs = []
    for value in values:
        for seed in seeds:
            flags = {"seed": seed, "out": str(out / f"{param}={value}" / f"seed={seed}")}
            if param == "arrival_count":
                flags["arrivals"] = value
            else:
                flags[param] = value
            jobs.append(((value, seed), validate_config(apply_overrides(base, **flags))))
    return jobs


def _run_job(item):
    key, cfg = item
    try:
        return key, run_once(cfg).summary
    except Exception as exc:
        raise RuntimeError(f"run {key}: {exc}") from exc


SWEEP_COLUMNS = ("param", "value", "seed", "average_latency", "total_energy", "regret_expected",
                 "regret_realized", "average_backlog", "max_budget_ratio", "trace_sha256")


def sweep(base: dict, param: str, values: Sequence, seeds: Sequence[int], out: Path, jobs: int = 1) -> list[dict]:
    """Run every (value, seed) pair and return one row per run plus one mean row per value."""
    work = sweep_configs(base, param, values, seeds, out)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = dict(pool.map(_run_job, work))
    else:
        done = dict(map(_run_job, work))
    rows = []
    for value in values:
        per_value = []
        for seed in seeds:
            s = done[(value, seed)]
            row = {
                "param": param, "value": value, "seed": seed,
                "average_latency": s["average_latency"], "total_energy": s["total_energy"],
                "regret_expected": s["regret_expected"], "regret_realized": s["regret_realized"],
                "average_backlog": s["average_backlog"], "max_budget_ratio": max(s["budget_ratio"]),
                "trace_sha256": s["trace_sha256"],
            }
            rows.append(row)
            per_value.append(row)
        mean = {"param": param, "value": value, "seed": "mean", "trace_sha256": ""}
        for col in SWEEP_COLUMNS[3:-1]:
            mean[col] = float(np.mean([r[col] for r in per_value]))
        rows.append(mean)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON or YAML run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int, help="number of slots to simulate")
    p.add_argument("--v", dest="V", type=float, help="latency weight V")
    p.add_argument("--na", dest="n_a", type=int, help="accessible fog nodes per slot")
    p.add_argument("--arrivals", type=int, help="tasks per slot (also sets a_max)")
    p.add_argument("--strategy", choices=("ucb1", "ucbt", "nconfr", "eps"))
    p.add_argument("--epsilon", type=float, help="exploration probability for eps")
    p.add_argument("--out", help="output directory")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int,
                   help="write per-task rows every N slots (0 disables)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lago", description=__doc__.split("\n\n")[0], epilog=TASK_SIZE_NOTE)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one seeded simulation", epilog=TASK_SIZE_NOTE)
    _add_run_flags(run_p)
    run_p.add_argument("--resume", type=Path, help="continue from a saved state.json")

    sweep_p = sub.add_parser("sweep", help="run a parameter sweep", epilog=TASK_SIZE_NOTE)
    _add_run_flags(sweep_p)
    sweep_p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sweep_p.add_argument("--values", required=True, help="comma-separated values")
    sweep_p.add_argument("--seeds", default="0", help="comma-separated seeds")
    sweep_p.add_argument("--jobs", type=int, default=1, help="concurrent runs")

    verify_p = sub.add_parser("verify", help="replay a trace and check stored values")
    verify_p.add_argument("trace", type=Path)
    verify_p.add_argument("--summary", type=Path, help="summary to cross-check (default: sibling summary.json)")
    return parser


def _overrides(args) -> dict:
    keys = ("seed", "horizon", "V", "n_a", "arrivals", "strategy", "epsilon", "out", "checkpoint_every")
    return {k: getattr(args, k) for k in keys}


def _base_document(args) -> dict:
    return load_document(args.config) if args.config else {}


def _cmd_run(args) -> int:
    cfg = validate_config(apply_overrides(_base_document(args), **_overrides(args)))
    resume = json.loads(args.resume.read_text()) if args.resume else None
    outcome = run_once(cfg, resume=resume)
    s = outcome.summary
    print(f"trace    {outcome.trace_path}")
    print(f"summary  {outcome.summary_path}")
    print(f"latency  {s['average_latency']:.6g} s/task   energy {s['total_energy']:.6g} J/slot   "
          f"regret {s['regret_expected']:.6g}   backlog {s['average_backlog']:.6g} J")
    print(f"sha256   {s['trace_sha256']}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    overrides = {k: v for k, v in _overrides(args).items() if k != "out"}
    base = apply_overrides(_base_document(args), **overrides)
    values = [_sweep_value(args.param, v) for v in args.values.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    out = Path(args.out or "runs/sweep")
    rows = sweep(base, args.param, values, seeds, out, jobs=args.jobs)
    writer = csv.DictWriter(sys.stdout, fieldnames=SWEEP_COLUMNS[:-1], extrasaction="ignore")
    writer.writeheader()
    writer.writerows(rows)
    return EXIT_OK


def _cmd_verify(args) -> int:
    summary_path = args.summary or args.trace.with_name(SUMMARY_NAME)
    summary = json.loads(summary_path.read_text()) if summary_path.exists() else None
    report = verify_trace(args.trace, summary)
    if report.ok:
        extra = " and summary" if summary is not None else ""
        print(f"OK: {report.slots} slots ({report.detailed_slots} with task detail){extra} verified")
        return EXIT_OK
    for problem in report.problems:
        print(f"FAIL: {problem}", file=sys.stderr)
    return EXIT_VERIFY


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "verify": _cmd_verify}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceFormatError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # propagated sweep failures carry their key
        log.debug("unhandled", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
