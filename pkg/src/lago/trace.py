"""Trace files: one CSV record per line, replayable by ``lago verify``.

Layout::

    # lago-trace version=1 {"n_nodes": 21, "budgets": [...], ...}
    record,t,ordinal,node,...
    task,0,0,3,...          (per-task detail, checkpoint slots only)
    slot,0,,,...            (one aggregate row for every slot)

Floats are written with ``repr`` so they read back bit-exact. Per-node
vectors (``energy``, ``backlog``) are ``;``-joined inside one field.
``backlog`` is the queue state after the slot's update.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import RunningSummary

FORMAT = "lago-trace"
VERSION = 1
COLUMNS = (
    "record", "t", "ordinal", "node", "size_bits", "work_cycles", "eta", "kappa", "rate", "freq",
    "d_tr", "d_pr", "n_tasks", "latency", "expected_latency", "oracle_latency",
    "backlog_start_total", "explored", "estimate_hash", "energy", "backlog",
)


class TraceFormatError(ValueError):
    pass


def _f(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _vec(values) -> str:
    return ";".join(repr(float(v)) for v in values)


class TraceWriter:
    """Streams :class:`~lago.engine.SlotTrace` records to a CSV file.

    Per-task rows are written only for traces flagged ``checkpoint``. The
    SHA-256 of everything written is available as :attr:`sha256` after close.
    """

    def __init__(self, path: str | Path, meta: dict):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._hash = hashlib.sha256()
        header = f"# {FORMAT} version={VERSION} {json.dumps(meta, sort_keys=True)}\n"
        self._emit(header)
        self._emit(",".join(COLUMNS) + "\n")
        self.sha256: str | None = None

    def _emit(self, text: str) -> None:
        self._fh.write(text)
        self._hash.update(text.encode("utf-8"))

    def write(self, tr) -> None:
        lines = []
        if tr.checkpoint:
            for i in range(tr.n_tasks):
                node = int(tr.nodes[i])
                lines.append(",".join((
                    "task", str(tr.t), str(i), str(node), _f(tr.sizes[i]), _f(tr.works[i]),
                    _f(tr.eta[i]), _f(tr.kappa[i]), _f(tr.rate[i]), _f(tr.freq[i]),
                    _f(tr.d_tr[i]), _f(tr.d_pr[i]), "", _f(tr.d_tr[i] + tr.d_pr[i]),
                    "", "", "", "", "", "", "",
                )))
        lines.append(",".join((
            "slot", str(tr.t), "", "", "", "", "", "", "", "", "", "", str(tr.n_tasks),
            _f(tr.latency), _f(tr.expected_latency), _f(tr.oracle_latency), _f(tr.backlog_start_total),
            str(tr.explored), tr.estimate_hash, _vec(tr.energy), _vec(tr.backlog),
        )))
        self._emit("\n".join(lines) + "\n")

    def close(self) -> str:
        if not self._fh.closed:
            self._fh.close()
            self.sha256 = self._hash.hexdigest()
        return self.sha256

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class SlotRecord:
    t: int
    n_tasks: int
    latency: float
    expected_latency: float
    oracle_latency: float
    backlog_start_total: float
    explored: int
    estimate_hash: str
    energy: np.ndarray
    backlog: np.ndarray


@dataclass
class TaskRecord:
    t: int
    ordinal: int
    node: int
    size_bits: float
    work_cycles: float
    eta: float
    kappa: float
    rate: float
    freq: float
    d_tr: float
    d_pr: float
    latency: float


@dataclass
class Trace:
    meta: dict
    slots: list[SlotRecord]
    tasks: dict[int, list[TaskRecord]] = field(default_factory=dict)


def _float(s: str) -> float:
    return float("nan") if s == "" else float(s)


def read_trace(path: str | Path) -> Trace:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        prefix = f"# {FORMAT} version="
        if not first.startswith(prefix):
            raise TraceFormatError(f"{path}: not a {FORMAT} file")
        version_str, _, meta_json = first[len(prefix):].partition(" ")
        if int(version_str) != VERSION:
            raise TraceFormatError(f"{path}: unsupported trace version {version_str}")
        meta = json.loads(meta_json)
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != COLUMNS:
            raise TraceFormatError(f"{path}: unexpected column header")
        slots: list[SlotRecord] = []
        tasks: dict[int, list[TaskRecord]] = {}
        for lineno, row in enumerate(reader, start=3):
            if len(row) != len(COLUMNS):
                raise TraceFormatError(f"{path}:{lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
            rec = dict(zip(COLUMNS, row))
            if rec["record"] == "task":
                tasks.setdefault(int(rec["t"]), []).append(TaskRecord(
                    t=int(rec["t"]), ordinal=int(rec["ordinal"]), node=int(rec["node"]),
                    size_bits=_float(rec["size_bits"]), work_cycles=_float(rec["work_cycles"]),
                    eta=_float(rec["eta"]), kappa=_float(rec["kappa"]), rate=_float(rec["rate"]),
                    freq=_float(rec["freq"]), d_tr=_float(rec["d_tr"]), d_pr=_float(rec["d_pr"]),
                    latency=_float(rec["latency"]),
                ))
            elif rec["record"] == "slot":
                slots.append(SlotRecord(
                    t=int(rec["t"]), n_tasks=int(rec["n_tasks"]), latency=_float(rec["latency"]),
                    expected_latency=_float(rec["expected_latency"]),
                    oracle_latency=_float(rec["oracle_latency"]),
                    backlog_start_total=_float(rec["backlog_start_total"]),
                    explored=int(rec["explored"]), estimate_hash=rec["estimate_hash"],
                    energy=np.array([float(v) for v in rec["energy"].split(";")]),
                    backlog=np.array([float(v) for v in rec["backlog"].split(";")]),
                ))
            else:
                raise TraceFormatError(f"{path}:{lineno}: unknown record type {rec['record']!r}")
    return Trace(meta, slots, tasks)


@dataclass
class VerifyReport:
    slots: int = 0
    detailed_slots: int = 0
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def fail(self, msg: str) -> None:
        if len(self.problems) < 50:
            self.problems.append(msg)


def replay_energy(tasks: list[TaskRecord], n_nodes: int) -> list[float]:
    """Per-node slot energy rebuilt from task rows, summed in task order."""
    energy = [0.0] * n_nodes
    for task in tasks:
        if task.node == 0:
            energy[0] += task.kappa * task.work_cycles
        else:
            energy[0] += task.eta * task.size_bits
            energy[task.node] += task.kappa * task.work_cycles
    return energy


def verify_trace(path: str | Path, summary: dict | None = None) -> VerifyReport:
    """Replay queue updates and energies from a trace and compare with stored values.

    Every slot's backlog is recomputed from the previous backlog, the budgets
    and the stored energies. On checkpoint slots the energies, latencies and
    task count are also rebuilt from the per-task rows. When ``summary`` is
    given, its scalars are recomputed from the slot rows and compared.
    """
    report = VerifyReport()
    trace = read_trace(path)
    meta = trace.meta
    n = int(meta["n_nodes"])
    budgets = np.array(meta["budgets"], dtype=float)
    prev = np.array(meta["initial_backlog"], dtype=float)
    expected_t = int(meta.get("start_t", 0))
    for rec in trace.slots:
        report.slots += 1
        if rec.t != expected_t:
            report.fail(f"slot {rec.t}: expected slot index {expected_t}")
        expected_t = rec.t + 1
        if len(rec.energy) != n or len(rec.backlog) != n:
            report.fail(f"slot {rec.t}: per-node vectors must have {n} entries")
            prev = rec.backlog
            continue
        if np.any(rec.energy < 0):
            report.fail(f"slot {rec.t}: negative energy")
        if float(prev.sum()) != rec.backlog_start_total:
            report.fail(f"slot {rec.t}: starting backlog total {rec.backlog_start_total!r} != {float(prev.sum())!r}")
        replayed = np.maximum(prev - budgets, 0.0) + rec.energy
        if not np.array_equal(replayed, rec.backlog):
            bad = np.flatnonzero(replayed != rec.backlog).tolist()
            report.fail(f"slot {rec.t}: backlog mismatch on node(s) {bad}")
        tasks = trace.tasks.get(rec.t)
        if tasks is not None:
            report.detailed_slots += 1
            _verify_tasks(rec, tasks, n, report)
        prev = rec.backlog
    stray = set(trace.tasks) - {rec.t for rec in trace.slots}
    if stray:
        report.fail(f"task rows without slot rows for slots {sorted(stray)[:5]}")
    if summary is not None:
        _verify_summary(trace, summary, report)
    return report


def _verify_tasks(rec: SlotRecord, tasks: list[TaskRecord], n: int, report: VerifyReport) -> None:
    if len(tasks) != rec.n_tasks:
        report.fail(f"slot {rec.t}: {len(tasks)} task rows but n_tasks={rec.n_tasks}")
    if [x.ordinal for x in tasks] != list(range(len(tasks))):
        report.fail(f"slot {rec.t}: task ordinals out of order")
    for x in tasks:
        if not 0 <= x.node < n:
            report.fail(f"slot {rec.t} task {x.ordinal}: node {x.node} out of range")
            return
        d_tr = 0.0 if x.node == 0 else x.size_bits / x.rate
        if x.d_tr != d_tr or x.d_pr != x.work_cycles / x.freq:
            report.fail(f"slot {rec.t} task {x.ordinal}: latency does not match size/rate and work/freq")
        if x.latency != x.d_tr + x.d_pr:
            report.fail(f"slot {rec.t} task {x.ordinal}: latency != d_tr + d_pr")
    if not np.array_equal(np.array(replay_energy(tasks, n)), rec.energy):
        report.fail(f"slot {rec.t}: energies do not match task rows")
    total = float((np.array([x.d_tr for x in tasks]) + np.array([x.d_pr for x in tasks])).sum()) if tasks else 0.0
    if total != rec.latency:
        report.fail(f"slot {rec.t}: slot latency {rec.latency!r} != task sum {total!r}")


SUMMARY_SCALARS = ("slots", "tasks", "average_latency", "total_energy", "regret_expected", "regret_realized",
                   "average_backlog")


def summarize_records(records, n_nodes: int) -> dict:
    return RunningSummary(n_nodes).extend(records).result()


def _verify_summary(trace: Trace, summary: dict, report: VerifyReport) -> None:
    recomputed = summarize_records(trace.slots, int(trace.meta["n_nodes"]))
    for key in SUMMARY_SCALARS:
        if summary.get(key) != recomputed[key]:
            report.fail(f"summary {key}={summary.get(key)!r} but trace gives {recomputed[key]!r}")
    if summary.get("average_energy") != recomputed["average_energy"]:
        report.fail("summary average_energy does not match trace")


def write_summary(path: str | Path, summary: dict) -> None:
    buf = io.StringIO()
    json.dump(summary, buf, indent=2, sort_keys=True)
    Path(path).write_text(buf.getvalue() + "\n", encoding="utf-8")
