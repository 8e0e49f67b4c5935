"""Seed sweeps, summary statistics and log-log scaling fits.

Each run is seeded with ``seed_base + i``; records are merged in
``(graph point, seed)`` order, so the output does not depend on how many
worker threads were used. Numba kernels release the GIL, which is what makes
thread-level parallelism pay off here.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import kernels as K
from .apps import alternating_input
from .engine import RunRecord, Simulation, default_step_cap, default_tail
from .graph import Graph, GraphDescriptor, InvalidParameter
from .instrument import CHECKS, InstrumentedRun
from .stacks import STACK_NAMES, make_stack

INSTRUMENT_LEVELS = ("off", "light", "full")
INPUT_POLICIES = ("alternating", "random", "all-A")
MAX_CAPPED_FRACTION = 0.10
LIGHT_SAMPLE_EVERY = 100


class FitError(ValueError):
    """Not enough (or too many capped) points for a scaling fit."""


def thread_count() -> int:
    """Worker threads: ``POPPROTO_THREADS`` if set, else the CPU count."""
    raw = os.environ.get("POPPROTO_THREADS", "").strip()
    if raw:
        try:
            val = int(raw)
        except ValueError as exc:
            raise InvalidParameter(f"POPPROTO_THREADS must be an integer, got {raw!r}") from exc
        if val < 1:
            raise InvalidParameter("POPPROTO_THREADS must be >= 1")
        return val
    return os.cpu_count() or 1


# spec ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep: every graph point is run with ``seeds`` consecutive seeds."""

    graphs: tuple[GraphDescriptor, ...]
    stack: str
    seeds: int = 1
    seed_base: int = 0
    step_cap: int | None = None  # default_step_cap(n) per point
    tail: int | None = None  # default_tail(n, D) per point
    instrument: str = "light"
    init: str = "fresh"  # or "random": arbitrary initial states
    majority_input: str = "alternating"
    leader_candidates: tuple[int, ...] | None = None  # default: every node
    alpha: int = 7
    out_path: str | None = None
    csv_path: str | None = None
    trace_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if not self.graphs:
            raise InvalidParameter("an experiment needs at least one graph point")
        if self.seeds < 1:
            raise InvalidParameter("seeds must be >= 1")
        if self.step_cap is not None and self.step_cap < 1:
            raise InvalidParameter("step cap must be >= 1")
        if self.tail is not None and self.tail < 0:
            raise InvalidParameter("tail must be >= 0")
        if self.instrument not in INSTRUMENT_LEVELS:
            raise InvalidParameter(f"instrument must be one of {INSTRUMENT_LEVELS}")
        if self.init not in ("fresh", "random"):
            raise InvalidParameter("init must be 'fresh' or 'random'")
        if self.majority_input not in INPUT_POLICIES:
            raise InvalidParameter(f"majority input must be one of {INPUT_POLICIES}")
        if self.alpha < 1:
            raise InvalidParameter("alpha must be >= 1")
        if self.leader_candidates is not None:
            cands = tuple(int(v) for v in self.leader_candidates)
            if not cands or min(cands) < 0:
                raise InvalidParameter("leader candidates must be a non-empty list of node ids")
            object.__setattr__(self, "leader_candidates", cands)
        make_stack(self.stack)  # validates the name


def _majority_input(policy: str, n: int, seed: int):
    if policy == "alternating":
        return alternating_input(n)
    if policy == "all-A":
        return ["A"] * n
    rng = np.random.default_rng([seed, 0xAB])
    return ["AB"[x] for x in rng.integers(0, 2, size=n)]


def _initial_counts(mtok: np.ndarray) -> dict:
    counts = np.bincount(mtok.astype(np.int64), minlength=3)
    return {"A": int(counts[0]), "B": int(counts[1]), "C": int(counts[2])}


def run_one(spec: ExperimentSpec, desc: GraphDescriptor, g: Graph, seed: int,
            trace: Callable[[dict], None] | None = None) -> RunRecord:
    """One seeded run of ``spec.stack`` on ``g``."""
    stack = make_stack(spec.stack, alpha=spec.alpha)
    inputs = {}
    if stack.has(K.MAJ) and not (spec.init == "random" and spec.majority_input == "random"):
        inputs["majority"] = _majority_input(spec.majority_input, g.n, seed)
    if stack.has(K.LEADER) and spec.leader_candidates is not None:
        if max(spec.leader_candidates) >= g.n:
            raise InvalidParameter(f"leader candidate out of range for n={g.n}")
        inputs["leader"] = list(spec.leader_candidates)
    config = stack.initial_configuration(g, inputs, seed=seed, mode=spec.init)
    initial = _initial_counts(config.mtok) if stack.has(K.MAJ) else None
    cap = spec.step_cap if spec.step_cap is not None else default_step_cap(g.n)
    tail = spec.tail if spec.tail is not None else default_tail(g.n, g.diameter)

    violations = None
    if spec.instrument == "full" or trace is not None:
        checks = CHECKS if spec.instrument == "full" else ()
        every = 1 if spec.instrument == "full" else LIGHT_SAMPLE_EVERY
        run = InstrumentedRun(g, stack, config, seed, checks=checks, sample_every=every)
        sim = run.sim
        flags = stack.flags()
        # step through the transient; the verification tail runs in the kernel
        while sim.t < cap and any(sim.first_hold[k] < 0 for k in range(K.NLAYERS) if flags[k]):
            info = run.step()
            if trace is not None:
                ev = run.event(info) if spec.instrument != "off" else {
                    "t": info.t, "edge": list(info.edge),
                    "layers_changed": [k for k, v in info.changed.items() if v]}
                trace({"seed": seed, **ev})
        violations = len(run.violations)
    else:
        sim = Simulation(g, stack, config, seed)
    rec = sim.run_until_stable(cap, tail, desc)
    if initial is not None:
        rec.final["initial"] = initial
    if violations is not None:
        rec.final["violations"] = violations
    return rec


def run_experiment(spec: ExperimentSpec, threads: int | None = None) -> list[RunRecord]:
    """All ``(graph point, seed)`` runs, sorted by point then seed.

    Traced experiments run serially (a trace is one ordered stream). Output
    files named in the spec are written before returning.
    """
    graphs = [d.build() for d in spec.graphs]
    jobs = [(i, spec.seed_base + s) for i in range(len(graphs)) for s in range(spec.seeds)]
    threads = thread_count() if threads is None else max(1, int(threads))

    if spec.trace_path:
        with open(spec.trace_path, "w", newline="\n") as fh:
            def emit(ev):
                fh.write(json.dumps(ev, separators=(",", ":")) + "\n")
            results = [run_one(spec, spec.graphs[i], graphs[i], s, emit) for i, s in jobs]
    elif threads == 1 or len(jobs) == 1:
        results = [run_one(spec, spec.graphs[i], graphs[i], s) for i, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda job: run_one(spec, spec.graphs[job[0]], graphs[job[0]], job[1]), jobs))

    order = sorted(range(len(jobs)), key=lambda j: jobs[j])
    records = [results[j] for j in order]
    if spec.out_path:
        write_jsonl(records, spec.out_path)
    if spec.csv_path:
        write_stats_csv(summarize(records), spec.csv_path)
    return records


def sweep_spec(family: str, ns: Sequence[int], stack: str, **kw) -> ExperimentSpec:
    """Convenience: one descriptor per ``n`` with shared family parameters."""
    desc_kw = {k: kw.pop(k) for k in ("delta_cap", "k", "seed") if k in kw}
    kfrac = kw.pop("k_fraction", None)
    graphs = []
    for n in ns:
        d = dict(desc_kw)
        if kfrac is not None:
            d["k"] = max(1, int(n * kfrac))
        graphs.append(GraphDescriptor(family, n=int(n), **d))
    return ExperimentSpec(tuple(graphs), stack, **kw)


# record I/O ---------------------------------------------------------------------------


def write_jsonl(records: Iterable[RunRecord], path) -> None:
    with open(path, "w", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_jsonl(path) -> list[RunRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(RunRecord.from_dict(json.loads(line)))
            except (KeyError, json.JSONDecodeError) as exc:
                raise InvalidParameter(f"{path}:{lineno}: not a run record ({exc})") from exc
    return out


RECORD_COLUMNS = ("graph", "stack", "seed", "steps", "rounds", "capped", "final", "total_steps")
_JSON_COLUMNS = ("graph", "steps", "final")


def records_to_csv(records: Iterable[RunRecord]) -> str:
    """Flat CSV; nested fields are embedded as compact JSON."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        d = r.to_dict()
        w.writerow([json.dumps(d[c], separators=(",", ":")) if c in _JSON_COLUMNS else d[c]
                    for c in RECORD_COLUMNS])
    return buf.getvalue()


def records_from_csv(text: str) -> list[RunRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        d = {c: json.loads(row[c]) for c in _JSON_COLUMNS}
        d.update(stack=row["stack"], seed=int(row["seed"]), rounds=int(row["rounds"]),
                 capped=row["capped"] == "True", total_steps=int(row["total_steps"]))
        out.append(RunRecord.from_dict(d))
    return out


# statistics ---------------------------------------------------------------------------


def nearest_rank(sorted_values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ``ceil(q * N)``-th smallest value."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty sample")
    return sorted_values[max(1, math.ceil(q * n)) - 1]


def record_value(rec: RunRecord, layer: str | None = None) -> int | None:
    """Steps to stable for ``layer`` (whole stack if None); None when capped."""
    if layer is None:
        return rec.stable_step
    if layer not in rec.steps:
        raise InvalidParameter(f"record has no layer {layer!r}; layers are {sorted(rec.steps)}")
    return rec.steps[layer]


@dataclass
class PointStats:
    graph: dict
    stack: str
    runs: int
    capped: int
    mean: float | None
    median: float | None
    p95: float | None
    mean_rounds: float | None
    warning: bool  # some runs capped (excluded from the statistics)

    @property
    def n(self) -> int | None:
        return self.graph.get("n")

    @property
    def capped_fraction(self) -> float:
        return self.capped / self.runs

    @property
    def fit_valid(self) -> bool:
        return self.capped_fraction <= MAX_CAPPED_FRACTION

    def to_row(self) -> dict:
        return {"graph": json.dumps(self.graph, sort_keys=True, separators=(",", ":")), "stack": self.stack,
                "n": self.n, "runs": self.runs, "capped": self.capped, "mean": self.mean,
                "median": self.median, "p95": self.p95, "mean_rounds": self.mean_rounds,
                "warning": self.warning}


def describe(values: Sequence[int | None]) -> tuple[int, int, float | None, float | None, float | None]:
    """``(runs, capped, mean, median, p95)`` over the uncapped values."""
    done = sorted(v for v in values if v is not None)
    capped = len(values) - len(done)
    if not done:
        return len(values), capped, None, None, None
    arr = np.asarray(done, dtype=np.float64)
    return len(values), capped, float(arr.mean()), float(np.median(arr)), float(nearest_rank(done, 0.95))


def _point_key(rec: RunRecord) -> str:
    return json.dumps([rec.graph, rec.stack], sort_keys=True)


def group_records(records: Iterable[RunRecord]) -> dict[str, list[RunRecord]]:
    groups: dict[str, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(_point_key(r), []).append(r)
    return groups


def summarize(records: Iterable[RunRecord], layer: str | None = None) -> list[PointStats]:
    """Per-point statistics, in first-appearance order."""
    out = []
    for recs in group_records(records).values():
        runs, capped, mean, median, p95 = describe([record_value(r, layer) for r in recs])
        rounds = [r.rounds for r in recs if not r.capped]
        out.append(PointStats(recs[0].graph, recs[0].stack, runs, capped, mean, median, p95,
                              float(np.mean(rounds)) if rounds else None, capped > 0))
    return out


STATS_COLUMNS = ["graph", "stack", "n", "runs", "capped", "mean", "median", "p95", "mean_rounds", "warning"]


def write_stats_csv(stats: Iterable[PointStats], path) -> None:
    rows = [s.to_row() for s in stats]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=STATS_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# scaling fits ----------------------------------------------------------------------------


@dataclass
class ScalingFit:
    """OLS fit of ``log(mean) = slope * log(x) + intercept``."""

    points: list  # (x, mean, p95)
    slope: float
    intercept: float
    r2: float
    excluded: dict = field(default_factory=dict)  # x -> capped count

    def predict(self, x: float) -> float:
        return math.exp(self.intercept) * x ** self.slope


def fit_scaling(groups: Mapping[float, Sequence[float | None]], min_seeds: int = 5,
                max_capped_fraction: float = MAX_CAPPED_FRACTION) -> ScalingFit:
    """Fit the means of ``groups`` (x -> per-seed values, None = capped).

    Raises FitError with fewer than 3 distinct x, fewer than ``min_seeds``
    uncapped values at some x, or a point whose capped share exceeds
    ``max_capped_fraction``.
    """
    if len(groups) < 3:
        raise FitError(f"need at least 3 distinct sizes, got {len(groups)}")
    points, excluded = [], {}
    for x in sorted(groups):
        vals = list(groups[x])
        runs, capped, mean, _, p95 = describe(vals)
        if capped:
            excluded[x] = capped
        if runs and capped / runs > max_capped_fraction:
            raise FitError(f"x={x}: {capped}/{runs} runs capped (more than {max_capped_fraction:.0%})")
        if runs - capped < min_seeds:
            raise FitError(f"x={x}: only {runs - capped} uncapped runs, need {min_seeds}")
        if x <= 0 or mean <= 0:
            raise FitError(f"x={x}: log-log fit needs positive values (mean {mean})")
        points.append((x, mean, p95))
    lx = np.log([p[0] for p in points])
    ly = np.log([p[1] for p in points])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(points, float(slope), float(intercept), r2, excluded)


X_AXES = {
    "n": lambda g: g["n"],
    "kn": lambda g: g["k"] * g["n"],
}


def fit_records(records: Iterable[RunRecord], layer: str | None = None, x: str = "n",
                min_seeds: int = 5) -> ScalingFit:
    """Group records by the chosen x axis and fit their steps-to-stable."""
    if x not in X_AXES:
        raise InvalidParameter(f"x axis must be one of {sorted(X_AXES)}")
    groups: dict[float, list] = {}
    for r in records:
        try:
            key = X_AXES[x](r.graph)
        except (KeyError, TypeError) as exc:
            raise FitError(f"record graph {r.graph} has no value for axis {x!r}") from exc
        groups.setdefault(key, []).append(record_value(r, layer))
    return fit_scaling(groups, min_seeds=min_seeds)


def write_fit_csv(fit: ScalingFit, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "mean", "p95", "capped", "slope", "intercept", "r2"])
        for x, mean, p95 in fit.points:
            w.writerow([x, mean, p95, fit.excluded.get(x, 0), fit.slope, fit.intercept, fit.r2])


__all__ = [
    "ExperimentSpec", "FitError", "PointStats", "ScalingFit", "STACK_NAMES", "describe", "fit_records",
    "fit_scaling", "group_records", "nearest_rank", "read_jsonl", "record_value", "records_from_csv",
    "records_to_csv", "run_experiment", "run_one", "summarize", "sweep_spec", "thread_count",
    "write_fit_csv", "write_jsonl", "write_stats_csv",
]
