"""Scheduler, layer composition and the run loop.

A run is fully determined by ``(graph, stack, initial configuration, seed)``.
Step ``t`` draws its edge and every per-endpoint uniform from a SplitMix64
counter stream keyed by ``(seed, t)``:

* word 0: edge index ``floor(u * m)``
* words 1, 2: ``r_u, r_v`` for the colouring layer
* words 3, 4: ``r_u, r_v`` for the orientation layer (initiator draw)

``u`` is always the smaller endpoint of the sampled edge.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels as K
from .graph import Graph, GraphDescriptor, InvalidParameter

LAYER_NAMES = {K.COL: "coloring", K.ORI: "orientation", K.LEADER: "leader",
               K.MAJ: "majority", K.TWO: "two_colour", K.COUNT: "count"}
MASK64 = (1 << 64) - 1


class CompositionError(ValueError):
    """Layers were stacked so that one reads state owned by a later layer."""


class InvariantViolation(RuntimeError):
    pass


def default_step_cap(n: int) -> int:
    return 50 * n * n * max(1, math.ceil(math.log2(max(n, 2))))


def default_tail(n: int, diameter: int) -> int:
    return max(10 * n * diameter, 100_000)


# configuration -------------------------------------------------------------------


@dataclass
class Configuration:
    """Every node's state for all layers, as parallel arrays (see ``kernels``)."""

    colour: np.ndarray
    stamp: np.ndarray
    parent: np.ndarray
    children: np.ndarray
    token: np.ndarray
    mtok: np.ndarray
    mout: np.ndarray
    bit: np.ndarray
    counter: np.ndarray
    bmax: np.ndarray

    FIELDS = ("colour", "stamp", "parent", "children", "token", "mtok", "mout", "bit", "counter", "bmax")
    LAYER_FIELDS = {
        K.COL: ("colour", "stamp"),
        K.ORI: ("parent", "children"),
        K.LEADER: ("token",),
        K.MAJ: ("mtok", "mout"),
        K.TWO: ("bit",),
        K.COUNT: ("counter", "bmax"),
    }

    @classmethod
    def blank(cls, n: int, palette: int) -> "Configuration":
        return cls(
            colour=np.ones(n, dtype=np.int32),
            stamp=np.full((n, palette + 1), -1, dtype=np.int8),
            parent=np.zeros(n, dtype=np.int32),
            children=np.zeros((n, palette + 1), dtype=np.uint8),
            token=np.zeros(n, dtype=np.uint8),
            mtok=np.full(n, 2, dtype=np.int8),
            mout=np.zeros(n, dtype=np.int8),
            bit=np.zeros(n, dtype=np.int8),
            counter=np.zeros(n, dtype=np.int64),
            bmax=np.zeros(n, dtype=np.int64),
        )

    @property
    def n(self) -> int:
        return len(self.colour)

    @property
    def palette(self) -> int:
        return self.stamp.shape[1] - 1

    def copy(self) -> "Configuration":
        return Configuration(**{f: getattr(self, f).copy() for f in self.FIELDS})

    def __eq__(self, other):
        return isinstance(other, Configuration) and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in self.FIELDS
        )

    def changed_nodes(self, other: "Configuration") -> set[int]:
        diff = np.zeros(self.n, dtype=bool)
        for f in self.FIELDS:
            a, b = getattr(self, f), getattr(other, f)
            d = a != b
            diff |= d.any(axis=1) if d.ndim == 2 else d
        return set(np.flatnonzero(diff).tolist())

    def children_sets(self) -> list[frozenset[int]]:
        return [frozenset(np.flatnonzero(row).tolist()) for row in self.children]

    def layer_bytes(self, kind: int) -> bytes:
        return b"".join(getattr(self, f).tobytes() for f in self.LAYER_FIELDS[kind])


# layers & stacks -----------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolLayer:
    """One protocol in a stack.

    ``init(graph, config, inputs, rng, mode)`` writes this layer's fields;
    ``mode`` is ``"fresh"`` or ``"random"`` (arbitrary states). ``transition``
    is the pure pairwise rule, kept for direct use and small-state checks; the
    run loop executes the equivalent kernel selected by ``kind``.
    """

    name: str
    kind: int
    provides: str | None
    reads: tuple[str, ...]
    init: Callable
    transition: Callable
    output: Callable
    stable_predicate: Callable

    def __repr__(self):
        return f"ProtocolLayer({self.name!r})"


@dataclass(frozen=True)
class ProtocolStack:
    layers: tuple[ProtocolLayer, ...]
    name: str = ""
    alpha: int = 7
    root: int = 0

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(layer.name for layer in self.layers)

    def has(self, kind: int) -> bool:
        return any(layer.kind == kind for layer in self.layers)

    def flags(self) -> np.ndarray:
        f = np.zeros(K.NLAYERS, dtype=np.int64)
        for layer in self.layers:
            f[layer.kind] = 1
        return f

    def palette_for(self, graph: Graph) -> int:
        return self.alpha * graph.degree_bound ** 2

    def initial_configuration(self, graph: Graph, inputs: Mapping | None = None, seed: int = 0,
                              mode: str = "fresh") -> Configuration:
        """Fresh (or, with ``mode="random"``, arbitrary) start for every layer.

        Lower-layer state that no layer in the stack owns is fixed: a greedy
        2-hop colouring and an orientation toward ``self.root``.
        """
        from .coloring import fixed_colouring
        from .orientation import orient_towards

        if mode not in ("fresh", "random"):
            raise InvalidParameter(f"unknown init mode {mode!r}")
        inputs = dict(inputs or {})
        rng = np.random.default_rng([seed & MASK64, 0x1A17])
        config = Configuration.blank(graph.n, self.palette_for(graph))
        if not self.has(K.COL):
            config.colour[:] = fixed_colouring(graph, config.palette)
        pending_orientation = not self.has(K.ORI) and any(layer.kind >= K.APP_FIRST for layer in self.layers)
        for layer in self.layers:
            if pending_orientation and layer.kind >= K.APP_FIRST:
                orient_towards(graph, config, self.root)
                pending_orientation = False
            layer.init(graph, config, inputs.get(layer.name), rng, mode)
        return config


def compose(layers: Sequence[ProtocolLayer], name: str = "", alpha: int = 7, root: int = 0) -> ProtocolStack:
    """Stack layers bottom-up; a layer may only read what an earlier layer provides.

    A read whose provider is absent from the stack is served by fixed state
    (see ``ProtocolStack.initial_configuration``).
    """
    layers = tuple(layers)
    if not layers:
        raise CompositionError("empty stack")
    names = [layer.name for layer in layers]
    if len(set(names)) != len(names):
        raise CompositionError("duplicate layer names")
    kinds = [layer.kind for layer in layers]
    if len(set(kinds)) != len(kinds):
        raise CompositionError("a layer kind may appear only once")
    position = {layer.provides: i for i, layer in enumerate(layers) if layer.provides}
    for i, layer in enumerate(layers):
        for field_name in layer.reads:
            j = position.get(field_name)
            if j is not None and j >= i:
                raise CompositionError(f"{layer.name} reads {field_name!r} from a layer above it")
    return ProtocolStack(layers, name or "+".join(names), alpha, root)


# schedule & rounds -------------------------------------------------------------------


def seed_key(seed: int):
    """Per-run hash key derived from an integer seed."""
    with np.errstate(over="ignore"):
        return np.uint64(K.seed_key(np.uint64(int(seed) & MASK64)))


@dataclass
class Schedule:
    seed: int
    t: int = 0

    @property
    def key(self):
        return seed_key(self.seed)

    def edge_at(self, t: int, m: int) -> int:
        with np.errstate(over="ignore"):
            return int(K.uniform_at(self.key, t, 0) * m)

    def edges(self, t0: int, count: int, m: int) -> np.ndarray:
        """Edge indices for steps ``t0+1 .. t0+count``."""
        with np.errstate(over="ignore"):
            return K.edge_draws(self.key, t0, count, m)

    def uniforms(self, t0: int, count: int, word: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            return K.uniforms(self.key, t0, count, word)

    def uniforms_at(self, t: int, layer_word: int) -> tuple[float, float]:
        with np.errstate(over="ignore"):
            return (float(K.uniform_at(self.key, t, layer_word)),
                    float(K.uniform_at(self.key, t, layer_word + 1)))


@dataclass
class RoundTracker:
    """Fair-schedule rounds: a round ends once every edge has been sampled."""

    edges: frozenset
    round: int = 0
    t: int = 0
    unseen: set = field(default_factory=set)
    boundaries: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        self.edges = frozenset(self.edges)
        if not self.unseen:
            self.unseen = set(self.edges)


def advance_round_tracker(tracker: RoundTracker, edge) -> RoundTracker:
    if edge not in tracker.edges:
        raise InvalidParameter(f"{edge} is not an edge of the graph")
    unseen = set(tracker.unseen)
    unseen.discard(edge)
    t = tracker.t + 1
    rnd, bounds = tracker.round, list(tracker.boundaries)
    if not unseen:
        rnd += 1
        bounds.append(t)
        unseen = set(tracker.edges)
    return RoundTracker(tracker.edges, rnd, t, unseen, bounds)


# records -------------------------------------------------------------------------------


@dataclass
class RunRecord:
    graph: dict
    stack: str
    seed: int
    steps: dict
    rounds: int
    capped: bool
    final: dict = field(default_factory=dict)
    total_steps: int = 0
    wall_time: float = field(default=0.0, compare=False)  # not serialised by default

    def to_dict(self, timing: bool = False) -> dict:
        d = {"graph": self.graph, "stack": self.stack, "seed": self.seed, "steps": self.steps,
             "rounds": self.rounds, "capped": self.capped, "final": self.final,
             "total_steps": self.total_steps}
        if timing:
            d["wall_time"] = self.wall_time
        return d

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(d["graph"], d["stack"], d["seed"], d["steps"], d["rounds"], d["capped"],
                   d.get("final", {}), d.get("total_steps", 0), d.get("wall_time", 0.0))

    @property
    def stable_step(self) -> int | None:
        """Step at which the whole stack became (and stayed) stable."""
        vals = list(self.steps.values())
        if any(v is None for v in vals):
            return None
        return max(vals) if vals else 0


# simulation ------------------------------------------------------------------------------


@dataclass
class StepInfo:
    t: int
    edge: tuple[int, int]
    edge_index: int
    changed: dict
    recoloured: bool


class Simulation:
    """Mutable run state: a configuration advanced by the seeded scheduler."""

    def __init__(self, graph: Graph, stack: ProtocolStack, config: Configuration, seed: int, t0: int = 0):
        if graph.m < 1:
            raise InvalidParameter("the scheduler needs at least one edge")
        if config.n != graph.n:
            raise InvalidParameter("configuration size does not match the graph")
        self.graph, self.stack, self.config = graph, stack, config
        self.seed = int(seed)
        self.t = int(t0)
        self.key = seed_key(self.seed)
        self.flags = stack.flags()
        m = graph.m
        self.bad = np.zeros((K.NLAYERS, m), dtype=np.int8)
        self.counts = np.zeros(K.NLAYERS, dtype=np.int64)
        self.meta = np.zeros(K.META_SIZE, dtype=np.int64)
        self.meta[K.M_UNSEEN] = m
        self.seen = np.full(m, -1, dtype=np.int64)
        self.first_hold = np.full(K.NLAYERS, -1, dtype=np.int64)
        self.refresh()

    def refresh(self) -> None:
        """Recompute all predicate bookkeeping from the configuration."""
        c = self.config
        g = self.graph
        K.recompute_all(self.flags, g.edges, g.indptr, g.nbrs, c.colour, c.stamp, c.parent, c.children,
                        c.token, c.mtok, c.mout, c.bit, c.counter, c.bmax, self.bad, self.counts, self.meta)
        ok = np.zeros(K.NLAYERS, dtype=np.bool_)
        K.layer_ok(self.flags, self.counts, self.meta, ok)
        for k in range(K.NLAYERS):
            if self.flags[k]:
                self.first_hold[k] = self.t if ok[k] else -1
        if all(self.first_hold[k] >= 0 for k in range(K.NLAYERS) if self.flags[k]):
            self.meta[K.M_ROUNDS_AT] = self.meta[K.M_ROUND]

    def _run(self, nsteps: int, tail: int = 0, stop: bool = False) -> None:
        c, g = self.config, self.graph
        with np.errstate(over="ignore"):
            self.t = int(K.run_steps(
                self.t, nsteps, self.key, self.flags, c.palette, g.edges, g.indptr, g.nbrs, g.inc,
                c.colour, c.stamp, c.parent, c.children, c.token, c.mtok, c.mout, c.bit, c.counter, c.bmax,
                self.bad, self.counts, self.meta, self.seen, self.first_hold, tail, stop))
        if self.meta[K.M_ERROR]:
            raise InvariantViolation(f"kernel reported invariant violation code {self.meta[K.M_ERROR]}")

    def step(self) -> StepInfo:
        self._run(1)
        e = int(self.meta[K.M_LAST_EDGE])
        mask = int(self.meta[K.M_LAST_MASK])
        changed = {layer.name: bool(mask >> layer.kind & 1) for layer in self.stack.layers}
        a, b = self.graph.edges[e]
        return StepInfo(self.t, (int(a), int(b)), e, changed, bool(self.meta[K.M_RECOL]))

    def run(self, nsteps: int) -> None:
        self._run(nsteps)

    def layer_stable(self) -> dict:
        """Kernel-tracked predicate per layer (each includes the layers it reads)."""
        return {layer.name: bool(self.first_hold[layer.kind] >= 0) for layer in self.stack.layers}

    @property
    def rounds(self) -> int:
        return int(self.meta[K.M_ROUND])

    @property
    def recolourings(self) -> int:
        return int(self.meta[K.M_RECOL_TOTAL])

    def run_until_stable(self, step_cap: int | None = None, tail: int | None = None,
                         descriptor: GraphDescriptor | dict | None = None) -> RunRecord:
        g = self.graph
        if step_cap is None:
            step_cap = default_step_cap(g.n)
        if step_cap < 1:
            raise InvalidParameter("step_cap must be >= 1")
        if tail is None:
            tail = default_tail(g.n, g.diameter)
        start = time.perf_counter()
        remaining = step_cap - self.t
        if remaining > 0:
            self._run(remaining, tail=tail, stop=True)
        wall = time.perf_counter() - start
        steps = {layer.name: (int(self.first_hold[layer.kind]) if self.first_hold[layer.kind] >= 0 else None)
                 for layer in self.stack.layers}
        capped = any(v is None for v in steps.values())
        rounds = self.rounds if capped else int(self.meta[K.M_ROUNDS_AT])
        if isinstance(descriptor, GraphDescriptor):
            gdict = descriptor.to_dict()
        elif descriptor is not None:
            gdict = dict(descriptor)
        else:
            gdict = {"family": "adhoc", "n": g.n, "m": g.m}
        return RunRecord(gdict, self.stack.name, self.seed, steps, rounds, capped,
                         final_summary(self.stack, self.config), self.t, wall)


def final_summary(stack: ProtocolStack, c: Configuration) -> dict:
    out = {}
    for layer in stack.layers:
        if layer.kind == K.COL:
            out["colours_used"] = int(len(np.unique(c.colour)))
        elif layer.kind == K.LEADER:
            out["leaders"] = int(c.token.sum())
        elif layer.kind == K.MAJ:
            counts = np.bincount(c.mout.astype(np.int64), minlength=2)
            out["outputs"] = {name: int(k) for name, k in zip("AB", counts[:2]) if k}
        elif layer.kind == K.COUNT:
            out["count_min"] = int(c.bmax.min())
    return out


# functional facade ----------------------------------------------------------------------------


def step(graph: Graph, stack: ProtocolStack, configuration: Configuration, schedule: Schedule):
    """One scheduler step. Returns ``(configuration', edge, changed)``; advances ``schedule.t``."""
    sim = Simulation(graph, stack, configuration.copy(), schedule.seed, t0=schedule.t)
    info = sim.step()
    schedule.t = sim.t
    return sim.config, info.edge, info.changed


def run_until_stable(graph: Graph, stack: ProtocolStack, initial: Configuration, schedule: Schedule,
                     step_cap: int | None = None, tail: int | None = None,
                     descriptor=None) -> RunRecord:
    sim = Simulation(graph, stack, initial.copy(), schedule.seed, t0=schedule.t)
    rec = sim.run_until_stable(step_cap, tail, descriptor)
    schedule.t = sim.t
    return rec
