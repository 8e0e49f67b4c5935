"""Step-by-step instrumented runs: per-step invariant checks and trace snapshots.

Every check recomputes its quantity from the configuration with the pure
numpy/Python helpers in ``coloring``, ``orientation`` and ``apps``, so it is
independent of the kernel's incremental bookkeeping.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .apps import A, B, C, TokenLedger, ledger_step
from .coloring import conflict_sets
from .engine import Configuration, ProtocolStack, Simulation, StepInfo
from .graph import Graph, bfs_distances
from .orientation import (MarkerTracker, edge_status_codes, marker_step, potential, root_of,
                          status_counts)

CHECKS = ("locality", "palette", "conflict_freeze", "recolour_clearance", "disorientation",
          "potential", "conservation", "ledger", "depth", "leader_persistence", "count_sum")


@dataclass
class Violation:
    t: int
    check: str
    message: str


@dataclass
class CheckStats:
    """How often each check actually ran, plus event counters."""

    performed: dict = field(default_factory=lambda: {c: 0 for c in CHECKS})
    marker_samples: int = 0  # steps that sampled a weak marked edge
    marker_drops: int = 0  # ... on which that marker's potential fell


class InstrumentedRun:
    """Runs a stack one step at a time and checks the selected invariants.

    ``checks`` selects from ``CHECKS``; violations are collected rather than
    raised so a test can report all of them. ``sample_every`` controls how
    often ``snapshot`` fields are attached to trace events.
    """

    def __init__(self, graph: Graph, stack: ProtocolStack, config: Configuration, seed: int,
                 checks=CHECKS, sample_every: int = 1):
        unknown = set(checks) - set(CHECKS)
        if unknown:
            raise ValueError(f"unknown checks {sorted(unknown)}")
        self.g = graph
        self.stack = stack
        self.sim = Simulation(graph, stack, config, seed)
        self.checks = frozenset(checks)
        self.sample_every = max(1, int(sample_every))
        self.violations: list[Violation] = []
        self.stats = CheckStats()
        self.has_col = stack.has(K.COL)
        self.has_maj = stack.has(K.MAJ)
        c = self.sim.config
        self.diff0 = int((c.mtok == A).sum()) - int((c.mtok == B).sum())
        self.ledger = TokenLedger(c) if self.has_maj else None
        self.markers = MarkerTracker(graph)
        self.root: int | None = None
        self.root_dist: np.ndarray | None = None
        self._conflicts = conflict_sets(graph, c) if self._need_conflicts else None

    @property
    def _need_conflicts(self) -> bool:
        return self.has_col and bool(self.checks & {"conflict_freeze", "disorientation", "potential", "depth"})

    @property
    def config(self) -> Configuration:
        return self.sim.config

    @property
    def t(self) -> int:
        return self.sim.t

    def _fail(self, check: str, msg: str) -> None:
        self.violations.append(Violation(self.sim.t, check, msg))

    def _colouring_settled(self) -> bool:
        """Colours can no longer change (no conflicts, or no colouring layer)."""
        return not self.has_col or not self._conflicts[0]

    # one step -------------------------------------------------------------------

    def step(self) -> StepInfo:
        g, ch = self.g, self.checks
        before = self.sim.config.copy()
        want_codes = bool(ch & {"disorientation", "potential"}) and self._colouring_settled()
        codes_before = edge_status_codes(g, before) if want_codes else None
        phi_before = None
        if "potential" in ch and codes_before is not None and self.markers.maybe_attach(self.sim.t, codes_before):
            phi_before = potential(g, before, self.markers.markers, self.markers.ecc, codes_before)

        info = self.sim.step()
        after = self.sim.config
        u, v = info.edge
        st = self.stats.performed

        if "locality" in ch:
            st["locality"] += 1
            extra = before.changed_nodes(after) - {u, v}
            if extra:
                self._fail("locality", f"nodes {sorted(extra)} changed off the sampled edge {info.edge}")

        if self.has_col:
            if "palette" in ch:
                st["palette"] += 1
                if after.colour.min() < 1 or after.colour.max() > after.palette:
                    self._fail("palette", "colour outside the palette")
            if "recolour_clearance" in ch and info.recoloured:
                st["recolour_clearance"] += 1
                for x in (u, v):
                    live = np.flatnonzero(after.stamp[x] != -1)
                    if len(live) != 1:
                        self._fail("recolour_clearance", f"node {x} has {len(live)} live stamps")
                if after.stamp[u, after.colour[v]] != after.stamp[v, after.colour[u]]:
                    self._fail("recolour_clearance", "fresh stamps disagree")
            if self._need_conflicts:
                new = conflict_sets(g, after)
                if "conflict_freeze" in ch and not info.recoloured:
                    st["conflict_freeze"] += 1
                    if new[0] != self._conflicts[0]:
                        self._fail("conflict_freeze", f"conflict set changed on a non-recolouring step {info.edge}")
                self._conflicts = new

        if want_codes:
            codes_after = edge_status_codes(g, after)
            if "disorientation" in ch:
                st["disorientation"] += 1
                appeared = (codes_after == 0) & (codes_before != 0)
                if appeared.any():
                    self._fail("disorientation", f"edges {np.flatnonzero(appeared).tolist()} became disoriented")
            if phi_before is not None:
                self._check_potential(info, codes_before, codes_after, phi_before)

        if self.has_maj:
            self._check_majority(before, after, info)
        if self.stack.has(K.LEADER) and "leader_persistence" in ch:
            st["leader_persistence"] += 1
            if after.token.sum() == 0:
                self._fail("leader_persistence", "no leader token left")
        if self.stack.has(K.COUNT) and "count_sum" in ch:
            st["count_sum"] += 1
            if int(after.counter.sum()) != g.n:
                self._fail("count_sum", f"counter sum {int(after.counter.sum())} != {g.n}")
        return info

    def _check_potential(self, info, codes_before, codes_after, phi_before) -> None:
        g = self.g
        self.stats.performed["potential"] += 1
        sampled = info.edge_index
        markers_before = self.markers.markers
        try:
            self.markers.markers = marker_step(g, markers_before, codes_before, sampled, codes_after)
            phi_after = potential(g, self.sim.config, self.markers.markers, self.markers.ecc, codes_after)
        except RuntimeError as exc:
            self._fail("potential", str(exc))
            return
        grew = np.flatnonzero(phi_after > phi_before)
        if len(grew):
            self._fail("potential", f"potential rose for markers {grew.tolist()}")
        x = int(np.flatnonzero(markers_before == sampled)[0])
        if abs(codes_before[sampled]) == 1:
            self.stats.marker_samples += 1
            if phi_after[x] < phi_before[x]:
                self.stats.marker_drops += 1
            if phi_after[x] > max(0, phi_before[x] - 1):
                self._fail("potential", f"sampled marker {x} kept potential {phi_after[x]} (was {phi_before[x]})")

    def _check_majority(self, before, after, info) -> None:
        ch, st = self.checks, self.stats.performed
        if "conservation" in ch:
            st["conservation"] += 1
            diff = int((after.mtok == A).sum()) - int((after.mtok == B).sum())
            if diff != self.diff0:
                self._fail("conservation", f"#A-#B is {diff}, started at {self.diff0}")
        if "ledger" in ch or "depth" in ch:
            depth_before = None
            if self.root is not None:
                depth_before = self.root_dist[self.ledger.position].copy()
            try:
                st["ledger"] += 1
                ledger_step(self.ledger, before, after, info.edge)
            except RuntimeError as exc:
                self._fail("ledger", str(exc))
                return
            if depth_before is not None:
                st["depth"] += 1
                depth_after = self.root_dist[self.ledger.position]
                kind = self.ledger.kind
                ab = (kind != C) & (depth_after > depth_before)
                cc = (kind == C) & (depth_after < depth_before)
                if ab.any() or cc.any():
                    self._fail("depth", f"depth moved the wrong way for identities "
                                        f"{np.flatnonzero(ab | cc).tolist()}")
            elif "depth" in ch and self._oriented(after):
                # colours settled and all edges proper: the root is fixed from now on
                self.root = root_of(self.g, after)
                self.root_dist = bfs_distances(self.g, self.root)

    def _oriented(self, config: Configuration) -> bool:
        return self._colouring_settled() and bool(np.all(np.abs(edge_status_codes(self.g, config)) == 2))

    # driving --------------------------------------------------------------------

    def run(self, nsteps: int, trace=None) -> None:
        for _ in range(nsteps):
            info = self.step()
            if trace is not None:
                trace(self.event(info))

    def event(self, info: StepInfo) -> dict:
        """Trace line for one step; snapshot fields every ``sample_every`` steps."""
        ev = {"t": info.t, "edge": list(info.edge),
              "layers_changed": [k for k, v in info.changed.items() if v]}
        if info.t % self.sample_every == 0:
            ev.update(self.snapshot())
        return ev

    def snapshot(self) -> dict:
        return snapshot(self.g, self.stack, self.sim.config, self.markers if self.markers.markers is not None else None)


def snapshot(g: Graph, stack: ProtocolStack, c: Configuration, markers: MarkerTracker | None = None) -> dict:
    """Per-layer instrumentation fields for the current configuration."""
    out: dict = {}
    if stack.has(K.COL):
        total, st, co = conflict_sets(g, c)
        out.update(conflicts=len(total), stamp_conflicts=len(st), colour_conflicts=len(co))
    if stack.has(K.ORI):
        codes = edge_status_codes(g, c)
        out.update(status_counts(codes))
        if markers is not None and markers.markers is not None and not np.any(codes == 0):
            out["max_potential"] = int(potential(g, c, markers.markers, markers.ecc, codes).max(initial=0))
    if stack.has(K.LEADER):
        out["tokens"] = int(c.token.sum())
    if stack.has(K.MAJ):
        counts = np.bincount(c.mtok.astype(np.int64), minlength=3)
        out.update(tokens_A=int(counts[A]), tokens_B=int(counts[B]), tokens_C=int(counts[C]),
                   outputs_A=int((c.mout == A).sum()))
    if stack.has(K.COUNT):
        out.update(sum=int(c.counter.sum()), max_broadcast_min=int(c.bmax.min()))
    return out
