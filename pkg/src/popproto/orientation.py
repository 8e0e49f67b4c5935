"""Self-stabilising tree orientation over a 2-hop colouring, with the
edge-marker / potential instrumentation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .engine import Configuration, ProtocolLayer
from .graph import Graph, bfs_distances

PROPER, WEAK, DISORIENTED = "proper", "weak", "disoriented"


class InstrumentationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OrientationState:
    parent: int = 0  # 0 = no parent
    children: frozenset = frozenset()


@dataclass(frozen=True)
class OrientationStatus:
    kind: str
    tail: int | None = None  # child end
    head: int | None = None  # parent end

    @property
    def oriented(self) -> bool:
        return self.kind != DISORIENTED


def _pair_arrays(states, colours):
    top = max([*colours, *(s.parent for s in states), *(max(s.children, default=0) for s in states)])
    colour = np.array(colours, dtype=np.int32)
    parent = np.array([s.parent for s in states], dtype=np.int32)
    children = np.zeros((2, top + 1), dtype=np.uint8)
    for i, s in enumerate(states):
        children[i, list(s.children)] = 1
    return colour, parent, children


def _from_code(code: int, a: int, b: int) -> OrientationStatus:
    if code == 0:
        return OrientationStatus(DISORIENTED)
    kind = PROPER if abs(code) == 2 else WEAK
    return OrientationStatus(kind, a, b) if code > 0 else OrientationStatus(kind, b, a)


def orientation_status(colours, config: Configuration, edge) -> OrientationStatus:
    a, b = edge
    return _from_code(int(K.edge_status(np.asarray(colours), config.parent, config.children, a, b)), a, b)


def pair_status(state_u: OrientationState, colour_u: int, state_v: OrientationState, colour_v: int):
    colour, parent, children = _pair_arrays((state_u, state_v), (colour_u, colour_v))
    return _from_code(int(K.edge_status(colour, parent, children, 0, 1)), 0, 1)


def orientation_transition(state_u: OrientationState, colour_u: int, r_u: float,
                           state_v: OrientationState, colour_v: int, r_v: float):
    """Returns ``(state_u', state_v')``; the initiator is the endpoint with smaller r."""
    colour, parent, children = _pair_arrays((state_u, state_v), (colour_u, colour_v))
    K.orientation_interact(colour, parent, children, 0, 1, r_u, r_v)
    return tuple(
        OrientationState(int(parent[i]), frozenset(np.flatnonzero(children[i]).tolist())) for i in range(2)
    )


def edge_status_codes(g: Graph, config: Configuration, colours=None) -> np.ndarray:
    """Per-edge status codes: 0 disoriented, +-1 weak, +-2 proper (sign: a->b positive)."""
    col = config.colour if colours is None else np.asarray(colours)
    a, b = g.edges[:, 0], g.edges[:, 1]
    ca, cb = col[a], col[b]
    par, ch = config.parent, config.children
    ab = (par[b] != ca) & (ch[a, cb] == 0) & (ch[b, ca] == 1)
    ba = (par[a] != cb) & (ch[b, ca] == 0) & (ch[a, cb] == 1)
    codes = np.zeros(g.m, dtype=np.int8)
    codes[ab] = np.where(par[a][ab] == cb[ab], 2, 1)
    codes[ba] = np.where(par[b][ba] == ca[ba], -2, -1)
    return codes


def status_counts(codes: np.ndarray) -> dict:
    mag = np.abs(codes)
    return {"disoriented": int((mag == 0).sum()), "weak": int((mag == 1).sum()), "proper": int((mag == 2).sum())}


def orientation_stable_predicate(g: Graph, config: Configuration, colours=None) -> bool:
    return bool(np.all(np.abs(edge_status_codes(g, config, colours)) == 2))


def root_of(g: Graph, config: Configuration, colours=None) -> int:
    """The unique node without a properly oriented outgoing edge."""
    codes = edge_status_codes(g, config, colours)
    if not np.all(np.abs(codes) == 2):
        raise InstrumentationError("root_of needs every edge properly oriented")
    tails = np.where(codes > 0, g.edges[:, 0], g.edges[:, 1])
    roots = np.setdiff1d(np.arange(g.n), tails)
    if len(roots) != 1:
        raise InstrumentationError(f"expected a unique root, found {roots.tolist()}")
    return int(roots[0])


def orient_towards(g: Graph, config: Configuration, root: int) -> None:
    """Write parent/children so every edge is properly oriented toward ``root``."""
    config.parent[:] = 0
    config.children[:] = 0
    dist = bfs_distances(g, root)
    for a, b in g.edges:
        child, par = (a, b) if dist[a] > dist[b] else (b, a)
        config.parent[child] = config.colour[par]
        config.children[par, config.colour[child]] = 1


# markers & potential -------------------------------------------------------------


class EccentricityTable:
    """``D(e)`` per directed edge: eccentricity of the head inside the component
    of ``G - e`` that contains it."""

    def __init__(self, g: Graph):
        self.g = g
        self._cache: dict = {}

    def __call__(self, tail: int, head: int) -> int:
        key = (tail, head)
        if key not in self._cache:
            e = self.g.edge_index(tail, head)
            d = bfs_distances(self.g, head, removed_edge=e)
            self._cache[key] = int(d.max())
        return self._cache[key]


def head_of(code: int, a: int, b: int) -> tuple[int, int]:
    return (a, b) if code > 0 else (b, a)


def potential(g: Graph, config: Configuration, markers: np.ndarray, ecc: EccentricityTable | None = None,
              codes: np.ndarray | None = None) -> np.ndarray:
    """Potential per marker; ``markers[x]`` is the edge index carrying marker x."""
    ecc = ecc or EccentricityTable(g)
    codes = edge_status_codes(g, config) if codes is None else codes
    if np.any(codes == 0):
        raise InstrumentationError("potential is undefined while an edge is disoriented")
    phi = np.zeros(len(markers), dtype=np.int64)
    for x, e in enumerate(markers):
        c = codes[e]
        if abs(c) == 1:
            tail, head = head_of(c, *g.edges[e])
            phi[x] = 1 + ecc(int(tail), int(head))
    return phi


def marker_step(g: Graph, markers: np.ndarray, codes_before: np.ndarray, sampled: int,
                codes_after: np.ndarray | None = None) -> np.ndarray:
    """Swap the sampled weak edge's marker with the head's proper outgoing edge, if any."""
    markers = markers.copy()
    c = codes_before[sampled]
    if abs(c) != 1:
        return markers
    _, v = head_of(c, *g.edges[sampled])
    outgoing = []
    for e in g.incident_edges(v):
        ce = codes_before[e]
        if abs(ce) == 2:
            tail, _ = head_of(ce, *g.edges[e])
            if tail == v:
                outgoing.append(int(e))
    if len(outgoing) > 1:
        raise InstrumentationError(f"node {v} has {len(outgoing)} proper outgoing edges")
    if outgoing:
        e2 = outgoing[0]
        pos = np.argsort(markers)  # inverse: edge -> marker
        x1, x2 = pos[sampled], pos[e2]
        markers[x1], markers[x2] = e2, sampled
    return markers


@dataclass
class MarkerTracker:
    """Marker bijection, attached at the first step with no disoriented edge."""

    g: Graph
    markers: np.ndarray | None = None
    attached_at: int | None = None
    ecc: EccentricityTable = field(init=False)

    def __post_init__(self):
        self.ecc = EccentricityTable(self.g)

    def maybe_attach(self, t: int, codes: np.ndarray) -> bool:
        if self.markers is None and np.all(codes != 0):
            self.markers = np.arange(self.g.m)
            self.attached_at = t
        return self.markers is not None


# layer --------------------------------------------------------------------------------


def _init(g: Graph, config: Configuration, inputs, rng, mode):
    if inputs is not None:
        parents, children = inputs
        config.parent[:] = parents
        config.children[:] = 0
        for v, cs in enumerate(children):
            config.children[v, list(cs)] = 1
        return
    if mode == "fresh":
        config.parent[:] = 0
        config.children[:] = 0
    else:
        p = config.palette
        config.parent[:] = rng.integers(0, p + 1, size=g.n)
        config.children[:, 1:] = rng.integers(0, 2, size=(g.n, p))
        config.children[:, 0] = 0


def orientation_layer() -> ProtocolLayer:
    return ProtocolLayer(
        name="orientation",
        kind=K.ORI,
        provides="orientation",
        reads=("colour",),
        init=_init,
        transition=orientation_transition,
        output=lambda config: config.parent.copy(),
        stable_predicate=orientation_stable_predicate,
    )
