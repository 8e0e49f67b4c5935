"""Self-stabilising 2-hop colouring with stamps, and conflict instrumentation."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .engine import Configuration, ProtocolLayer
from .graph import Graph, greedy_two_hop_colouring

ALPHA = 7
BOT = -1  # cleared stamp


def palette_size(degree_bound: int, alpha: int = ALPHA) -> int:
    return alpha * degree_bound ** 2


@dataclass
class ColouringState:
    """Colour in ``1..P`` and a stamp table indexed by colour (slot 0 unused)."""

    colour: int
    stamp: np.ndarray

    @classmethod
    def cleared(cls, colour: int, palette: int) -> "ColouringState":
        return cls(colour, np.full(palette + 1, BOT, dtype=np.int8))

    def __post_init__(self):
        self.stamp = np.asarray(self.stamp, dtype=np.int8)
        if not 1 <= self.colour <= len(self.stamp) - 1:
            raise ValueError("colour outside palette")

    def __eq__(self, other):
        return (isinstance(other, ColouringState) and self.colour == other.colour
                and np.array_equal(self.stamp, other.stamp))


@dataclass(frozen=True)
class ConflictClassification:
    stamp_conflict: bool
    colour_conflict: bool

    @property
    def is_conflict(self) -> bool:
        return self.stamp_conflict or self.colour_conflict


def colouring_transition(state_u: ColouringState, r_u: float, state_v: ColouringState, r_v: float):
    """Returns ``(state_u', state_v', recoloured)``."""
    palette = len(state_u.stamp) - 1
    colour = np.array([state_u.colour, state_v.colour], dtype=np.int32)
    stamp = np.vstack([state_u.stamp, state_v.stamp]).astype(np.int8)
    recol, _ = K.colouring_interact(colour, stamp, 0, 1, r_u, r_v, palette)
    return (ColouringState(int(colour[0]), stamp[0].copy()),
            ColouringState(int(colour[1]), stamp[1].copy()), bool(recol))


def _neighbour_colour_counts(g: Graph, colour) -> list[Counter]:
    return [Counter(colour[g.neighbours(v)].tolist()) for v in range(g.n)]


def classify_edge(g: Graph, config: Configuration, edge) -> ConflictClassification:
    a, b = edge
    col = config.colour
    sa, sb = int(config.stamp[a, col[b]]), int(config.stamp[b, col[a]])
    stamp_c = sa != BOT and sb != BOT and sa != sb
    colour_c = any(w != a and col[w] == col[a] for w in g.neighbours(b)) or any(
        w != b and col[w] == col[b] for w in g.neighbours(a)
    )
    return ConflictClassification(bool(stamp_c), bool(colour_c))


def conflict_sets(g: Graph, config: Configuration) -> tuple[set, set, set]:
    """``(C, C_stamp, C_colour)`` as sets of ``(a, b)`` with ``a < b``.

    A colour conflict on ``{a, b}`` means b has another neighbour coloured like
    a (or vice versa): with per-node neighbour-colour counts that is a count of
    at least two.
    """
    col = config.colour
    counts = _neighbour_colour_counts(g, col)
    stamp_set, colour_set = set(), set()
    for a, b in g.edges:
        a, b = int(a), int(b)
        sa, sb = config.stamp[a, col[b]], config.stamp[b, col[a]]
        if sa != BOT and sb != BOT and sa != sb:
            stamp_set.add((a, b))
        if counts[b][col[a]] >= 2 or counts[a][col[b]] >= 2:
            colour_set.add((a, b))
    return stamp_set | colour_set, stamp_set, colour_set


def conflict_edges(g: Graph, config: Configuration) -> set:
    return conflict_sets(g, config)[0]


def colouring_stable_predicate(g: Graph, config: Configuration) -> bool:
    return not conflict_edges(g, config)


def build_path_extension(g: Graph, config: Configuration) -> dict:
    """Balanced path extension on the colour-conflict edges.

    Each colour-conflict edge is oriented ``(u, v)`` so that some ``(u, v, w)``
    is a conflict path; if both directions qualify the head is the smaller
    node id. It then maps to ``{v, w}`` where ``w`` follows ``u`` cyclically
    among v's neighbours of u's colour, ordered by node id.
    """
    col = config.colour
    _, _, colour_set = conflict_sets(g, config)
    same = defaultdict(list)  # (v, colour) -> sorted neighbours
    for v in range(g.n):
        for w in sorted(g.neighbours(v).tolist()):
            same[(v, int(col[w]))].append(w)

    def witnesses(u, v):
        return len(same[(v, int(col[u]))]) >= 2

    f = {}
    for a, b in sorted(colour_set):
        heads = [h for t, h in ((a, b), (b, a)) if witnesses(t, h)]
        head = min(heads)
        tail = a if head == b else b
        ring = same[(head, int(col[tail]))]
        w = ring[(ring.index(tail) + 1) % len(ring)]
        f[(a, b)] = (min(head, w), max(head, w))
    return f


def fixed_colouring(g: Graph, palette: int) -> np.ndarray:
    return greedy_two_hop_colouring(g, palette)


# layer -----------------------------------------------------------------------------


def _init(g: Graph, config: Configuration, inputs, rng, mode):
    if inputs is not None:
        config.colour[:] = np.asarray(inputs, dtype=np.int32)
        config.stamp[:] = BOT
        return
    if mode == "fresh":
        config.colour[:] = 1
        config.stamp[:] = BOT
    else:
        p = config.palette
        config.colour[:] = rng.integers(1, p + 1, size=g.n)
        config.stamp[:, 1:] = rng.integers(-1, 2, size=(g.n, p))
        config.stamp[:, 0] = BOT


def colouring_layer() -> ProtocolLayer:
    return ProtocolLayer(
        name="coloring",
        kind=K.COL,
        provides="colour",
        reads=(),
        init=_init,
        transition=colouring_transition,
        output=lambda config: config.colour.copy(),
        stable_predicate=colouring_stable_predicate,
    )
