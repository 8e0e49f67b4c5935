"""Silence-predicate soundness on every tree with at most four nodes.

For each layer the predicate-true set S is enumerated from the module's own
predicates; the closure oracle in ``_reach`` then checks that no interaction
leaves S or changes an output.
"""
from __future__ import annotations

import itertools
from collections import Counter

import numpy as np

from popproto import kernels as K
from popproto.apps import (counting_stable_predicate, leader_stable_predicate, majority_stable_predicate,
                           two_colour_stable_predicate)
from popproto.coloring import colouring_stable_predicate
from popproto.engine import Configuration
from popproto.graph import Graph, all_labelled_trees
from popproto.orientation import orientation_stable_predicate, root_of

from _reach import P, free_children_bits, output_slices, pack, proper_orientations, unique_successors, \
    valid_colourings

OUTPUT = {K.COL: "colour", K.ORI: "parent", K.LEADER: "token", K.MAJ: "mout", K.TWO: "bit", K.COUNT: "bmax"}
APP_FIELDS = {K.LEADER: ("token",), K.MAJ: ("mtok", "mout"), K.TWO: ("bit",), K.COUNT: ("counter", "bmax")}
APP_PREDICATE = {K.LEADER: leader_stable_predicate, K.MAJ: majority_stable_predicate,
                 K.TWO: two_colour_stable_predicate, K.COUNT: counting_stable_predicate}


def flags_for(*kinds) -> np.ndarray:
    f = np.zeros(K.NLAYERS, dtype=np.int64)
    f[list(kinds)] = 1
    return f


class Tally:
    def __init__(self):
        self.checked = Counter()
        self.failures: list[str] = []

    def check(self, label: str, kind: int, flags, g: Graph, c: Configuration, members=None) -> None:
        """Every successor equals ``c`` (or, with ``members``, lies in it) with equal outputs."""
        self.checked[label] += 1
        x = pack(c)
        out = output_slices(g.n)
        for y in unique_successors(flags, c, g):
            for k in np.flatnonzero(flags):
                sl = out[OUTPUT[int(k)]]
                if not np.array_equal(x[sl], y[sl]):
                    self.failures.append(f"{label}: output of layer {int(k)} changed on {g.edges.tolist()}")
                    return
            if members is None:
                if not np.array_equal(x, y):
                    self.failures.append(f"{label}: state changed on {g.edges.tolist()}")
                    return
            elif y.tobytes() not in members:
                self.failures.append(f"{label}: successor left the predicate-true set on {g.edges.tolist()}")
                return


def _blank(g: Graph, colour) -> Configuration:
    c = Configuration.blank(g.n, P)
    c.colour[:] = colour
    return c


# colouring ------------------------------------------------------------------------------


def colouring_members(g: Graph, colour, expand_free: bool) -> list[Configuration]:
    """Predicate-true stamp assignments for a fixed colouring."""
    slots = [(v, int(colour[w])) for v in range(g.n) for w in g.neighbours(v)]
    free = [(v, c) for v in range(g.n) for c in range(1, P + 1) if (v, c) not in set(slots)]
    out = []
    for vals in itertools.product((-1, 0, 1), repeat=len(slots)):
        c = _blank(g, colour)
        for (v, col), x in zip(slots, vals):
            c.stamp[v, col] = x
        if not colouring_stable_predicate(g, c):
            continue
        if not expand_free:
            out.append(c)
            continue
        for extra in itertools.product((-1, 0, 1), repeat=len(free)):
            c2 = c.copy()
            for (v, col), x in zip(free, extra):
                c2.stamp[v, col] = x
            out.append(c2)
    return out


def check_colouring(t: Tally, trees) -> None:
    flags = flags_for(K.COL)
    for g in trees:
        # recolour draws are uniform, so at n = 4 colourings are taken up to relabelling
        for colour in valid_colourings(g, canonical=g.n >= 4):
            members = colouring_members(g, colour, expand_free=False)
            keys = {pack(c).tobytes() for c in members}
            for c in members:
                t.check("coloring", K.COL, flags, g, c, keys)
        if g.n == 2:  # every stamp entry, including those no edge reads
            for colour in valid_colourings(g, canonical=True):
                members = colouring_members(g, colour, expand_free=True)
                keys = {pack(c).tobytes() for c in members}
                for c in members:
                    t.check("coloring-all-stamps", K.COL, flags, g, c, keys)


# orientation and applications -------------------------------------------------------------------


def app_domains(n: int) -> dict:
    counter_vals = range(n + 1) if n <= 3 else (0, 1, n)
    bmax_vals = range(n + 1) if n <= 3 else (n - 1, n, n + 1)
    return {
        K.LEADER: [(np.array(tk),) for tk in itertools.product((0, 1), repeat=n)],
        K.MAJ: [(np.array(tk), np.array(o)) for tk in itertools.product((0, 1, 2), repeat=n)
                for o in itertools.product((0, 1), repeat=n)],
        K.TWO: [(np.array(b),) for b in itertools.product((0, 1), repeat=n)],
        K.COUNT: [(np.array(cn), np.array(bm)) for cn in itertools.product(counter_vals, repeat=n)
                  for bm in itertools.product(bmax_vals, repeat=n)],
    }


def with_app(c: Configuration, kind: int, vals) -> Configuration:
    c2 = c.copy()
    for f, v in zip(APP_FIELDS[kind], vals):
        getattr(c2, f)[:] = v
    return c2


def check_orientation_and_apps(t: Tally, trees) -> None:
    ori = flags_for(K.ORI)
    for g in trees:
        domains = app_domains(g.n)
        good_apps: dict = {}  # (kind, root) -> predicate-true app states
        for colour in valid_colourings(g, canonical=True):
            free = free_children_bits(g, colour)
            for parent, children in proper_orientations(g, colour):
                base = _blank(g, colour)
                base.parent[:], base.children[:] = parent, children
                if not orientation_stable_predicate(g, base):
                    t.failures.append("orientation: enumerated configuration fails the predicate")
                    continue
                for bits in itertools.product((0, 1), repeat=len(free)):
                    c = base.copy()
                    for (v, col), b in zip(free, bits):
                        c.children[v, col] = b
                    t.check("orientation", K.ORI, ori, g, c)
                root = root_of(g, base)
                for kind, dom in domains.items():
                    key = (kind, root)
                    if key not in good_apps:
                        good_apps[key] = [v for v in dom if APP_PREDICATE[kind](g, with_app(base, kind, v))]
                    for vals in good_apps[key]:
                        c = with_app(base, kind, vals)
                        t.check(f"orientation+{OUTPUT[kind]}", kind, flags_for(K.ORI, kind), g, c)


def run(max_n: int = 4) -> Tally:
    t = Tally()
    trees = [g for n in range(2, max_n + 1) for g in all_labelled_trees(n)]
    check_colouring(t, trees)
    check_orientation_and_apps(t, trees)
    return t
