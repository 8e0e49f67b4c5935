import itertools

import numpy as np
import pytest

from popproto import kernels as K
from popproto.engine import Configuration, Simulation
from popproto.graph import Graph, bfs_distances, generate_path, generate_random_bounded_degree_tree, generate_star
from popproto.instrument import InstrumentedRun
from popproto.orientation import (
    DISORIENTED,
    PROPER,
    WEAK,
    EccentricityTable,
    InstrumentationError,
    OrientationState,
    edge_status_codes,
    marker_step,
    orient_towards,
    orientation_stable_predicate,
    orientation_status,
    orientation_transition,
    pair_status,
    potential,
    root_of,
)
from popproto.stacks import make_stack

BOTTOM = 0


def reference_transition(cu, pu, chu, cv, pv, chv, initiator_is_u):
    """Direct transcription of the pairwise rule on Python sets."""
    chu, chv = set(chu), set(chv)

    def oriented(cx, px, chx, cy, py, chy):  # x -> y
        return py != cx and cy not in chx and cx in chy

    proper = (oriented(cu, pu, chu, cv, pv, chv) and pu == cv) or (oriented(cv, pv, chv, cu, pu, chu) and pv == cu)
    if proper:
        return (pu, chu), (pv, chv)
    if not initiator_is_u:
        (cu, pu, chu), (cv, pv, chv) = (cv, pv, chv), (cu, pu, chu)
    if cv in chu:  # Set-Edge-Orientation(u, v)
        pu = cv
        chu.discard(cv)
        chv.add(cu)
        if pv == cu:
            pv = BOTTOM
    else:  # Set-Edge-Orientation(v, u)
        pv = cu
        chv.discard(cu)
        chu.add(cv)
        if pu == cv:
            pu = BOTTOM
    if not initiator_is_u:
        (pu, chu), (pv, chv) = (pv, chv), (pu, chu)
    return (pu, chu), (pv, chv)


def config_from(g: Graph, colours, parents, children, palette=9):
    c = Configuration.blank(g.n, palette)
    c.colour[:] = colours
    c.parent[:] = parents
    for v, cs in enumerate(children):
        c.children[v, list(cs)] = 1
    return c


# status ---------------------------------------------------------------------------


def test_status_examples():
    cu, cv = 1, 2
    proper = pair_status(OrientationState(cv, frozenset()), cu, OrientationState(7, frozenset({cu})), cv)
    assert (proper.kind, proper.tail, proper.head) == (PROPER, 0, 1)
    for pu in (BOTTOM, 5):
        weak = pair_status(OrientationState(pu, frozenset()), cu, OrientationState(7, frozenset({cu})), cv)
        assert (weak.kind, weak.tail, weak.head) == (WEAK, 0, 1)
    fresh = pair_status(OrientationState(), cu, OrientationState(), cv)
    assert fresh.kind == DISORIENTED and not fresh.oriented


def test_status_on_configuration_and_codes():
    g = generate_path(3)
    c = config_from(g, [1, 2, 3], [BOTTOM, 3, BOTTOM], [set(), {1}, {2}])
    assert orientation_status(c.colour, c, (0, 1)).kind == WEAK
    assert orientation_status(c.colour, c, (1, 2)).kind == PROPER
    assert edge_status_codes(g, c).tolist() == [1, 2]


# transition --------------------------------------------------------------------------


def test_proper_edge_unchanged():
    su, sv = OrientationState(2, frozenset()), OrientationState(BOTTOM, frozenset({1}))
    for r in ((0.1, 0.9), (0.9, 0.1)):
        assert orientation_transition(su, 1, r[0], sv, 2, r[1]) == (su, sv)


def test_fresh_pair_initiator_u():
    u2, v2 = orientation_transition(OrientationState(), 1, 0.1, OrientationState(), 2, 0.8)
    assert v2.parent == 1 and 2 in u2.children
    assert pair_status(u2, 1, v2, 2).kind == PROPER


def test_all_local_cases_match_reference():
    """Every parent/children combination on one edge, both initiators."""
    cu, cv, other = 1, 2, 3
    cases = 0
    for pu, pv in itertools.product((BOTTOM, cv, other), (BOTTOM, cu, other)):
        for hu, hv in itertools.product((False, True), repeat=2):
            chu = {cv} if hu else set()
            chv = {cu} if hv else set()
            for init_u in (True, False):
                r = (0.1, 0.9) if init_u else (0.9, 0.1)
                su, sv = OrientationState(pu, frozenset(chu)), OrientationState(pv, frozenset(chv))
                got = orientation_transition(su, cu, r[0], sv, cv, r[1])
                want = reference_transition(cu, pu, chu, cv, pv, chv, init_u)
                assert (got[0].parent, set(got[0].children)) == want[0]
                assert (got[1].parent, set(got[1].children)) == want[1]
                after = pair_status(got[0], cu, got[1], cv)
                assert after.kind == PROPER  # the sampled edge is always repaired
                tail, head = (got[0], got[1]) if after.tail == 0 else (got[1], got[0])
                c_tail, c_head = (cu, cv) if after.tail == 0 else (cv, cu)
                assert tail.parent == c_head and c_tail in head.children and head.parent != c_tail
                cases += 1
    assert cases == 9 * 4 * 2


# predicate & root ---------------------------------------------------------------------------


def test_predicate_and_root_on_path():
    g = generate_path(6)
    c = config_from(g, [1, 2, 3, 1, 2, 3], [0] * 6, [set()] * 6)
    orient_towards(g, c, 2)
    assert orientation_stable_predicate(g, c) and root_of(g, c) == 2
    c.parent[0] = 5  # edge {0,1} becomes weak
    assert not orientation_stable_predicate(g, c)
    with pytest.raises(InstrumentationError):
        root_of(g, c)


def test_root_of_single_edge():
    g = generate_path(2)
    c = config_from(g, [1, 2], [2, BOTTOM], [set(), {1}])
    assert root_of(g, c) == 1


def stabilise(g, stack_name, seed, mode="fresh"):
    stack = make_stack(stack_name)
    sim = Simulation(g, stack, stack.initial_configuration(g, seed=seed, mode=mode), seed)
    rec = sim.run_until_stable(tail=1000)
    assert not rec.capped
    return sim


def test_star_root_unique():
    g = generate_star(7)
    roots = {root_of(g, stabilise(g, "orientation", s).config) for s in range(30)}
    assert roots  # centre or a leaf, each time unique
    assert roots <= set(range(7))


def test_path_five_root_unique_over_seeds():
    g = generate_path(5)
    for seed in range(100):
        c = stabilise(g, "orientation", seed).config
        tails = np.where(edge_status_codes(g, c) > 0, g.edges[:, 0], g.edges[:, 1])
        assert len(set(range(5)) - set(tails.tolist())) == 1
        assert root_of(g, c) not in tails


def test_stable_orientation_is_silent():
    g = generate_random_bounded_degree_tree(12, 3, 6)
    sim = stabilise(g, "orientation", 4)
    parent, children = sim.config.parent.copy(), sim.config.children.copy()
    sim.run(10_000)
    assert np.array_equal(parent, sim.config.parent) and np.array_equal(children, sim.config.children)


# markers & potential -----------------------------------------------------------------------


def weak_then_proper():
    """Path v1-v2-v3: {v1,v2} weak v1->v2, {v2,v3} proper v2->v3."""
    g = generate_path(3)
    return g, config_from(g, [1, 2, 3], [BOTTOM, 3, BOTTOM], [set(), {1}, {2}])


def test_potential_examples():
    g, c = weak_then_proper()
    markers = np.arange(g.m)
    assert potential(g, c, markers).tolist() == [2, 0]
    orient_towards(g, c, 0)
    assert potential(g, c, markers).tolist() == [0, 0]
    g2 = generate_path(2)
    leaf = config_from(g2, [1, 2], [BOTTOM, BOTTOM], [set(), {1}])
    assert potential(g2, leaf, np.arange(1)).tolist() == [1]
    with pytest.raises(InstrumentationError):
        potential(g2, config_from(g2, [1, 2], [0, 0], [set(), set()]), np.arange(1))


def test_eccentricity_table_matches_bfs():
    g = generate_random_bounded_degree_tree(25, 3, 2)
    ecc = EccentricityTable(g)
    for e, (a, b) in enumerate(g.edges.tolist()):
        d = bfs_distances(g, b, removed_edge=e)
        assert ecc(a, b) == d[d >= 0].max()


def test_marker_step_cases():
    g, c = weak_then_proper()
    codes = edge_status_codes(g, c)
    markers = np.array([0, 1])
    assert marker_step(g, markers, codes, 1).tolist() == [0, 1]  # proper sampled
    assert marker_step(g, markers, codes, 0).tolist() == [1, 0]  # swap with (v2, v3)
    c.parent[1] = BOTTOM  # v2 loses its proper outgoing edge
    codes = edge_status_codes(g, c)
    assert abs(codes[0]) == 1 and abs(codes[1]) == 1
    g2 = generate_path(2)
    leaf = config_from(g2, [1, 2], [BOTTOM, BOTTOM], [set(), {1}])
    assert marker_step(g2, np.array([0]), edge_status_codes(g2, leaf), 0).tolist() == [0]


# run-level invariants -----------------------------------------------------------------------


def test_disorientation_and_potential_lemmas_on_runs():
    samples = 0
    for seed in range(3):
        g = generate_random_bounded_degree_tree(30, 4, seed)
        stack = make_stack("orientation")
        c = stack.initial_configuration(g, seed=seed, mode="random")
        run = InstrumentedRun(g, stack, c, seed, checks=("disorientation", "potential"))
        run.run(4000)
        assert run.violations == []
        assert run.stats.performed["potential"] > 0
        samples += run.stats.marker_samples
        assert run.stats.marker_drops == run.stats.marker_samples
    assert samples > 0


def test_sampled_edge_repair():
    g = generate_random_bounded_degree_tree(20, 3, 3)
    stack = make_stack("orientation")
    sim = Simulation(g, stack, stack.initial_configuration(g, seed=1, mode="random"), 9)
    for _ in range(3000):
        before = edge_status_codes(g, sim.config)
        info = sim.step()
        assert abs(edge_status_codes(g, sim.config)[info.edge_index]) == 2
        assert info.changed["orientation"] == (abs(before[info.edge_index]) != 2)


def test_self_stabilisation_from_random_states():
    for seed in range(60):
        n = 5 + seed % 36
        g = generate_random_bounded_degree_tree(n, 4, seed)
        sim = stabilise(g, "orientation", seed, mode="random")
        assert orientation_stable_predicate(g, sim.config)
        root_of(g, sim.config)
