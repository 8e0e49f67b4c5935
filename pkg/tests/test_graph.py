import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popproto.graph import (
    DisconnectedGraph,
    Graph,
    GraphDescriptor,
    InvalidParameter,
    all_labelled_trees,
    bfs_distances,
    diameter,
    generate_balanced_binary_tree,
    generate_lower_bound_tree,
    generate_path,
    generate_random_bounded_degree_tree,
    generate_star,
    greedy_two_hop_colouring,
    is_valid_two_hop_colouring,
    max_degree,
    pruefer_to_tree,
    read_edge_list,
    write_edge_list,
)


def floyd_warshall(g: Graph) -> np.ndarray:
    """All-pairs hop distances by dense relaxation; independent of BFS."""
    inf = 10 ** 9
    d = np.full((g.n, g.n), inf, dtype=np.int64)
    np.fill_diagonal(d, 0)
    for a, b in g.edges:
        d[a, b] = d[b, a] = 1
    for k in range(g.n):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    return d


def brute_two_hop_valid(g: Graph, colours) -> bool:
    adj = g.adjacency
    for v in range(g.n):
        for u, w in itertools.combinations(adj[v], 2):
            if colours[u] == colours[w]:
                return False
    return True


def random_tree(rng, n):
    if n == 1:
        return Graph(1, [])
    if n == 2:
        return Graph(2, [(0, 1)])
    return pruefer_to_tree(rng.integers(0, n, size=n - 2).tolist(), n)


# structure -----------------------------------------------------------------------


def test_graph_rejects_bad_edges():
    with pytest.raises(InvalidParameter):
        Graph(3, [(0, 0)])
    with pytest.raises(InvalidParameter):
        Graph(3, [(0, 1), (1, 0)])
    with pytest.raises(InvalidParameter):
        Graph(3, [(0, 3)])
    with pytest.raises(InvalidParameter):
        Graph(0, [])


def test_adjacency_consistent_with_edges():
    g = generate_random_bounded_degree_tree(40, 3, seed=7)
    for e, (a, b) in enumerate(g.edges):
        assert b in g.neighbours(a) and a in g.neighbours(b)
        assert g.edge_index(a, b) == e == g.edge_index(b, a)
    assert sum(len(x) for x in g.adjacency) == 2 * g.m


def test_path_small_cases():
    g = generate_path(2)
    assert g.edges.tolist() == [[0, 1]]
    g5 = generate_path(5)
    assert diameter(g5) == 4 and max_degree(g5) == 2 and g5.is_tree
    g1 = generate_path(1)
    assert g1.m == 0 and g1.diameter == 0
    with pytest.raises(InvalidParameter):
        generate_path(0)


def test_path_and_star_metrics():
    assert (generate_path(10).diameter, generate_path(10).max_degree) == (9, 2)
    s = generate_star(10)
    assert (s.diameter, s.max_degree) == (2, 9)


def test_balanced_binary_tree():
    g7 = generate_balanced_binary_tree(7)
    assert bfs_distances(g7, 0).max() == 2 and g7.max_degree == 3
    assert generate_balanced_binary_tree(1).m == 0
    g10 = generate_balanced_binary_tree(10)
    assert g10.diameter == floyd_warshall(g10).max() == 5
    with pytest.raises(InvalidParameter):
        generate_balanced_binary_tree(0)


@pytest.mark.parametrize("n", [1, 2, 3, 15, 16, 100, 1000])
def test_balanced_binary_depth_bound(n):
    g = generate_balanced_binary_tree(n)
    assert g.is_tree
    assert bfs_distances(g, 0).max() <= math.ceil(math.log2(n + 1))


def test_random_bounded_degree_tree():
    g3 = generate_random_bounded_degree_tree(3, 2, seed=0)
    assert sorted(g3.degrees.tolist()) == [1, 1, 2]
    g = generate_random_bounded_degree_tree(50, 3, seed=1)
    assert g.max_degree <= 3 and g.m == 49 and g.is_tree and g.degree_bound == 3
    again = generate_random_bounded_degree_tree(50, 3, seed=1)
    assert np.array_equal(g.edges, again.edges)
    with pytest.raises(InvalidParameter):
        generate_random_bounded_degree_tree(5, 1, seed=0)


def test_lower_bound_tree_census():
    g = generate_lower_bound_tree(128, 8)
    assert g.n == 128 and g.is_tree
    # the path occupies nodes 0..63; each side tree hangs off one endpoint
    path = set(range(64))
    side = [v for v in range(128) if v not in path]
    cut = Graph(128, [e for e in g.edges.tolist() if not (e[0] in path) ^ (e[1] in path)])
    comp_sizes = []
    seen = set()
    for v in side:
        if v in seen:
            continue
        comp = set(np.flatnonzero(bfs_distances(cut, v) >= 0).tolist())
        seen |= comp
        comp_sizes.append(len(comp))
    assert sorted(comp_sizes) == [32, 32]
    assert 64 <= g.diameter <= 64 + 2 * math.ceil(math.log2(32)) + 2


def test_lower_bound_tree_pure_path_and_errors():
    g = generate_lower_bound_tree(64, 8)
    assert g.max_degree == 2 and g.diameter == 63
    with pytest.raises(InvalidParameter):
        generate_lower_bound_tree(128, 20)
    with pytest.raises(InvalidParameter):
        generate_lower_bound_tree(128, 6)  # below ceil(log2 n)


def test_lower_bound_tree_sweep_node_count():
    for n in range(64, 513, 37):
        for k in range(math.ceil(math.log2(n)), n // 8 + 1):
            g = generate_lower_bound_tree(n, k)
            assert g.n == n and g.m == n - 1


def test_generators_connected_trees():
    for g in [generate_path(33), generate_star(9), generate_balanced_binary_tree(70),
              generate_random_bounded_degree_tree(70, 4, 3), generate_lower_bound_tree(100, 7)]:
        assert g.is_connected and g.m == g.n - 1


# metrics ------------------------------------------------------------------------


def test_diameter_matches_floyd_warshall_on_random_trees():
    rng = np.random.default_rng(11)
    for _ in range(200):
        g = random_tree(rng, int(rng.integers(1, 51)))
        assert g.diameter == floyd_warshall(g).max()


def test_diameter_on_cycle_and_disconnected():
    cycle = Graph(6, [(i, (i + 1) % 6) for i in range(6)])
    assert diameter(cycle) == 3
    with pytest.raises(DisconnectedGraph):
        diameter(Graph(4, [(0, 1), (2, 3)]))


def test_bfs_with_removed_edge():
    g = generate_path(5)
    d = bfs_distances(g, 0, removed_edge=g.edge_index(1, 2))
    assert d.tolist() == [0, 1, -1, -1, -1]


# colourings -------------------------------------------------------------------


def test_two_hop_validity_examples():
    p = generate_path(3)
    assert not is_valid_two_hop_colouring(p, [1, 2, 1])
    assert is_valid_two_hop_colouring(Graph(2, [(0, 1)]), [4, 4])
    g = generate_random_bounded_degree_tree(30, 4, 2)
    assert is_valid_two_hop_colouring(g, np.arange(30))


def test_two_hop_validity_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        g = random_tree(rng, n)
        colours = rng.integers(1, 5, size=n)
        assert is_valid_two_hop_colouring(g, colours) == brute_two_hop_valid(g, colours)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(2, 5), st.integers(0, 10 ** 6))
def test_greedy_colouring_is_valid(n, cap, seed):
    g = generate_random_bounded_degree_tree(n, cap, seed)
    c = greedy_two_hop_colouring(g)
    assert brute_two_hop_valid(g, c)
    assert c.max() <= g.max_degree ** 2 + 1


# enumeration, descriptors, files ----------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_all_labelled_trees_cayley(n):
    trees = list(all_labelled_trees(n))
    assert len(trees) == max(1, n ** (n - 2))
    assert len({t.edges.tobytes() for t in trees}) == len(trees)
    assert all(t.is_tree for t in trees)


def test_descriptor_roundtrip_and_build(tmp_path):
    d = GraphDescriptor.from_json('{"family":"random","n":20,"delta_cap":3,"seed":4}')
    assert d.family == "random_bounded_degree"
    assert GraphDescriptor.from_dict(json.loads(json.dumps(d.to_dict()))) == d
    assert np.array_equal(d.build().edges, d.build().edges)
    assert GraphDescriptor("tnk", n=128, k=8).build().n == 128
    with pytest.raises(InvalidParameter):
        GraphDescriptor("hypercube", n=8)
    with pytest.raises(InvalidParameter):
        GraphDescriptor("random", n=8).build()


def test_edge_list_roundtrip(tmp_path):
    g = generate_random_bounded_degree_tree(25, 3, 9)
    f = tmp_path / "g.txt"
    write_edge_list(g, f)
    text = f.read_bytes()
    assert text.startswith(b"25 24\n") and b"\r" not in text
    assert read_edge_list(f) == g
    assert GraphDescriptor("from_file", path=str(f)).build() == g
