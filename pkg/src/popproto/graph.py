"""Undirected graphs, tree generators and BFS metrics."""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class InvalidParameter(ValueError):
    """A generator or descriptor received out-of-range parameters."""


class DisconnectedGraph(ValueError):
    pass


class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    Edges are stored once as ``(a, b)`` with ``a < b``, in the order given.
    ``degree_bound`` is the degree cap of the family the graph came from; the
    colouring palette is sized from it. It defaults to the realised maximum
    degree.
    """

    def __init__(self, n: int, edges, degree_bound: int | None = None):
        if n < 1:
            raise InvalidParameter("a graph needs at least one node")
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise InvalidParameter("edge endpoint out of range")
        if np.any(arr[:, 0] == arr[:, 1]):
            raise InvalidParameter("self-loops are not allowed")
        arr = np.sort(arr, axis=1)
        if len({(int(a), int(b)) for a, b in arr}) != len(arr):
            raise InvalidParameter("duplicate edge")
        arr.setflags(write=False)
        self.n = int(n)
        self.edges = arr
        self.m = len(arr)

        deg = np.bincount(arr.ravel(), minlength=n) if self.m else np.zeros(n, dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        nbrs = np.empty(2 * self.m, dtype=np.int64)
        inc = np.empty(2 * self.m, dtype=np.int64)
        fill = indptr[:-1].copy()
        for e, (a, b) in enumerate(arr):
            nbrs[fill[a]], inc[fill[a]] = b, e
            fill[a] += 1
            nbrs[fill[b]], inc[fill[b]] = a, e
            fill[b] += 1
        for a in (indptr, nbrs, inc):
            a.setflags(write=False)
        self.indptr, self.nbrs, self.inc = indptr, nbrs, inc
        self.degrees = deg
        self.degree_bound = int(degree_bound) if degree_bound is not None else self.max_degree

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"

    def __eq__(self, other):
        return (
            isinstance(other, Graph)
            and self.n == other.n
            and np.array_equal(self.edges, other.edges)
        )

    def __hash__(self):
        return hash((self.n, self.edges.tobytes()))

    def neighbours(self, v: int) -> np.ndarray:
        return self.nbrs[self.indptr[v] : self.indptr[v + 1]]

    def incident_edges(self, v: int) -> np.ndarray:
        return self.inc[self.indptr[v] : self.indptr[v + 1]]

    @property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbours(v).tolist() for v in range(self.n)]

    def edge_index(self, u: int, v: int) -> int:
        for k in range(self.indptr[u], self.indptr[u + 1]):
            if self.nbrs[k] == v:
                return int(self.inc[k])
        raise KeyError((u, v))

    @cached_property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    @cached_property
    def is_connected(self) -> bool:
        return bool(np.all(bfs_distances(self, 0) >= 0))

    @cached_property
    def is_tree(self) -> bool:
        return self.m == self.n - 1 and self.is_connected

    @cached_property
    def diameter(self) -> int:
        return diameter(self)


def bfs_distances(g: Graph, source: int, removed_edge: int = -1) -> np.ndarray:
    """Hop distances from ``source``; -1 for unreachable nodes.

    ``removed_edge`` optionally deletes one edge (by index) from the graph.
    """
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        x = queue.popleft()
        for k in range(g.indptr[x], g.indptr[x + 1]):
            if g.inc[k] == removed_edge:
                continue
            y = g.nbrs[k]
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def diameter(g: Graph) -> int:
    """Exact diameter: double BFS on trees, all-pairs BFS otherwise."""
    d0 = bfs_distances(g, 0)
    if np.any(d0 < 0):
        raise DisconnectedGraph("diameter of a disconnected graph is undefined")
    if g.m == g.n - 1:
        far = int(np.argmax(d0))
        return int(bfs_distances(g, far).max())
    return max(int(bfs_distances(g, s).max()) for s in range(g.n))


def max_degree(g: Graph) -> int:
    return g.max_degree


# generators ----------------------------------------------------------------


def generate_path(n: int) -> Graph:
    if n < 1:
        raise InvalidParameter("path needs n >= 1")
    return Graph(n, [(i, i + 1) for i in range(n - 1)], degree_bound=2 if n > 2 else max(n - 1, 1))


def generate_star(n: int) -> Graph:
    if n < 1:
        raise InvalidParameter("star needs n >= 1")
    return Graph(n, [(0, i) for i in range(1, n)], degree_bound=max(n - 1, 1))


def _binary_edges(n: int, offset: int = 0) -> list[tuple[int, int]]:
    # breadth-first, left-to-right: node i's parent is (i - 1) // 2
    return [(offset + (i - 1) // 2, offset + i) for i in range(1, n)]


def generate_balanced_binary_tree(n: int) -> Graph:
    if n < 1:
        raise InvalidParameter("binary tree needs n >= 1")
    return Graph(n, _binary_edges(n), degree_bound=3 if n > 3 else max(n - 1, 1))


def generate_random_bounded_degree_tree(n: int, delta_cap: int, seed: int) -> Graph:
    """Uniform attachment: node i joins a uniform earlier node of degree < cap."""
    if n < 1:
        raise InvalidParameter("tree needs n >= 1")
    if delta_cap < 2 and n >= 3:
        raise InvalidParameter("delta_cap must be >= 2")
    rng = np.random.default_rng(seed)
    deg = np.zeros(n, dtype=np.int64)
    open_nodes = [0]
    slot = {0: 0}
    edges = []
    for i in range(1, n):
        j = open_nodes[int(rng.integers(len(open_nodes)))]
        edges.append((j, i))
        deg[i] += 1
        deg[j] += 1
        if deg[j] >= delta_cap:
            # swap-remove j from the open list
            k = slot.pop(j)
            last = open_nodes.pop()
            if last != j:
                open_nodes[k] = last
                slot[last] = k
        if deg[i] < delta_cap:
            slot[i] = len(open_nodes)
            open_nodes.append(i)
    return Graph(n, edges, degree_bound=max(delta_cap, 1))


def generate_lower_bound_tree(n: int, k: int) -> Graph:
    """Path of ``8k`` nodes with a balanced binary tree hung off each end.

    The side trees get ``floor((n-8k)/2)`` and ``ceil((n-8k)/2)`` nodes; each
    side tree's root is joined to its path endpoint.
    """
    if n < 1 or k < 1 or k < math.ceil(math.log2(n)) or 8 * k > n:
        raise InvalidParameter(f"need ceil(log2 n) <= k <= n/8, got n={n}, k={k}")
    p = 8 * k
    edges = [(i, i + 1) for i in range(p - 1)]
    left = (n - p) // 2
    right = n - p - left
    offset = p
    for size, anchor in ((left, 0), (right, p - 1)):
        if size:
            edges.append((anchor, offset))
            edges.extend(_binary_edges(size, offset))
            offset += size
    return Graph(n, edges, degree_bound=3)


def pruefer_to_tree(seq, n: int) -> Graph:
    """Decode a Prüfer sequence of length ``n - 2`` into a labelled tree."""
    seq = list(seq)
    if n == 1:
        return Graph(1, [])
    if len(seq) != n - 2:
        raise InvalidParameter("Prüfer sequence must have length n - 2")
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    edges = []
    for x in seq:
        leaf = min(i for i in range(n) if degree[i] == 1)
        edges.append((leaf, x))
        degree[leaf] -= 1
        degree[x] -= 1
    u, v = (i for i in range(n) if degree[i] == 1)
    edges.append((u, v))
    return Graph(n, edges)


def all_labelled_trees(n: int):
    """Every labelled tree on ``n`` nodes (``n ** (n - 2)`` of them)."""
    import itertools

    if n <= 2:
        yield Graph(n, [(0, 1)] if n == 2 else [])
        return
    for seq in itertools.product(range(n), repeat=n - 2):
        yield pruefer_to_tree(seq, n)


def is_valid_two_hop_colouring(g: Graph, colours) -> bool:
    """True iff every node's neighbours carry pairwise distinct colours."""
    colours = np.asarray(colours)
    for v in range(g.n):
        nb = colours[g.neighbours(v)]
        if len(np.unique(nb)) != len(nb):
            return False
    return True


def greedy_two_hop_colouring(g: Graph, palette_size: int | None = None) -> np.ndarray:
    """Distance-2 greedy colouring with colours ``1..``; valid 2-hop colouring.

    Uses at most ``Δ² + 1`` colours.
    """
    colours = np.zeros(g.n, dtype=np.int32)
    for v in range(g.n):
        used = set()
        for w in g.neighbours(v):
            used.add(int(colours[w]))
            for x in g.neighbours(w):
                used.add(int(colours[x]))
        c = 1
        while c in used:
            c += 1
        colours[v] = c
    if palette_size is not None and colours.max(initial=0) > palette_size:
        raise InvalidParameter("palette too small for greedy colouring")
    return colours


# descriptors & files ----------------------------------------------------------

FAMILIES = ("path", "star", "balanced_binary", "random_bounded_degree", "lower_bound_tnk", "from_file")


@dataclass(frozen=True)
class GraphDescriptor:
    """Everything needed to rebuild a graph deterministically."""

    family: str
    n: int | None = None
    delta_cap: int | None = None
    k: int | None = None
    seed: int | None = None
    path: str | None = None
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        fam = self.family.lower().replace("-", "_")
        aliases = {"binary": "balanced_binary", "balancedbinary": "balanced_binary",
                   "random": "random_bounded_degree", "randomboundeddegree": "random_bounded_degree",
                   "tnk": "lower_bound_tnk", "lowerboundtnk": "lower_bound_tnk", "fromfile": "from_file"}
        fam = aliases.get(fam, fam)
        if fam not in FAMILIES:
            raise InvalidParameter(f"unknown graph family {self.family!r}")
        object.__setattr__(self, "family", fam)

    def build(self) -> Graph:
        f = self.family
        if f == "from_file":
            if not self.path:
                raise InvalidParameter("from_file needs a path")
            return read_edge_list(self.path)
        if self.n is None:
            raise InvalidParameter(f"{f} needs n")
        if f == "path":
            return generate_path(self.n)
        if f == "star":
            return generate_star(self.n)
        if f == "balanced_binary":
            return generate_balanced_binary_tree(self.n)
        if f == "random_bounded_degree":
            if self.delta_cap is None:
                raise InvalidParameter("random_bounded_degree needs delta_cap")
            return generate_random_bounded_degree_tree(self.n, self.delta_cap, self.seed or 0)
        if self.k is None:
            raise InvalidParameter("lower_bound_tnk needs k")
        return generate_lower_bound_tree(self.n, self.k)

    def to_dict(self) -> dict:
        d = {"family": self.family}
        for key in ("n", "delta_cap", "k", "seed", "path"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GraphDescriptor":
        known = {k: d[k] for k in ("family", "n", "delta_cap", "k", "seed", "path") if k in d}
        if "family" not in known:
            raise InvalidParameter("descriptor needs a family")
        return cls(**known)

    @classmethod
    def from_json(cls, text: str) -> "GraphDescriptor":
        return cls.from_dict(json.loads(text))

    def sort_key(self):
        return (self.family, self.n or 0, self.delta_cap or 0, self.k or 0, self.seed or 0, self.path or "")


def write_edge_list(g: Graph, path) -> None:
    lines = [f"{g.n} {g.m}"] + [f"{a} {b}" for a, b in g.edges]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_edge_list(path) -> Graph:
    tokens = Path(path).read_text().split("\n")
    rows = [t.split() for t in tokens if t.strip()]
    if not rows:
        raise InvalidParameter("empty graph file")
    n, m = int(rows[0][0]), int(rows[0][1])
    edges = [(int(a), int(b)) for a, b in rows[1:]]
    if len(edges) != m:
        raise InvalidParameter(f"header says {m} edges, file has {len(edges)}")
    return Graph(n, edges)
