"""Token dynamics over an oriented tree: leader election, exact majority,
2-colouring and size counting.

Every rule here is stated for an edge oriented ``u -> v`` (``u`` the child).
In a stack the direction comes from the orientation state after this
interaction's orientation update; on a disoriented edge the layer does nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .engine import Configuration, InvariantViolation, ProtocolLayer
from .graph import Graph, InvalidParameter, bfs_distances
from .orientation import edge_status_codes, root_of

A, B, C = 0, 1, 2
TOKEN_NAMES = "ABC"


def _token_code(x) -> int:
    if isinstance(x, str):
        return TOKEN_NAMES.index(x.upper())
    return int(x)


# leader election -----------------------------------------------------------------


@dataclass(frozen=True)
class LeaderState:
    has_token: bool

    @property
    def output(self) -> bool:
        return self.has_token


def leader_transition(state_u: LeaderState, state_v: LeaderState):
    token = np.array([state_u.has_token, state_v.has_token], dtype=np.uint8)
    K.leader_interact(token, 0, 1)
    return LeaderState(bool(token[0])), LeaderState(bool(token[1]))


def _proper_pairs(g: Graph, config: Configuration):
    codes = edge_status_codes(g, config)
    if not np.all(np.abs(codes) == 2):
        return None
    child = np.where(codes > 0, g.edges[:, 0], g.edges[:, 1])
    par = np.where(codes > 0, g.edges[:, 1], g.edges[:, 0])
    return child, par


def leader_stable_predicate(g: Graph, config: Configuration) -> bool:
    pairs = _proper_pairs(g, config)
    if pairs is None or int(config.token.sum()) != 1:
        return False
    return int(np.flatnonzero(config.token)[0]) == root_of(g, config)


# exact majority -----------------------------------------------------------------------


@dataclass(frozen=True)
class MajorityState:
    token: str  # "A", "B" or "C"
    output: str  # "A" or "B"


def majority_transition(state_u: MajorityState, state_v: MajorityState):
    mtok = np.array([_token_code(state_u.token), _token_code(state_v.token)], dtype=np.int8)
    mout = np.array([_token_code(state_u.output), _token_code(state_v.output)], dtype=np.int8)
    K.majority_interact(mtok, mout, 0, 1)
    return (MajorityState(TOKEN_NAMES[mtok[0]], TOKEN_NAMES[mout[0]]),
            MajorityState(TOKEN_NAMES[mtok[1]], TOKEN_NAMES[mout[1]]))


def majority_stable_predicate(g: Graph, config: Configuration) -> bool:
    """Output silence on every edge of a properly oriented tree."""
    pairs = _proper_pairs(g, config)
    if pairs is None:
        return False
    child, par = pairs
    tc, tp = config.mtok[child], config.mtok[par]
    oc, op = config.mout[child], config.mout[par]
    annihilate = (tc != C) & (tp != C) & (tc != tp)
    swap = (tc != C) & (tp == C)
    stale_parent = (tp != C) & (op != tp)
    stale_child = oc != op
    return not np.any(annihilate | swap | stale_parent | stale_child)


def token_counts(config: Configuration) -> tuple[int, int, int]:
    counts = np.bincount(config.mtok.astype(np.int64), minlength=3)
    return int(counts[A]), int(counts[B]), int(counts[C])


# 2-colouring & counting ------------------------------------------------------------------


def two_colouring_transition(bit_u: int, bit_v: int) -> tuple[int, int]:
    bit = np.array([bit_u, bit_v], dtype=np.int8)
    K.two_colour_interact(bit, 0, 1)
    return int(bit[0]), int(bit[1])


def two_colour_stable_predicate(g: Graph, config: Configuration) -> bool:
    pairs = _proper_pairs(g, config)
    if pairs is None:
        return False
    child, par = pairs
    return bool(np.all(config.bit[child] != config.bit[par]))


@dataclass(frozen=True)
class CountingState:
    counter: int
    broadcast_max: int


def counting_transition(state_u: CountingState, state_v: CountingState, n: int | None = None):
    counter = np.array([state_u.counter, state_v.counter], dtype=np.int64)
    bmax = np.array([state_u.broadcast_max, state_v.broadcast_max], dtype=np.int64)
    K.counting_interact(counter, bmax, 0, 1)
    if n is not None and counter[1] > n:
        raise InvariantViolation(f"counter {counter[1]} exceeds population size {n}")
    return CountingState(int(counter[0]), int(bmax[0])), CountingState(int(counter[1]), int(bmax[1]))


def counting_stable_predicate(g: Graph, config: Configuration) -> bool:
    pairs = _proper_pairs(g, config)
    if pairs is None:
        return False
    child, par = pairs
    c, b = config.counter, config.bmax
    return not np.any((c[child] != 0) | (b[child] != b[par]) | (b[par] < c[par]))


# token ledger ----------------------------------------------------------------------------------


class TokenLedger:
    """Identity-carrying view of the majority tokens.

    ``position[z]`` is token z's node, ``kind[z]`` its type. Rule 1 retypes
    both identities in place; rule 2 swaps their positions.
    """

    def __init__(self, config: Configuration):
        n = config.n
        self.position = np.arange(n)
        self.kind = config.mtok.astype(np.int8).copy()
        self.at = np.arange(n)  # node -> identity

    def check(self, config: Configuration) -> None:
        if sorted(self.position.tolist()) != list(range(len(self.position))):
            raise InvariantViolation("token positions are not a bijection")
        if not np.array_equal(self.kind[self.at], config.mtok):
            raise InvariantViolation("ledger types disagree with the configuration")

    def depths(self, g: Graph, root: int) -> np.ndarray:
        return bfs_distances(g, root)[self.position]


def ledger_step(ledger: TokenLedger, before: Configuration, after: Configuration, edge) -> TokenLedger:
    """Replay one interaction's token effect (rule 1 retype, rule 2 swap)."""
    u, v = edge
    tb = (int(before.mtok[u]), int(before.mtok[v]))
    ta = (int(after.mtok[u]), int(after.mtok[v]))
    zu, zv = ledger.at[u], ledger.at[v]
    if tb == ta:
        pass
    elif ta == (C, C) and C not in tb:
        ledger.kind[zu] = C
        ledger.kind[zv] = C
    elif ta == (tb[1], tb[0]):
        ledger.position[zu], ledger.position[zv] = v, u
        ledger.at[u], ledger.at[v] = zv, zu
    else:
        raise InvariantViolation(f"unexplained token change {tb} -> {ta} on {edge}")
    ledger.check(after)
    return ledger


# layers ---------------------------------------------------------------------------------------


def _leader_init(g, config, candidates, rng, mode):
    if mode == "random" and candidates is None:
        config.token[:] = rng.integers(0, 2, size=g.n)
        if not config.token.any():
            config.token[int(rng.integers(g.n))] = 1
        return
    config.token[:] = 0
    if candidates is None:
        config.token[:] = 1
    else:
        candidates = list(candidates)
        if not candidates:
            raise InvalidParameter("leader election needs at least one candidate")
        config.token[candidates] = 1


def _majority_init(g, config, tokens, rng, mode):
    if tokens is None:
        if mode == "random":
            config.mtok[:] = rng.integers(0, 3, size=g.n)
            config.mout[:] = rng.integers(0, 2, size=g.n)
            return
        raise InvalidParameter("majority needs an A/B input per node")
    codes = np.array([_token_code(x) for x in tokens], dtype=np.int8)
    if len(codes) != g.n:
        raise InvalidParameter("one majority input per node")
    config.mtok[:] = codes
    if mode == "random":
        config.mout[:] = rng.integers(0, 2, size=g.n)
    else:
        if np.any(codes == C):
            raise InvalidParameter("majority inputs must be A or B")
        config.mout[:] = codes


def _two_init(g, config, bits, rng, mode):
    if bits is not None:
        config.bit[:] = bits
    elif mode == "random":
        config.bit[:] = rng.integers(0, 2, size=g.n)
    else:
        config.bit[:] = 0


def _count_init(g, config, inputs, rng, mode):
    config.counter[:] = 1
    config.bmax[:] = 1


def leader_layer() -> ProtocolLayer:
    return ProtocolLayer("leader", K.LEADER, None, ("orientation",), _leader_init, leader_transition,
                         lambda config: config.token.astype(bool), leader_stable_predicate)


def majority_layer() -> ProtocolLayer:
    return ProtocolLayer("majority", K.MAJ, None, ("orientation",), _majority_init, majority_transition,
                         lambda config: config.mout.copy(), majority_stable_predicate)


def two_colour_layer() -> ProtocolLayer:
    return ProtocolLayer("two_colour", K.TWO, None, ("orientation",), _two_init, two_colouring_transition,
                         lambda config: config.bit.copy(), two_colour_stable_predicate)


def counting_layer() -> ProtocolLayer:
    return ProtocolLayer("count", K.COUNT, None, ("orientation",), _count_init, counting_transition,
                         lambda config: config.bmax.copy(), counting_stable_predicate)


def alternating_input(n: int) -> list[str]:
    """A B A B ...; the worst case for annihilation on a path."""
    return ["A" if i % 2 == 0 else "B" for i in range(n)]
