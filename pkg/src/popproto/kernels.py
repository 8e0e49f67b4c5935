"""Hot loops: counter-based RNG, layer transitions, incremental predicates.

Configuration arrays (``n`` nodes, palette ``P``; colours are ``1..P``):

=========  ================  =============================================
colour     int32[n]          current colour
stamp      int8[n, P+1]      stamp entries, ``-1`` is the cleared stamp
parent     int32[n]          parent colour, ``0`` means no parent
children   uint8[n, P+1]     children colour set as a 0/1 table
token      uint8[n]          leader token
mtok       int8[n]           majority token: 0=A, 1=B, 2=C
mout       int8[n]           majority output: 0=A, 1=B
bit        int8[n]           two-colouring output bit
counter    int64[n]          counting token value
bmax       int64[n]          largest counter value seen (broadcast)
=========  ================  =============================================

Everything here runs under numba unless ``POPPROTO_NO_NUMBA`` is set.
"""
import numpy as np

from ._jit import njit

# layer codes, also indices into ``flags`` / ``bad`` / ``first_hold``
COL, ORI, LEADER, MAJ, TWO, COUNT = 0, 1, 2, 3, 4, 5
NLAYERS = 6
APP_FIRST = LEADER

# slots of the ``meta`` int64 array
M_TOKENS = 0      # leader tokens currently alive
M_LAST_EDGE = 1   # edge index sampled by the last step
M_LAST_MASK = 2   # bitmask of layers whose state changed in the last step
M_RECOL = 3       # 1 if the last step was a recolouring step
M_ROUND = 4       # completed fair-schedule rounds
M_UNSEEN = 5      # edges not yet sampled in the current round
M_ROUNDS_AT = 6   # rounds needed to cover the time all layers became stable
M_ERROR = 7       # nonzero: invariant violation code
M_RECOL_TOTAL = 8
META_SIZE = 9

ERR_COUNTER_OVERFLOW = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(inline="always")
def mix64(z):
    """SplitMix64 finaliser."""
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(inline="always")
def seed_key(seed):
    return mix64(np.uint64(seed) + _GOLDEN)


@njit(inline="always")
def step_word(key, t, j):
    """Word ``j`` of the stream for step ``t``: SplitMix64 over (seed, t, j)."""
    k = mix64(np.uint64(key) + (np.uint64(t) + _ONE) * _GOLDEN)
    return mix64(k + (np.uint64(j) + _ONE) * _GOLDEN)


@njit(inline="always")
def to_unit(w):
    """53-bit uniform in [0, 1)."""
    return np.float64(np.uint64(w) >> _S11) * _INV53


@njit(inline="always")
def uniform_at(key, t, j):
    """Uniform ``j`` of step ``t`` in [0, 1)."""
    return to_unit(step_word(key, t, j))


@njit
def uniforms(key, t0, count, j):
    """Uniform ``j`` for steps ``t0+1 .. t0+count``."""
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        out[i] = uniform_at(key, t0 + 1 + i, j)
    return out


@njit
def edge_draws(key, t0, count, m):
    """The scheduler's edge indices for steps ``t0+1 .. t0+count``."""
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        out[i] = int(uniform_at(key, t0 + 1 + i, 0) * m)
    return out


@njit(inline="always")
def draw_uniform_colour(r, palette_size):
    return int(np.floor(r * palette_size)) + 1


@njit(inline="always")
def draw_bit(r):
    """Lowest mantissa bit of a 53-bit uniform (independent of its top bits)."""
    return int(r * 9007199254740992.0) & 1


@njit(inline="always")
def draw_initiator(r_u, r_v, u, v):
    if r_u < r_v:
        return u
    if r_v < r_u:
        return v
    return min(u, v)


# per-edge predicates ---------------------------------------------------------


@njit(inline="always")
def stamp_conflict(colour, stamp, a, b):
    sa = stamp[a, colour[b]]
    sb = stamp[b, colour[a]]
    return sa != -1 and sb != -1 and sa != sb


@njit(inline="always")
def colour_conflict(colour, indptr, nbrs, a, b):
    ca = colour[a]
    cb = colour[b]
    for k in range(indptr[b], indptr[b + 1]):
        w = nbrs[k]
        if w != a and colour[w] == ca:
            return True
    for k in range(indptr[a], indptr[a + 1]):
        w = nbrs[k]
        if w != b and colour[w] == cb:
            return True
    return False


@njit(inline="always")
def edge_status(colour, parent, children, a, b):
    """0 disoriented; +1/+2 weakly/properly a->b; -1/-2 weakly/properly b->a."""
    ca = colour[a]
    cb = colour[b]
    if parent[b] != ca and children[a, cb] == 0 and children[b, ca] == 1:
        return 2 if parent[a] == cb else 1
    if parent[a] != cb and children[b, ca] == 0 and children[a, cb] == 1:
        return -2 if parent[b] == ca else -1
    return 0


@njit(inline="always")
def app_edge_bad(kind, child, par, token, mtok, mout, bit, counter, bmax):
    """True if an interaction on the proper edge child->par could change ``kind``."""
    if kind == LEADER:
        return token[child] != 0
    if kind == MAJ:
        tc = mtok[child]
        tp = mtok[par]
        if tc != 2 and tp != 2 and tc != tp:
            return True
        if tc != 2 and tp == 2:
            return True
        if tp != 2 and mout[par] != tp:
            return True
        return mout[child] != mout[par]
    if kind == TWO:
        return bit[child] != 1 - bit[par]
    if kind == COUNT:
        return counter[child] != 0 or bmax[child] != bmax[par] or bmax[par] < counter[par]
    return False


# transitions -------------------------------------------------------------------


@njit(inline="always")
def colouring_interact(colour, stamp, u, v, r_u, r_v, palette):
    """Algorithm 1 on the pair (u, v). Returns (recoloured, changed)."""
    recol = stamp_conflict(colour, stamp, u, v)
    changed = recol
    if recol:
        colour[u] = draw_uniform_colour(r_u, palette)
        colour[v] = draw_uniform_colour(r_v, palette)
        for c in range(stamp.shape[1]):
            stamp[u, c] = -1
            stamp[v, c] = -1
    x = draw_bit(r_u)
    if stamp[u, colour[v]] != x or stamp[v, colour[u]] != x:
        changed = True
    stamp[u, colour[v]] = x
    stamp[v, colour[u]] = x
    return recol, changed


@njit(inline="always")
def set_edge_orientation(colour, parent, children, x, y):
    """Make x a child of y."""
    parent[x] = colour[y]
    children[x, colour[y]] = 0
    children[y, colour[x]] = 1
    if parent[y] == colour[x]:
        parent[y] = 0


@njit(inline="always")
def orientation_interact(colour, parent, children, u, v, r_u, r_v):
    """Algorithm 2 on the pair (u, v). Returns True if any state changed."""
    s = edge_status(colour, parent, children, u, v)
    if s == 2 or s == -2:
        return False
    ini = draw_initiator(r_u, r_v, u, v)
    res = v if ini == u else u
    pi, pr = parent[ini], parent[res]
    ci, cr = children[ini, colour[res]], children[res, colour[ini]]
    if children[ini, colour[res]] == 1:
        set_edge_orientation(colour, parent, children, ini, res)
    else:
        set_edge_orientation(colour, parent, children, res, ini)
    return (
        pi != parent[ini]
        or pr != parent[res]
        or ci != children[ini, colour[res]]
        or cr != children[res, colour[ini]]
    )


@njit(inline="always")
def leader_interact(token, child, par):
    if token[child] == 0:
        return False, False
    annihilated = token[par] != 0
    token[child] = 0
    token[par] = 1
    return True, annihilated


@njit(inline="always")
def majority_interact(mtok, mout, child, par):
    before = (mtok[child], mtok[par], mout[child], mout[par])
    tc = mtok[child]
    tp = mtok[par]
    if tc != 2 and tp != 2 and tc != tp:  # rule 1
        mtok[child] = 2
        mtok[par] = 2
    elif tc != 2 and tp == 2:  # rule 2
        mtok[child] = tp
        mtok[par] = tc
    if mtok[par] != 2:  # rule 3
        mout[par] = mtok[par]
    mout[child] = mout[par]  # rule 4
    return before != (mtok[child], mtok[par], mout[child], mout[par])


@njit(inline="always")
def two_colour_interact(bit, child, par):
    new = 1 - bit[par]
    if bit[child] == new:
        return False
    bit[child] = new
    return True


@njit(inline="always")
def counting_interact(counter, bmax, child, par):
    before = (counter[child], counter[par], bmax[child], bmax[par])
    counter[par] = counter[child] + counter[par]
    counter[child] = 0
    mb = max(bmax[child], bmax[par], counter[par])
    bmax[child] = mb
    bmax[par] = mb
    return before != (counter[child], counter[par], bmax[child], bmax[par])


@njit(inline="always")
def interact(flags, apps, palette, u, v, r1, r2, r3, r4, colour, stamp, parent, children,
             token, mtok, mout, bit, counter, bmax, meta):
    """One stacked interaction on (u, v) with explicit draws; returns (changed-layer mask, recoloured).

    ``r1, r2`` feed the colouring layer and ``r3, r4`` the orientation layer.
    """
    mask = 0
    recol = False
    if flags[COL] != 0:
        recol, changed = colouring_interact(colour, stamp, u, v, r1, r2, palette)
        if changed:
            mask |= 1 << COL
    if flags[ORI] != 0:
        if orientation_interact(colour, parent, children, u, v, r3, r4):
            mask |= 1 << ORI
    if apps.shape[0] > 0:
        s = edge_status(colour, parent, children, u, v)
        if s != 0:
            child = u if s > 0 else v
            par = v if s > 0 else u
            for i in range(apps.shape[0]):
                kind = apps[i]
                if kind == LEADER:
                    moved, annihilated = leader_interact(token, child, par)
                    if moved:
                        mask |= 1 << LEADER
                    if annihilated:
                        meta[M_TOKENS] -= 1
                elif kind == MAJ:
                    if majority_interact(mtok, mout, child, par):
                        mask |= 1 << MAJ
                elif kind == TWO:
                    if two_colour_interact(bit, child, par):
                        mask |= 1 << TWO
                elif kind == COUNT:
                    if counting_interact(counter, bmax, child, par):
                        mask |= 1 << COUNT
                    if counter[par] > counter.shape[0]:
                        meta[M_ERROR] = ERR_COUNTER_OVERFLOW
    return mask, recol


# incremental bookkeeping --------------------------------------------------------


@njit(inline="always")
def _set_bad(bad, counts, kind, e, new):
    old = bad[kind, e]
    if new != old:
        counts[kind] += new - old
        bad[kind, e] = new


@njit
def _refresh_col_edge(e, edges, indptr, nbrs, colour, stamp, bad, counts):
    a = edges[e, 0]
    b = edges[e, 1]
    new = 1 if (stamp_conflict(colour, stamp, a, b) or colour_conflict(colour, indptr, nbrs, a, b)) else 0
    _set_bad(bad, counts, COL, e, new)


@njit
def _refresh_edge(e, apps, refresh_ori, edges, colour, parent, children,
                  token, mtok, mout, bit, counter, bmax, bad, counts):
    """Orientation flag (if ``refresh_ori``) and the app flags listed in ``apps``."""
    a = edges[e, 0]
    b = edges[e, 1]
    s = edge_status(colour, parent, children, a, b)
    if refresh_ori:
        _set_bad(bad, counts, ORI, e, 0 if (s == 2 or s == -2) else 1)
    for i in range(apps.shape[0]):
        kind = apps[i]
        if s == 2:
            nb = 1 if app_edge_bad(kind, a, b, token, mtok, mout, bit, counter, bmax) else 0
        elif s == -2:
            nb = 1 if app_edge_bad(kind, b, a, token, mtok, mout, bit, counter, bmax) else 0
        else:
            nb = 0
        _set_bad(bad, counts, kind, e, nb)


@njit
def active_apps(flags):
    k = 0
    for kind in range(APP_FIRST, NLAYERS):
        if flags[kind] != 0:
            k += 1
    out = np.empty(k, dtype=np.int64)
    k = 0
    for kind in range(APP_FIRST, NLAYERS):
        if flags[kind] != 0:
            out[k] = kind
            k += 1
    return out


@njit
def recompute_all(flags, edges, indptr, nbrs, colour, stamp, parent, children,
                  token, mtok, mout, bit, counter, bmax, bad, counts, meta):
    """Full recomputation of every per-edge flag and counter."""
    m = edges.shape[0]
    apps = active_apps(flags)
    for k in range(NLAYERS):
        counts[k] = 0
        for e in range(m):
            bad[k, e] = 0
    for e in range(m):
        if flags[COL] != 0:
            _refresh_col_edge(e, edges, indptr, nbrs, colour, stamp, bad, counts)
        _refresh_edge(e, apps, True, edges, colour, parent, children,
                      token, mtok, mout, bit, counter, bmax, bad, counts)
    tok = 0
    for v in range(token.shape[0]):
        tok += token[v]
    meta[M_TOKENS] = tok


@njit
def layer_ok(flags, counts, meta, ok):
    """Fill ``ok[k]`` with layer k's effective predicate (own and all it reads)."""
    col_ok = flags[COL] == 0 or counts[COL] == 0
    ok[COL] = col_ok
    ori_ok = col_ok and counts[ORI] == 0
    ok[ORI] = ori_ok
    for kind in range(APP_FIRST, NLAYERS):
        good = ori_ok and counts[kind] == 0
        if kind == LEADER:
            good = good and meta[M_TOKENS] == 1
        ok[kind] = good


@njit
def step_once(t, key, flags, apps, palette, edges, indptr, nbrs, inc, colour, stamp, parent, children,
              token, mtok, mout, bit, counter, bmax, bad, counts, meta):
    """Execute step ``t`` (1-based); returns the sampled edge index.

    Per-edge predicate flags are refreshed only for layers whose state changed,
    on the edges those changes can affect.
    """
    m = edges.shape[0]
    e = int(uniform_at(key, t, 0) * m)
    u = edges[e, 0]
    v = edges[e, 1]
    mask, recol = interact(flags, apps, palette, u, v, uniform_at(key, t, 1), uniform_at(key, t, 2),
                           uniform_at(key, t, 3), uniform_at(key, t, 4), colour, stamp, parent, children,
                           token, mtok, mout, bit, counter, bmax, meta)

    if mask & (1 << COL):
        # colour conflicts reach one hop further than stamp conflicts
        for x in (u, v):
            for k in range(indptr[x], indptr[x + 1]):
                if recol:
                    y = nbrs[k]
                    for k2 in range(indptr[y], indptr[y + 1]):
                        _refresh_col_edge(inc[k2], edges, indptr, nbrs, colour, stamp, bad, counts)
                else:
                    _refresh_col_edge(inc[k], edges, indptr, nbrs, colour, stamp, bad, counts)
    if recol or mask & (1 << ORI):
        for x in (u, v):
            for k in range(indptr[x], indptr[x + 1]):
                _refresh_edge(inc[k], apps, True, edges, colour, parent, children,
                              token, mtok, mout, bit, counter, bmax, bad, counts)
    elif mask >> APP_FIRST:
        for x in (u, v):
            for k in range(indptr[x], indptr[x + 1]):
                _refresh_edge(inc[k], apps, False, edges, colour, parent, children,
                              token, mtok, mout, bit, counter, bmax, bad, counts)

    meta[M_LAST_EDGE] = e
    meta[M_LAST_MASK] = mask
    meta[M_RECOL] = 1 if recol else 0
    if recol:
        meta[M_RECOL_TOTAL] += 1
    return e


@njit(inline="always")
def _advance_round(seen, e, meta):
    """Returns True if this sample closed a round."""
    if seen[e] != meta[M_ROUND]:
        seen[e] = meta[M_ROUND]
        meta[M_UNSEEN] -= 1
        if meta[M_UNSEEN] == 0:
            meta[M_ROUND] += 1
            meta[M_UNSEEN] = seen.shape[0]
            return True
    return False


@njit
def run_steps(t0, nsteps, key, flags, palette, edges, indptr, nbrs, inc, colour, stamp, parent, children,
              token, mtok, mout, bit, counter, bmax, bad, counts, meta, seen, first_hold,
              tail, stop_when_stable):
    """Run steps ``t0+1 .. t0+nsteps``; returns the last executed step index.

    ``first_hold[k]`` is the step at which layer k's predicate last became true
    (-1 while it is false). With ``stop_when_stable`` the loop exits once every
    active layer has held for ``tail`` consecutive steps.
    """
    ok = np.zeros(NLAYERS, dtype=np.bool_)
    apps = active_apps(flags)
    t = t0
    all_since = -1  # step since which every layer holds, -1 if some layer fails
    all_ok = True
    for k in range(NLAYERS):
        if flags[k] != 0:
            if first_hold[k] < 0:
                all_ok = False
            elif first_hold[k] > all_since:
                all_since = first_hold[k]
    if not all_ok:
        all_since = -1
    for _ in range(nsteps):
        if stop_when_stable and all_since >= 0 and t - all_since >= tail:
            break
        t += 1
        e = step_once(t, key, flags, apps, palette, edges, indptr, nbrs, inc, colour, stamp, parent, children,
                      token, mtok, mout, bit, counter, bmax, bad, counts, meta)
        closed = _advance_round(seen, e, meta)
        if meta[M_LAST_MASK] == 0:
            continue  # nothing changed, so no predicate changed
        layer_ok(flags, counts, meta, ok)
        now_all = True
        for k in range(NLAYERS):
            if flags[k] == 0:
                continue
            if ok[k]:
                if first_hold[k] < 0:
                    first_hold[k] = t
            else:
                first_hold[k] = -1
                now_all = False
        if now_all and all_since < 0:
            all_since = t
            meta[M_ROUNDS_AT] = meta[M_ROUND] if closed else meta[M_ROUND] + 1
        elif not now_all:
            all_since = -1
        if meta[M_ERROR] != 0:
            break
    return t
