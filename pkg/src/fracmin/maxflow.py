"""Integer max-flow (Dinic) on a compact arc list, compiled with numba.

Capacities are int64.  Each undirected pair edge becomes two arcs that are
each other's reverse and share the same capacity, so no extra residual arcs
are needed for them.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INF = np.int64(1) << np.int64(62)


def build_arcs(num_nodes: int, tails, heads, caps, rev_caps):
    """Arc arrays sorted by tail: ``(start, head, cap, rev, tail)``.

    Edge ``e`` contributes arc ``tails[e] -> heads[e]`` with ``caps[e]`` and
    its reverse with ``rev_caps[e]``.
    """
    tails = np.asarray(tails, dtype=np.int64)
    heads = np.asarray(heads, dtype=np.int64)
    m = tails.size
    t_all = np.concatenate([tails, heads])
    h_all = np.concatenate([heads, tails])
    c_all = np.concatenate([np.asarray(caps, dtype=np.int64), np.asarray(rev_caps, dtype=np.int64)])
    rev = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
    order = np.argsort(t_all, kind="stable")
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    start = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(start, t_all + 1, 1)
    start = np.cumsum(start)
    # node and arc ids fit in int32 for every graph that fits in memory anyway
    idx = np.int32 if 2 * m < 2**31 - 1 else np.int64
    return (start, h_all[order].astype(idx), c_all[order].copy(),
            inv[rev[order]].astype(idx), t_all[order].astype(idx))


@njit(cache=True)
def _bfs(start, head, cap, s, t, level, queue):
    level[:] = -1
    level[s] = 0
    qh, qt = 0, 1
    queue[0] = s
    while qh < qt:
        u = queue[qh]
        qh += 1
        for a in range(start[u], start[u + 1]):
            v = head[a]
            if cap[a] > 0 and level[v] < 0:
                level[v] = level[u] + 1
                queue[qt] = v
                qt += 1
    return level[t] >= 0


@njit(cache=True)
def _augment_phase(start, head, cap, rev, tail, s, t, level, it, path):
    total = np.int64(0)
    it[:] = start[:-1]
    u = s
    depth = 0
    while True:
        if u == t:
            f = INF
            for i in range(depth):
                if cap[path[i]] < f:
                    f = cap[path[i]]
            first = -1
            for i in range(depth):
                a = path[i]
                cap[a] -= f
                cap[rev[a]] += f
                if first < 0 and cap[a] == 0:
                    first = i
            total += f
            depth = first
            u = tail[path[first]]
            continue
        advanced = False
        while it[u] < start[u + 1]:
            a = it[u]
            v = head[a]
            if cap[a] > 0 and level[v] == level[u] + 1:
                path[depth] = a
                depth += 1
                u = v
                advanced = True
                break
            it[u] += 1
        if not advanced:
            if u == s:
                break
            level[u] = -1
            depth -= 1
            u = tail[path[depth]]
            it[u] += 1
    return total


@njit(cache=True)
def dinic(start, head, cap, rev, tail, s, t):
    """Push a maximum flow from ``s`` to ``t``; ``cap`` is left as the residual."""
    n = start.size - 1
    level = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    path = np.empty(n, dtype=np.int64)
    flow = np.int64(0)
    while _bfs(start, head, cap, s, t, level, queue):
        flow += _augment_phase(start, head, cap, rev, tail, s, t, level, it, path)
    return flow


@njit(cache=True)
def reachable_from(start, head, cap, s):
    """Nodes reachable from ``s`` through arcs with positive residual."""
    n = start.size - 1
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    seen[s] = True
    queue[0] = s
    qh, qt = 0, 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for a in range(start[u], start[u + 1]):
            v = head[a]
            if cap[a] > 0 and not seen[v]:
                seen[v] = True
                queue[qt] = v
                qt += 1
    return seen


@njit(cache=True)
def reaching(start, head, cap, rev, t):
    """Nodes that can still reach ``t`` through arcs with positive residual."""
    n = start.size - 1
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    seen[t] = True
    queue[0] = t
    qh, qt = 0, 1
    while qh < qt:
        v = queue[qh]
        qh += 1
        for b in range(start[v], start[v + 1]):
            u = head[b]
            # the arc u -> v is the reverse of b
            if cap[rev[b]] > 0 and not seen[u]:
                seen[u] = True
                queue[qt] = u
                qt += 1
    return seen
