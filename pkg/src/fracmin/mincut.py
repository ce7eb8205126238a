"""Exact minimization of the discrete energy by an s-t cut.

The energy is a sum of nonnegative pairwise disagreement terms and unary
costs, so it is graph representable.  The source side of a cut is label 1
(cell inside the set).  Capacities are quantized to int64 with a scale tied
to the cell perimeter, so every labeling has an exact integer energy and the
flow certificate is an equality of integers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import maxflow
from .energy import unaries
from .geometry import LabelField, ProblemSpec
from .kernel import KernelTable

# quantization step is cell_perimeter / 2**CAP_BITS
CAP_BITS = 40
_CAP_LIMIT = np.int64(1) << np.int64(62)


@dataclass(frozen=True, eq=False)
class CutGraph:
    """Quantized cut graph over the free cells.

    ``cap_src[i]`` is paid when cell ``i`` ends on the sink side (label 0),
    ``cap_sink[i]`` when it ends on the source side (label 1).  Pair edges are
    undirected with capacity ``cap_pair``.
    """

    problem: ProblemSpec
    scale: float
    edges: np.ndarray
    cap_pair: np.ndarray
    cap_src: np.ndarray
    cap_sink: np.ndarray

    @property
    def num_nodes(self) -> int:
        return int(self.cap_src.size)

    @property
    def num_edges(self) -> int:
        return int(self.cap_pair.size)

    def cut_value(self, labels) -> int:
        """Exact integer energy of a labeling (label-independent terms excluded)."""
        u = np.asarray(labels).astype(bool)
        val = int(self.cap_sink[u].sum()) + int(self.cap_src[~u].sum())
        if self.num_edges:
            diff = u[self.edges[:, 0]] != u[self.edges[:, 1]]
            val += int(self.cap_pair[diff].sum())
        return val

    def to_energy(self, value: int) -> float:
        return float(value) / self.scale


@dataclass(frozen=True, eq=False)
class FlowResult:
    labels: LabelField
    flow_value: float
    flow_int: int
    cut_int: int
    optimal: bool
    degenerate: bool
    maximal: LabelField
    num_edges: int
    seconds: float


def _half_offsets(weights: np.ndarray, K: int):
    """Offsets with positive weight whose first nonzero entry is positive."""
    offs = np.argwhere(weights > 0) - K
    keep = np.zeros(len(offs), dtype=bool)
    for i, o in enumerate(offs):
        nz = o[o != 0]
        keep[i] = nz.size > 0 and nz[0] > 0
    offs = offs[keep]
    w = weights[tuple((offs + K).T)]
    return offs.astype(np.int64), w


@njit(cache=True)
def _pair_pass(coords, ids, shape, offs, fill, out_a, out_b, out_k):
    n = coords.shape[1]
    count = 0
    for i in range(coords.shape[0]):
        for k in range(offs.shape[0]):
            flat = 0
            ok = True
            for d in range(n):
                c = coords[i, d] + offs[k, d]
                if c < 0 or c >= shape[d]:
                    ok = False
                    break
                flat = flat * shape[d] + c
            if not ok:
                continue
            j = ids[flat]
            if j < 0:
                continue
            if fill:
                out_a[count] = i
                out_b[count] = j
                out_k[count] = k
            count += 1
    return count


def _pair_edges(problem: ProblemSpec, offs: np.ndarray):
    ids = np.full(int(np.prod(problem.grid.shape)), -1, dtype=np.int64)
    ids[problem.free_index] = np.arange(problem.num_free)
    coords = problem.free_coords.astype(np.int64)
    shape = np.asarray(problem.grid.shape, dtype=np.int64)
    dummy = np.empty(0, dtype=np.int64)
    m = _pair_pass(coords, ids, shape, offs, False, dummy, dummy, dummy)
    a = np.empty(m, dtype=np.int64)
    b = np.empty(m, dtype=np.int64)
    k = np.empty(m, dtype=np.int64)
    _pair_pass(coords, ids, shape, offs, True, a, b, k)
    return a, b, k


def build_cut_graph(problem: ProblemSpec, table: KernelTable) -> CutGraph:
    un = unaries(problem, table)
    scale = float(2**CAP_BITS) / table.cell_mass
    offs, w = _half_offsets(table.weights, table.K)
    qw = np.rint(w * scale).astype(np.int64)
    live = qw > 0
    a, b, k = _pair_edges(problem, offs[live])
    cap_pair = qw[live][k]
    cap_src = np.rint(un.cost0 * scale).astype(np.int64)
    cap_sink = np.rint(un.cost1 * scale).astype(np.int64)
    # every arc carries at most the total capacity, so bounding the total bounds all flows
    total = float(cap_pair.sum(dtype=float)) * 2 + float(cap_src.sum(dtype=float)) + float(cap_sink.sum(dtype=float))
    if total >= float(_CAP_LIMIT):
        raise OverflowError(f"total capacity {total:.3g} does not fit the int64 flow range")
    edges = np.stack([a, b], axis=1) if a.size else np.empty((0, 2), dtype=np.int64)
    for arr in (edges, cap_pair, cap_src, cap_sink):
        arr.setflags(write=False)
    return CutGraph(problem, scale, edges, cap_pair, cap_src, cap_sink)


def min_cut(problem: ProblemSpec, table: KernelTable, graph: CutGraph | None = None) -> FlowResult:
    """Global minimizer of the discrete energy.

    The returned labels are the smallest minimizer (source side of the
    residual graph); ``maximal`` is the largest one.  ``degenerate`` flags
    that the two differ, i.e. the minimizer is not unique.
    """
    t0 = time.perf_counter()
    g = graph if graph is not None else build_cut_graph(problem, table)
    N = g.num_nodes
    if N == 0:
        field = LabelField.datum(problem)
        return FlowResult(field, 0.0, 0, 0, True, False, field, 0, time.perf_counter() - t0)
    # cancel the common part of both terminal capacities up front
    direct = np.minimum(g.cap_src, g.cap_sink)
    src = g.cap_src - direct
    snk = g.cap_sink - direct
    S, T = N, N + 1
    nodes = np.arange(N, dtype=np.int64)
    hs, ht = src > 0, snk > 0
    tails = np.concatenate([g.edges[:, 0], np.full(hs.sum(), S), nodes[ht]])
    heads = np.concatenate([g.edges[:, 1], nodes[hs], np.full(ht.sum(), T)])
    caps = np.concatenate([g.cap_pair, src[hs], snk[ht]])
    rev_caps = np.concatenate([g.cap_pair, np.zeros(hs.sum() + ht.sum(), dtype=np.int64)])
    start, head, cap, rev, tail = maxflow.build_arcs(N + 2, tails, heads, caps, rev_caps)
    flow = int(maxflow.dinic(start, head, cap, rev, tail, S, T)) + int(direct.sum())
    lo = maxflow.reachable_from(start, head, cap, S)[:N]
    hi = ~maxflow.reaching(start, head, cap, rev, T)[:N]
    labels = lo.astype(np.uint8)
    cut = g.cut_value(labels)
    field = LabelField(problem, labels)
    maximal = LabelField(problem, hi.astype(np.uint8))
    return FlowResult(
        labels=field, flow_value=g.to_energy(flow), flow_int=flow, cut_int=cut,
        optimal=(cut == flow), degenerate=bool(np.any(lo != hi)), maximal=maximal,
        num_edges=g.num_edges, seconds=time.perf_counter() - t0,
    )


@njit(cache=True)
def _gray_search(q0, q1, C):
    k = q0.size
    u = np.zeros(k, dtype=np.int64)
    energy = np.int64(0)
    for i in range(k):
        energy += q0[i]
    best = energy
    code = np.int64(0)
    best_code = code
    for step in range(1, np.int64(1) << k):
        # flip the bit of the lowest set bit of step
        i = 0
        while not (step >> i) & 1:
            i += 1
        delta = q1[i] - q0[i] if u[i] == 0 else q0[i] - q1[i]
        for j in range(k):
            if C[i, j] != 0:
                delta += C[i, j] if u[i] == u[j] else -C[i, j]
        u[i] = 1 - u[i]
        energy += delta
        code ^= np.int64(1) << (k - 1 - i)
        if energy < best or (energy == best and code < best_code):
            best = energy
            best_code = code
    return best, best_code


def brute_force_min(problem: ProblemSpec, table: KernelTable, graph: CutGraph | None = None):
    """Exhaustive minimizer over all labelings (at most 25 free cells).

    Ties go to the lexicographically smallest label vector.  Returns the
    field and its exact integer energy.
    """
    k = problem.num_free
    if k > 25:
        raise ValueError(f"brute force is limited to 25 free cells, got {k}")
    if k == 0:
        return LabelField.datum(problem), 0
    g = graph if graph is not None else build_cut_graph(problem, table)
    C = np.zeros((k, k), dtype=np.int64)
    if g.num_edges:
        np.add.at(C, (g.edges[:, 0], g.edges[:, 1]), g.cap_pair)
        np.add.at(C, (g.edges[:, 1], g.edges[:, 0]), g.cap_pair)
    best, code = _gray_search(g.cap_src.copy(), g.cap_sink.copy(), C)
    labels = np.array([(int(code) >> (k - 1 - i)) & 1 for i in range(k)], dtype=np.uint8)
    return LabelField(problem, labels), int(best)
