"""Cell-to-cell weights of the kernel ``|x - y|^-(n+s)`` and closed-form far-field tails.

The weight of an integer offset ``k`` is the double integral over two cells

    w(k) = int_{cell 0} int_{cell k} |x - y|^-(n+s) dy dx
         = h^n int |z|^-(n+s) prod_i tri(z_i / h - k_i) dz ,

with ``tri(t) = max(1 - |t|, 0)`` the density of the difference of two
uniform cell coordinates.  On each half of a triangle the weight is linear,
so the integrand is smooth on ``2^n`` boxes except when the origin is a box
corner (touching cells).  Those corner boxes are split into pyramids
(Duffy) where the radial integral is done in closed form; everything else
uses tensor Gauss-Legendre rules whose order grows as the box approaches the
singularity.

Tails close the energy beyond ``trunc_radius`` against the datum
``{|x_n| > M}``.  The kernel mass of a cell to a half-space is elementary
(:func:`halfspace_tail` integrated along ``x_n``), the total mass of a
cell to its complement is the perimeter of a cube, and the tails are these
minus the explicitly tabulated near cells.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .geometry import ProblemSpec

log = logging.getLogger(__name__)

NEAR_CUTOFF = 3
CACHE_VERSION = 2
CACHE_ENV = "FRACMIN_CACHE_DIR"

_NEAR_ORDER = 20
_DUFFY_ORDER = {2: 48, 3: 28}
_CHUNK = 4_000_000


# --- half-space tails ---------------------------------------------------------

def tail_constant(n: int, s: float) -> float:
    """``C_ns = int_{R^{n-1}} (1 + |w|^2)^{-(n+s)/2} dw``."""
    return float(np.exp(0.5 * (n - 1) * np.log(np.pi) + gammaln(0.5 * (1 + s)) - gammaln(0.5 * (n + s))))


def halfspace_tail(a, n: int, s: float):
    """Kernel mass of ``{z_n > a}`` seen from the origin: ``(C_ns / s) a^-s``."""
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= 0):
        raise ValueError("halfspace_tail needs a > 0")
    out = tail_constant(n, s) / s * a_arr ** (-s)
    return float(out) if np.ndim(out) == 0 else out


def _cell_halfspace_mass(t0, t1, a, n, s, h):
    """``int_{cell} int_{y_n > a} K`` for a cell spanning ``[t0, t1]`` in ``x_n`` below ``a``."""
    c = tail_constant(n, s) / (s * (1.0 - s))
    # clamp round-off from non-dyadic h (a cell edge can land a few ulps past a)
    d0 = np.maximum(a - t0, 0.0)
    d1 = np.maximum(a - t1, 0.0)
    return h ** (n - 1) * c * (d0 ** (1.0 - s) - d1 ** (1.0 - s))


# --- quadrature rules -------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss01(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _triangle_rule(q: int):
    """Nodes/weights on [-1, 1] for ``int f(t) (1 - |t|) dt``, ``q`` Gauss points per half."""
    x, w = _gauss01(q)
    t = np.concatenate([x - 1.0, x])
    wt = np.concatenate([w * x, w * (1.0 - x)])
    return t, wt


@lru_cache(maxsize=None)
def _tensor(rule_nodes: tuple, n: int):
    t, w = rule_nodes
    grids = np.meshgrid(*([t] * n), indexing="ij")
    wg = np.meshgrid(*([w] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1), np.prod([g.ravel() for g in wg], axis=0)


def _tensor_triangle(q: int, n: int):
    t, w = _triangle_rule(q)
    return _tensor((tuple(t), tuple(w)), n)


def far_order(dist):
    """Gauss points per half-axis giving ~1e-13 relative error at offset length ``dist`` (cells)."""
    dist = np.maximum(np.asarray(dist, dtype=float), 1.0)
    q = np.ceil(14.0 / (2.0 * np.log10(4.0 * dist))) + 1
    return np.clip(q, 3, _NEAR_ORDER).astype(int)


def _smooth_weights(k: np.ndarray, h: float, s: float, q: int) -> np.ndarray:
    """Weights of offsets whose triangle support avoids the origin."""
    n = k.shape[1]
    alpha = n + s
    nodes, wts = _tensor((tuple(_triangle_rule(q)[0]), tuple(_triangle_rule(q)[1])), n)
    out = np.empty(len(k))
    step = max(1, _CHUNK // len(wts))
    for a in range(0, len(k), step):
        z = h * (k[a:a + step, None, :] + nodes[None, :, :])
        r2 = np.einsum("mpi,mpi->mp", z, z)
        out[a:a + step] = (r2 ** (-0.5 * alpha)) @ wts
    return out * h ** (2 * n)


@lru_cache(maxsize=None)
def _duffy_nodes(n: int):
    q = _DUFFY_ORDER[n]
    x, w = _gauss01(q)
    return _tensor((tuple(x), tuple(w)), n - 1)


def _duffy_box(c, e, s):
    """Unit-h integral of ``|z|^-(n+s) prod(c_i + e_i tau_i)`` over ``tau in [0,1]^n``.

    Requires ``prod c_i = 0`` (the triangle weight vanishes at the corner).
    Pyramid ``j``: ``tau_j = u``, ``tau_i = u v_i``; the ``u`` integral is exact.
    """
    n = len(c)
    alpha = n + s
    V, W = _duffy_nodes(n)
    m = len(W)
    total = 0.0
    for j in range(n):
        vt = np.ones((m, n))
        others = [i for i in range(n) if i != j]
        vt[:, others] = V
        coef = np.zeros((m, n + 1))
        coef[:, 0] = 1.0
        for i in range(n):
            new = coef * c[i]
            new[:, 1:] += coef[:, :-1] * (e[i] * vt[:, i])[:, None]
            coef = new
        degree = np.arange(1, n + 1)
        radial = coef[:, 1:] @ (1.0 / (degree - s))
        g = np.sum(vt**2, axis=1) ** (-0.5 * alpha) * radial
        total += float(W @ g)
    return total


def _singular_weight(k: np.ndarray, h: float, s: float, order: int) -> float:
    """Weight of an offset with ``|k|_inf <= 1``: Duffy on corner boxes, Gauss elsewhere."""
    n = len(k)
    alpha = n + s
    x, w = _gauss01(order)
    total = 0.0
    for halves in np.ndindex(*(2,) * n):
        # halves[i] == 0: t in [-1, 0]; 1: t in [0, 1]; z/h = k + t
        lo = np.array([k[i] - 1.0 + halves[i] for i in range(n)])
        hi = lo + 1.0
        corner = all(lo[i] == 0.0 or hi[i] == 0.0 for i in range(n))
        if corner:
            c = np.empty(n)
            e = np.empty(n)
            for i in range(n):
                if k[i] == 0:
                    c[i], e[i] = 1.0, -1.0
                else:
                    c[i], e[i] = 0.0, 1.0
            total += h ** (2 * n) * h ** (-alpha) * _duffy_box(c, e, s)
            continue
        grids = np.meshgrid(*([x] * n), indexing="ij")
        wgrid = np.prod(np.meshgrid(*([w] * n), indexing="ij"), axis=0).ravel()
        t = np.stack([lo[i] + grids[i].ravel() for i in range(n)], axis=1)
        tri = np.prod(1.0 - np.abs(t - k[None, :]), axis=1)
        z = h * t
        r2 = np.sum(z * z, axis=1)
        total += h ** (2 * n) * float(np.sum(wgrid * tri * r2 ** (-0.5 * alpha)))
    return total


def offset_weight(offset, h: float, s: float, order: int | None = None) -> float:
    """Kernel weight between a cell and the cell displaced by the integer vector ``offset``."""
    k = np.asarray(offset, dtype=float).ravel()
    if not np.any(k):
        raise ValueError("offset 0 has no weight (self-interaction is dropped)")
    if np.any(k != np.round(k)):
        raise ValueError("offset must be an integer vector")
    kinf = np.max(np.abs(k))
    if kinf <= 1:
        return _singular_weight(k, h, s, order or _NEAR_ORDER)
    if kinf <= NEAR_CUTOFF:
        q = order or _NEAR_ORDER
    else:
        q = order or int(far_order(np.linalg.norm(k)))
    return float(_smooth_weights(k[None, :], h, s, q)[0])


def _canonical_weights(canon: np.ndarray, h: float, s: float) -> np.ndarray:
    """Weights for canonical offsets (sorted absolute values), batched by quadrature order."""
    out = np.empty(len(canon))
    kinf = canon.max(axis=1)
    near = kinf <= NEAR_CUTOFF
    for i in np.flatnonzero(near):
        out[i] = offset_weight(canon[i], h, s)
    far = np.flatnonzero(~near)
    if far.size:
        q = far_order(np.linalg.norm(canon[far], axis=1))
        for qq in np.unique(q):
            sel = far[q == qq]
            out[sel] = _smooth_weights(canon[sel].astype(float), h, s, int(qq))
    return out


def _offset_box(K: int, n: int) -> np.ndarray:
    ax = np.arange(-K, K + 1)
    return np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1)


def weight_box(K: int, n: int, h: float, s: float, radius_cells: float | None = None) -> np.ndarray:
    """Dense array of weights for offsets in ``[-K, K]^n``; zero at the origin and outside the ball."""
    box = _offset_box(K, n)
    r2 = np.sum(box**2, axis=-1)
    limit = np.inf if radius_cells is None else radius_cells**2 * (1 + 1e-12)
    mask = (r2 > 0) & (r2 <= limit)
    canon_all = np.sort(np.abs(box[mask]), axis=1)
    canon, inverse = np.unique(canon_all, axis=0, return_inverse=True)
    vals = _canonical_weights(canon, h, s)
    out = np.zeros(box.shape[:-1])
    out[mask] = vals[inverse.ravel()]
    return out


# --- perimeter of one cell ---------------------------------------------------------

def _cube_face_integral(n: int, beta: float) -> float:
    """``J(beta) = int_{|u|_inf > 1} |u|^-(n+beta) du``."""
    x, w = _gauss01(40)
    t = 2.0 * x - 1.0
    wt = 2.0 * w
    if n == 2:
        val = float(wt @ (1.0 + t**2) ** (-0.5 * (n + beta)))
    else:
        T1, T2 = np.meshgrid(t, t, indexing="ij")
        W = np.outer(wt, wt)
        val = float(np.sum(W * (1.0 + T1**2 + T2**2) ** (-0.5 * (n + beta))))
    return 2.0 * n / beta * val


@lru_cache(maxsize=None)
def unit_cell_perimeter(n: int, s: float) -> float:
    """``int_Q int_{Q^c} |x-y|^-(n+s)`` for the unit cube ``Q``.

    Lattice sum of cell weights over ``|k|_inf <= K`` plus the mass of the
    complement of the surrounding cube, expanded to second order in the
    position inside ``Q``.
    """
    K = 48 if n == 2 else 20
    total = float(weight_box(K, n, 1.0, s).sum())
    L = K + 0.5
    alpha = n + s
    rest = L ** (-s) * _cube_face_integral(n, s)
    rest += alpha * (s + 2.0) * L ** (-s - 2.0) * _cube_face_integral(n, s + 2.0) / 24.0
    return total + rest


def cell_perimeter(n: int, s: float, h: float) -> float:
    return h ** (n - s) * unit_cell_perimeter(n, s)


# --- table --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelTable:
    """Offset weights within the truncation ball plus per-cell far-field tails.

    ``weights`` is indexed by ``offset + K`` in window axis order
    ``(x_n, x_1, ...)``.  ``row_tail_in`` / ``row_tail_out`` cover global
    rows ``-K .. rows + K - 1`` (index ``j + K``); tails depend on the row only.
    """

    n: int
    s: float
    h: float
    trunc_radius: float
    K: int
    weights: np.ndarray
    cell_mass: float
    row_tail_in: np.ndarray
    row_tail_out: np.ndarray
    tail_in: np.ndarray
    tail_out: np.ndarray
    problem_key: tuple = field(default=())

    def weight(self, offset) -> float:
        idx = tuple(int(o) + self.K for o in offset)
        if any(i < 0 or i > 2 * self.K for i in idx):
            return 0.0
        return float(self.weights[idx])

    @property
    def num_offsets(self) -> int:
        return int(np.count_nonzero(self.weights))

    def row_tails(self, j):
        """``(tail_in, tail_out)`` for global row(s) ``j``."""
        j = np.asarray(j) + self.K
        return self.row_tail_in[j], self.row_tail_out[j]

    def matches(self, problem: ProblemSpec) -> bool:
        return self.problem_key == problem.key()


def _row_masses(problem: ProblemSpec, rows: np.ndarray, cell_mass: float):
    """Exact ``(A_in, A_out)``: kernel mass of a cell in row ``j`` to ``E0^c`` / ``E0`` minus itself."""
    g = problem.grid
    n, s, h, M = problem.n, problem.s, g.h, problem.M
    t0 = -g.H + rows * h
    t1 = t0 + h
    in_datum = g.row_in_datum(rows)
    a_in = np.empty(len(rows))
    a_out = np.empty(len(rows))
    slab = ~in_datum
    # cell inside the slab: mass to both half-spaces is elementary
    if np.any(slab):
        a, b = t0[slab], t1[slab]
        up = _cell_halfspace_mass(a, b, M, n, s, h)
        down = _cell_halfspace_mass(-b, -a, M, n, s, h)
        a_out[slab] = up + down
        a_in[slab] = cell_mass - a_out[slab]
    if np.any(in_datum):
        # cell above M (or mirrored below -M): mass to the slab = halfspace(beyond M) - halfspace(beyond -M)
        a, b = np.abs(t0[in_datum]), np.abs(t1[in_datum])
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        # distances measured downward from the cell: use mirrored coordinates u = -x_n
        near = _cell_halfspace_mass(-hi, -lo, -M, n, s, h)
        far = _cell_halfspace_mass(-hi, -lo, M, n, s, h)
        a_in[in_datum] = near - far
        a_out[in_datum] = cell_mass - a_in[in_datum]
    return a_in, a_out


def _build_row_tails(problem: ProblemSpec, weights: np.ndarray, K: int, cell_mass: float):
    g = problem.grid
    rows = np.arange(-K, g.rows + K)
    col = weights.reshape(2 * K + 1, -1).sum(axis=1)  # mass per vertical offset
    datum = g.row_in_datum(np.arange(-2 * K, g.rows + 2 * K)).astype(float)
    # near_datum[j] = sum_d col[d + K] * datum(j + d)
    near_datum = np.correlate(datum, col, mode="valid")
    near_total = col.sum()
    a_in, a_out = _row_masses(problem, rows, cell_mass)
    tail_out = a_out - near_datum
    tail_in = a_in - (near_total - near_datum)
    scale = cell_mass * 1e-9
    if tail_in.min() < -scale or tail_out.min() < -scale:
        raise ArithmeticError("negative far-field tail: quadrature inconsistent with truncation radius")
    # rows -K .. rows+K-1 are symmetric about the slab centre; make the tails exactly so
    tail_in = 0.5 * (tail_in + tail_in[::-1])
    tail_out = 0.5 * (tail_out + tail_out[::-1])
    return np.maximum(tail_in, 0.0), np.maximum(tail_out, 0.0)


def _cache_path(problem: ProblemSpec, cache_dir) -> Path | None:
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    if not cache_dir:
        return None
    g = problem.grid
    key = json.dumps({"v": CACHE_VERSION, "n": g.n, "s": problem.s, "h": g.h, "trunc": problem.trunc_radius,
                      "window": [g.H, problem.M], "free": problem.key()}, sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:24]
    return Path(cache_dir) / f"kernel-{digest}.npz"


def build_kernel_table(problem: ProblemSpec, cache_dir=None) -> KernelTable:
    """Tabulate weights within ``trunc_radius`` and tails for every free cell."""
    path = _cache_path(problem, cache_dir)
    if path is not None and path.exists():
        table = load_kernel_table(path, problem)
        if table is not None:
            return table
    g = problem.grid
    K = int(np.floor(problem.trunc_radius / g.h + 1e-9))
    weights = weight_box(K, problem.n, g.h, problem.s, radius_cells=problem.trunc_radius / g.h)
    mass = cell_perimeter(problem.n, problem.s, g.h)
    row_in, row_out = _build_row_tails(problem, weights, K, mass)
    rows = problem.free_coords[:, 0]
    table = KernelTable(
        n=problem.n, s=problem.s, h=g.h, trunc_radius=problem.trunc_radius, K=K,
        weights=weights, cell_mass=mass, row_tail_in=row_in, row_tail_out=row_out,
        tail_in=row_in[rows + K], tail_out=row_out[rows + K], problem_key=problem.key(),
    )
    for arr in (weights, row_in, row_out, table.tail_in, table.tail_out):
        arr.setflags(write=False)
    if path is not None:
        save_kernel_table(path, table)
    return table


def cell_tail_unary(cell, problem: ProblemSpec, table: KernelTable | None = None):
    """``(tail_in, tail_out)`` of the cell at window coordinates ``cell``."""
    if table is None:
        table = build_kernel_table(problem)
    ti, to = table.row_tails(int(cell[0]))
    return float(ti), float(to)


def save_kernel_table(path, table: KernelTable) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({"version": CACHE_VERSION, "key": list(table.problem_key), "n": table.n,
                         "s": table.s, "h": table.h, "trunc": table.trunc_radius, "K": table.K,
                         "cell_mass": table.cell_mass})
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, header=np.array(header), weights=table.weights,
             row_tail_in=table.row_tail_in, row_tail_out=table.row_tail_out)
    os.replace(tmp, path)


def load_kernel_table(path, problem: ProblemSpec) -> KernelTable | None:
    """Read a cached table; ``None`` if the version stamp or key does not match."""
    with np.load(path) as z:
        header = json.loads(str(z["header"]))
        if header.get("version") != CACHE_VERSION or tuple(header["key"]) != tuple(problem.key()):
            log.info("ignoring stale kernel cache %s", path)
            return None
        K = header["K"]
        row_in, row_out = z["row_tail_in"], z["row_tail_out"]
        rows = problem.free_coords[:, 0]
        return KernelTable(n=header["n"], s=header["s"], h=header["h"], trunc_radius=header["trunc"], K=K,
                           weights=z["weights"], cell_mass=header["cell_mass"], row_tail_in=row_in,
                           row_tail_out=row_out, tail_in=row_in[rows + K], tail_out=row_out[rows + K],
                           problem_key=problem.key())
