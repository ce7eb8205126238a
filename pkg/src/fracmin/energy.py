"""Discrete fractional perimeter of a label field.

Pairs with both cells fixed are label independent and left out, so reported
totals are comparable between fields of one problem but are not absolute
values of the continuum perimeter.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .geometry import LabelField, ProblemSpec
from .kernel import KernelTable


@dataclass(frozen=True)
class EnergyReport:
    interior_interior: float
    interior_fixed: float
    tail: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Unaries:
    """Per-free-cell label costs split by origin.

    ``fixed_in`` is the weight to fixed cells labeled 1, ``fixed_out`` to
    fixed cells labeled 0.  Labeling a cell 1 costs ``tail_in + fixed_out``;
    labeling it 0 costs ``tail_out + fixed_in``.
    """

    fixed_in: np.ndarray
    fixed_out: np.ndarray
    tail_in: np.ndarray
    tail_out: np.ndarray

    @property
    def cost1(self) -> np.ndarray:
        return self.tail_in + self.fixed_out

    @property
    def cost0(self) -> np.ndarray:
        return self.tail_out + self.fixed_in


def _check(problem: ProblemSpec, table: KernelTable):
    if not table.matches(problem):
        raise ValueError("kernel table was built for a different problem")


def _extended_fixed(problem: ProblemSpec, K: int):
    """Fixed-cell indicators (datum label 1 / 0) on the window grown by ``K`` cells on every side."""
    g = problem.grid
    shape = tuple(k + 2 * K for k in g.shape)
    rows = np.arange(-K, g.rows + K)
    datum = g.row_in_datum(rows).reshape((-1,) + (1,) * (problem.n - 1))
    fixed = np.ones(shape, dtype=bool)
    inner = (slice(K, K + g.rows),) + (slice(K, K + g.cols),) * (problem.n - 1)
    fixed[inner] = ~problem.free_mask
    return fixed & datum, fixed & ~datum


def _mirror_average(problem: ProblemSpec, values: np.ndarray) -> np.ndarray:
    """Average each free cell with its ``x_n`` mirror image so that reflected
    labelings get bit-identical costs (FFT round-off is not symmetric)."""
    shape = problem.grid.shape
    win = np.zeros(int(np.prod(shape)))
    win[problem.free_index] = values
    win = win.reshape(shape)
    return (0.5 * (win + win[::-1])).ravel()[problem.free_index]


@lru_cache(maxsize=8)
def unaries(problem: ProblemSpec, table: KernelTable) -> Unaries:
    _check(problem, table)
    K = table.K
    fixed1, fixed0 = _extended_fixed(problem, K)
    idx = problem.free_index
    fin = fftconvolve(fixed1.astype(float), table.weights, mode="valid").ravel()[idx]
    fout = fftconvolve(fixed0.astype(float), table.weights, mode="valid").ravel()[idx]
    # FFT round-off can leave tiny negatives where the true sum is 0
    fin = np.where(fin < table.cell_mass * 1e-13, 0.0, fin)
    fout = np.where(fout < table.cell_mass * 1e-13, 0.0, fout)
    fin, fout = _mirror_average(problem, fin), _mirror_average(problem, fout)
    for a in (fin, fout):
        a.setflags(write=False)
    return Unaries(fin, fout, table.tail_in, table.tail_out)


def _free_window(field: LabelField, values) -> np.ndarray:
    shape = field.problem.grid.shape
    out = np.zeros(int(np.prod(shape)))
    out[field.problem.free_index] = values
    return out.reshape(shape)


def _pair_energy(field: LabelField, table: KernelTable) -> float:
    u = field.labels.astype(float)
    if u.size == 0:
        return 0.0
    ones = _free_window(field, u)
    zeros = _free_window(field, 1.0 - u)
    if not ones.any() or not zeros.any():
        return 0.0
    conv = fftconvolve(zeros, table.weights, mode="same")
    return float(np.sum(ones * conv))


def fractional_perimeter(field: LabelField, table: KernelTable) -> EnergyReport:
    """Energy of ``field`` split into free-free, free-fixed and far-field parts."""
    prob = field.problem
    un = unaries(prob, table)
    u = field.labels.astype(float)
    ii = _pair_energy(field, table)
    fx = float(u @ un.fixed_out + (1.0 - u) @ un.fixed_in)
    tl = float(u @ un.tail_in + (1.0 - u) @ un.tail_out)
    return EnergyReport(ii, fx, tl, ii + fx + tl)


def energy_delta(field: LabelField, cell: int, table: KernelTable) -> float:
    """``P(flip cell) - P(field)`` from the cell's neighbourhood only.

    ``cell`` is a position in the free-label vector.
    """
    prob = field.problem
    un = unaries(prob, table)
    ui = int(field.labels[cell])
    K = table.K
    coords = prob.free_coords[cell]
    win = np.zeros(prob.grid.shape)
    # +1 for free cells labeled 0, -1 for free cells labeled 1
    win.ravel()[prob.free_index] = 1.0 - 2.0 * field.labels
    sl_w, sl_k = [], []
    for c, size in zip(coords, prob.grid.shape):
        lo, hi = max(c - K, 0), min(c + K + 1, size)
        sl_w.append(slice(lo, hi))
        sl_k.append(slice(lo - (c - K), hi - (c - K)))
    local = win[tuple(sl_w)]
    pair = float(np.sum(local * table.weights[tuple(sl_k)]))
    return (1 - 2 * ui) * (un.cost1[cell] - un.cost0[cell] + pair)
