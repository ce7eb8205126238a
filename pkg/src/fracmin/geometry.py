"""Cylinder domain, discretization window, label fields and their connectivity.

Window arrays are indexed ``[row, col1, ...]`` where ``row`` runs along
``x_n`` (bottom to top) and the remaining axes along ``x_1, ..., x_{n-1}``.
Cells tile ``[-1, 1]^{n-1} x [-H, H]`` with ``H = M + pad``; the slab faces
``x_n = +-M`` always fall on cell faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .shapes import ShapeExpr, slab_complement


def _as_count(x: float, what: str) -> int:
    k = round(x)
    if k < 1 or abs(x - k) > 1e-9 * max(1.0, abs(x)):
        raise ValueError(f"non-tiling h: {what} = {x:.12g} is not a positive integer")
    return int(k)


@dataclass(frozen=True)
class GridSpec:
    n: int
    h: float
    M: float
    pad: float = 1.0

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"dimension n must be 2 or 3, got {self.n}")
        if not self.h > 0:
            raise ValueError("cell size h must be positive")
        if self.pad < 1.0:
            raise ValueError("pad must be >= 1")
        _as_count(2.0 / self.h, "2/h")
        _as_count(2.0 * self.H / self.h, "2H/h")
        _as_count(self.pad / self.h, "pad/h")
        _as_count(2.0 * self.M / self.h, "2M/h")

    @property
    def H(self) -> float:
        return self.M + self.pad

    @property
    def rows(self) -> int:
        return round(2.0 * self.H / self.h)

    @property
    def cols(self) -> int:
        return round(2.0 / self.h)

    @property
    def shape(self) -> tuple:
        return (self.rows,) + (self.cols,) * (self.n - 1)

    @property
    def pad_rows(self) -> int:
        """Rows between a slab face and the window edge."""
        return round(self.pad / self.h)

    def row_center(self, j):
        return -self.H + (np.asarray(j, dtype=float) + 0.5) * self.h

    def col_center(self, c):
        return -1.0 + (np.asarray(c, dtype=float) + 0.5) * self.h

    def cell_centers(self) -> np.ndarray:
        """Centers of all window cells, shape ``shape + (n,)`` in ``(x_1, ..., x_n)`` order."""
        axes = [self.row_center(np.arange(self.rows))] + [self.col_center(np.arange(self.cols))] * (self.n - 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh[1:] + mesh[:1], axis=-1)

    def row_in_datum(self, j) -> np.ndarray:
        """Whether global row ``j`` (any integer, may lie outside the window) is inside ``{|x_n| > M}``."""
        return np.abs(self.row_center(j)) > self.M


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A full instance: grid, exponent ``s``, slab half-width ``M`` and clamping policy.

    ``free_depth`` (optional) additionally freezes the slab core: only cells
    within ``free_depth`` of a slab face stay free, deeper cells keep their
    datum label (outside).  It exists to make large-``M`` runs tractable.
    """

    grid: GridSpec
    s: float
    M: float
    clamp_band: bool = True
    trunc_radius: float = 4.0
    free_depth: float | None = None

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s required in (0,1), got {self.s}")
        if not self.M > 0:
            raise ValueError(f"M must be positive, got {self.M}")
        if abs(self.grid.M - self.M) > 1e-12:
            raise ValueError("grid and problem disagree on M")
        if self.trunc_radius < 3 * self.grid.h - 1e-12:
            raise ValueError("trunc_radius must be at least 3h")
        if self.free_depth is not None and self.free_depth <= 0:
            raise ValueError("free_depth must be positive")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def h(self) -> float:
        return self.grid.h

    def key(self) -> tuple:
        g = self.grid
        return (g.n, self.s, self.M, g.h, g.pad, bool(self.clamp_band), self.trunc_radius, self.free_depth)

    def __eq__(self, other):
        return isinstance(other, ProblemSpec) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    @cached_property
    def exterior(self) -> ShapeExpr:
        return slab_complement(self.n, self.M)

    @cached_property
    def in_omega(self) -> np.ndarray:
        centers = self.grid.cell_centers()
        return np.sum(centers[..., :-1] ** 2, axis=-1) < 1.0

    @cached_property
    def datum_labels(self) -> np.ndarray:
        """Labels of ``{|x_n| > M}`` on the window (uint8)."""
        rows = self.grid.row_in_datum(np.arange(self.grid.rows))
        return np.broadcast_to(rows.reshape((-1,) + (1,) * (self.n - 1)), self.grid.shape).astype(np.uint8)

    @cached_property
    def free_mask(self) -> np.ndarray:
        mask = self.in_omega.copy()
        xn = np.abs(self.grid.row_center(np.arange(self.grid.rows)))
        keep = np.ones(self.grid.rows, dtype=bool)
        if self.clamp_band:
            keep &= xn < self.M
        if self.free_depth is not None:
            keep &= (xn >= self.M) | (self.M - xn < self.free_depth)
        mask &= keep.reshape((-1,) + (1,) * (self.n - 1))
        mask.setflags(write=False)
        return mask

    @cached_property
    def free_index(self) -> np.ndarray:
        """Flat window indices of the free cells, in row-major order."""
        return np.flatnonzero(self.free_mask)

    @property
    def num_free(self) -> int:
        return int(self.free_index.size)

    @cached_property
    def free_coords(self) -> np.ndarray:
        """Integer window coordinates ``(row, col1, ...)`` of the free cells."""
        return np.stack(np.unravel_index(self.free_index, self.grid.shape), axis=1)


def make_problem(n=2, s=0.5, M=1.0, h=0.125, pad=1.0, clamp_band=True, trunc_radius=None, free_depth=None) -> ProblemSpec:
    """Validate parameters and build a :class:`ProblemSpec`.

    ``trunc_radius`` defaults to ``max(4, 2M)``.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"s required in (0,1), got {s}")
    if not M > 0:
        raise ValueError(f"M must be positive, got {M}")
    if trunc_radius is None:
        trunc_radius = max(4.0, 2.0 * M)
    grid = GridSpec(n=int(n), h=float(h), M=float(M), pad=float(pad))
    return ProblemSpec(grid=grid, s=float(s), M=float(M), clamp_band=bool(clamp_band),
                       trunc_radius=float(trunc_radius),
                       free_depth=None if free_depth is None else float(free_depth))


@dataclass(frozen=True, eq=False)
class LabelField:
    """Binary labels on the free cells (1 = inside E); fixed cells follow the datum."""

    problem: ProblemSpec
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels).astype(np.uint8).ravel()
        if lab.size != self.problem.num_free:
            raise ValueError(f"expected {self.problem.num_free} labels, got {lab.size}")
        if lab.size and lab.max() > 1:
            raise ValueError("labels must be 0 or 1")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def exterior(self) -> ShapeExpr:
        return self.problem.exterior

    @classmethod
    def from_window(cls, problem: ProblemSpec, window) -> "LabelField":
        window = np.asarray(window)
        if window.shape != problem.grid.shape:
            raise ValueError(f"window shape {window.shape} != {problem.grid.shape}")
        return cls(problem, window.ravel()[problem.free_index])

    @classmethod
    def datum(cls, problem: ProblemSpec) -> "LabelField":
        return cls.from_window(problem, problem.datum_labels)

    @classmethod
    def full(cls, problem: ProblemSpec, value: int = 1) -> "LabelField":
        return cls(problem, np.full(problem.num_free, value, dtype=np.uint8))

    def window(self) -> np.ndarray:
        out = self.problem.datum_labels.copy().ravel()
        out[self.problem.free_index] = self.labels
        return out.reshape(self.problem.grid.shape)

    def flipped(self, i: int) -> "LabelField":
        lab = self.labels.copy()
        lab[i] ^= 1
        return LabelField(self.problem, lab)

    def reflected(self) -> "LabelField":
        """Mirror image under ``x_n -> -x_n``."""
        return LabelField.from_window(self.problem, self.window()[::-1])

    def __eq__(self, other):
        return (isinstance(other, LabelField) and self.problem == other.problem
                and np.array_equal(self.labels, other.labels))

    __hash__ = None


def free_cell_index(problem: ProblemSpec, coords) -> int:
    """Position in the free-label vector of the cell at window coordinates ``coords``."""
    flat = np.ravel_multi_index(tuple(int(c) for c in coords), problem.grid.shape)
    pos = np.searchsorted(problem.free_index, flat)
    if pos >= problem.num_free or problem.free_index[pos] != flat:
        raise ValueError(f"cell {tuple(coords)} is not free")
    return int(pos)


@dataclass(frozen=True)
class ComponentReport:
    num_components: int
    touches_top: tuple
    touches_bottom: tuple
    is_full_window: bool
    labels: np.ndarray = field(repr=False, compare=False, default=None)
    top_label: int = 0
    bottom_label: int = 0


def label_components(mask) -> tuple[np.ndarray, int]:
    """Face-adjacency components of a boolean array (no exterior nodes)."""
    mask = np.asarray(mask, dtype=bool)
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    return ndimage.label(mask, structure=structure)


def _padded_window(field: LabelField) -> np.ndarray:
    """Window labels surrounded by one layer of datum cells.

    The top and bottom layers stand for the exterior half-spaces; the lateral
    layer carries the datum so that window cells above ``M`` touching the
    side connect to the top exterior, as they do in R^n.
    """
    prob = field.problem
    win = field.window()
    padded = np.pad(win, 1, mode="constant", constant_values=0)
    rows_dat = prob.grid.row_in_datum(np.arange(-1, prob.grid.rows + 1)).astype(np.uint8)
    lateral = np.broadcast_to(rows_dat.reshape((-1,) + (1,) * (prob.n - 1)), padded.shape)
    border = np.ones(padded.shape, dtype=bool)
    border[(slice(None),) + (slice(1, -1),) * (prob.n - 1)] = False
    padded = np.where(border, lateral, padded)
    padded[0] = 1
    padded[-1] = 1
    return padded


def connected_components(field: LabelField) -> ComponentReport:
    """Components of E inside the window, with the two exterior half-spaces as extra nodes."""
    padded = _padded_window(field)
    lab, num = label_components(padded)
    top = int(lab[-1].flat[0])
    bottom = int(lab[0].flat[0])
    ids = range(1, num + 1)
    return ComponentReport(
        num_components=int(num),
        touches_top=tuple(i == top for i in ids),
        touches_bottom=tuple(i == bottom for i in ids),
        is_full_window=top == bottom,
        labels=lab[(slice(1, -1),) * padded.ndim],
        top_label=top,
        bottom_label=bottom,
    )


# --- grid dump format -------------------------------------------------------

DUMP_MAGIC = "# fracmin grid v1"


def _fmt(x) -> str:
    return repr(float(x))


def dumps_field(field: LabelField) -> str:
    """Text dump: header lines then one run-length-encoded line per window row.

    For ``n = 3`` each line is one ``(x_n, x_2)`` row with runs along ``x_1``;
    ``x_n`` is the outermost loop.
    """
    p = field.problem
    g = p.grid
    head = [
        DUMP_MAGIC,
        f"n {g.n}",
        f"s {_fmt(p.s)}",
        f"M {_fmt(p.M)}",
        f"h {_fmt(g.h)}",
        f"pad {_fmt(g.pad)}",
        f"clamp {int(p.clamp_band)}",
        f"trunc {_fmt(p.trunc_radius)}",
        f"free_depth {'none' if p.free_depth is None else _fmt(p.free_depth)}",
        f"shape {' '.join(str(k) for k in g.shape)}",
    ]
    win = field.window().reshape(-1, g.cols)
    lines = []
    for row in win:
        runs = []
        start = 0
        for i in range(1, len(row) + 1):
            if i == len(row) or row[i] != row[start]:
                runs.append(f"{int(row[start])}*{i - start}")
                start = i
        lines.append(" ".join(runs))
    return "\n".join(head + lines) + "\n"


def loads_field(text: str) -> LabelField:
    lines = text.splitlines()
    if not lines or lines[0].strip() != DUMP_MAGIC:
        raise ValueError("not a fracmin grid dump")
    meta = {}
    i = 1
    while i < len(lines) and not lines[i][:1].isdigit():
        key, _, val = lines[i].partition(" ")
        meta[key] = val.strip()
        i += 1
    fd = meta.get("free_depth", "none")
    problem = make_problem(
        n=int(meta["n"]), s=float(meta["s"]), M=float(meta["M"]), h=float(meta["h"]),
        pad=float(meta["pad"]), clamp_band=bool(int(meta["clamp"])), trunc_radius=float(meta["trunc"]),
        free_depth=None if fd == "none" else float(fd),
    )
    shape = tuple(int(k) for k in meta["shape"].split())
    if shape != problem.grid.shape:
        raise ValueError(f"shape {shape} does not match header parameters {problem.grid.shape}")
    rows = []
    for ln, line in enumerate(lines[i:], start=i + 1):
        row = []
        for tok in line.split():
            val, _, cnt = tok.partition("*")
            row.extend([int(val)] * int(cnt))
        if len(row) != problem.grid.cols:
            raise ValueError(f"line {ln}: expected {problem.grid.cols} cells, got {len(row)}")
        rows.append(row)
    win = np.asarray(rows, dtype=np.uint8).reshape(shape)
    return LabelField.from_window(problem, win)


def write_field(path, field: LabelField) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, dumps_field(field))


def read_field(path) -> LabelField:
    with open(path) as fh:
        return loads_field(fh.read())


__all__ = [
    "GridSpec", "ProblemSpec", "make_problem", "LabelField", "ComponentReport",
    "connected_components", "label_components", "free_cell_index",
    "dumps_field", "loads_field", "write_field", "read_field",
]

