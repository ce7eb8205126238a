"""M-sweeps, regime classification, critical-width search and stickiness depth fits."""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .energy import fractional_perimeter
from .geometry import LabelField, ProblemSpec, connected_components, make_problem
from .io import atomic_write_text, csv_text, write_json
from .kernel import build_kernel_table
from .mincut import min_cut

log = logging.getLogger(__name__)

STICKY = "Sticky"
CONNECTED_OTHER = "ConnectedOther"
DISCONNECTED = "Disconnected"
FAILED = "Failed"

CSV_COLUMNS = ("M", "regime", "energy", "depth_center", "depth_wall", "component_count",
               "h", "s", "n", "wall_clock")


class MonotonicityWarning(UserWarning):
    """Regimes along increasing M re-enter a connected state after a disconnected one."""


class ResolutionWarning(UserWarning):
    """A requested tolerance or measurement is below the grid resolution."""


@dataclass
class SweepRow:
    M: float
    regime: str
    energy: float
    depth_center: float
    depth_wall: float
    component_count: int
    h: float
    s: float
    n: int
    wall_clock: float
    # diagnostics that are not part of the CSV schema
    degenerate: bool = False
    free_depth: float | None = None
    resolution_limited: bool = False
    error: str = ""

    def csv_values(self) -> list:
        return [_num(getattr(self, c)) for c in CSV_COLUMNS]

    def to_dict(self) -> dict:
        return asdict(self)


def _num(x):
    if isinstance(x, float):
        return repr(x)
    return x


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    return csv_text(CSV_COLUMNS, [r.csv_values() for r in rows])


# --- classification ----------------------------------------------------------------

def _column_index(problem: ProblemSpec, where: str) -> tuple:
    c = problem.grid.cols
    mid = c // 2
    if where == "center":
        return (mid,) * (problem.n - 1)
    # the in-cylinder column nearest |x'| = 1, along the first lateral axis
    return (0,) + (mid,) * (problem.n - 2)


def column_depth(field: LabelField, report, where: str = "center") -> float:
    """Protrusion depth past the slab faces on one column, the smaller of the two sides."""
    prob = field.problem
    g = prob.grid
    col = _column_index(prob, where)
    labs = report.labels[(slice(None),) + col]
    rows = np.arange(g.rows)
    depths = []
    # bottom: highest cell of the bottom exterior's component, measured from -M
    sel = rows[labs == report.bottom_label]
    depths.append(float(g.row_center(sel.max()) + g.h / 2 + prob.M) if sel.size else 0.0)
    sel = rows[labs == report.top_label]
    depths.append(float(prob.M - (g.row_center(sel.min()) - g.h / 2)) if sel.size else 0.0)
    d = min(depths)
    # exact multiples of h up to round-off
    return float(round(d / g.h) * g.h) if abs(d / g.h - round(d / g.h)) < 1e-9 else d


def classify_minimizer(field: LabelField, problem: ProblemSpec | None = None) -> dict:
    """Regime, component count and protrusion depths of a minimizer."""
    prob = field.problem if problem is None else problem
    if prob != field.problem:
        raise ValueError("field belongs to a different problem")
    rep = connected_components(field)
    if prob.num_free and field.labels.all() and prob.free_depth is None:
        regime = STICKY
    elif rep.is_full_window:
        regime = CONNECTED_OTHER
    else:
        regime = DISCONNECTED
    return {
        "regime": regime,
        "component_count": rep.num_components,
        "is_full_window": rep.is_full_window,
        "depth_center": column_depth(field, rep, "center"),
        "depth_wall": column_depth(field, rep, "wall"),
    }


# --- resolution and instances ----------------------------------------------------------

def _tiles(M: float, pad: float, m: int) -> bool:
    return all(abs(v * m - round(v * m)) < 1e-9 for v in (2 * M, pad))


def resolution_for(M: float, s: float, guard: float = 0.125, h_max: float = 0.125, pad: float = 1.0) -> float:
    """Grid size ``h <= min(h_max, M/8, guard * M^{-s})`` that tiles the window.

    Powers of two are preferred; otherwise the coarsest ``1/m`` that tiles.
    """
    target = min(h_max, M / 8.0, guard * M ** (-s))
    m_min = math.ceil(1.0 / target - 1e-9)
    m = 1 << max(0, (m_min - 1).bit_length())
    if _tiles(M, pad, m):
        return 1.0 / m
    for m in range(m_min, 64 * m_min):
        if _tiles(M, pad, m):
            return 1.0 / m
    raise ValueError(f"no grid of size <= {target:g} tiles M = {M}")


def snap_M(M: float, h: float) -> float:
    """Nearest multiple of ``h/2`` (so that ``+-M`` fall on cell faces)."""
    q = Fraction(h).limit_denominator(1 << 20) / 2
    k = max(1, round(Fraction(M) / q))
    return float(k * q)


@dataclass(frozen=True)
class SweepTemplate:
    """Everything except ``M`` that defines a sweep instance.

    ``h=None`` applies :func:`resolution_for`.  ``free_depth="auto"``
    freezes the slab core for ``M > band_above`` to a band of width
    ``max(2 M^{-s}, 8h)`` at each face, widened automatically whenever the
    minimizer reaches the band's inner edge.
    """

    n: int = 2
    s: float = 0.5
    pad: float = 1.0
    clamp_band: bool = True
    h: float | None = None
    guard: float = 0.125
    h_max: float = 0.125
    trunc_cap: float | None = 4.0
    free_depth: object = "auto"
    band_above: float = 4.0
    cache_dir: str | None = None

    def resolution(self, M: float) -> float:
        if self.h is not None:
            return self.h
        return resolution_for(M, self.s, self.guard, self.h_max, self.pad)

    def trunc(self, M: float) -> float:
        t = max(4.0, 2.0 * M)
        return t if self.trunc_cap is None else min(t, self.trunc_cap)

    def initial_band(self, M: float, h: float):
        if self.free_depth is None:
            return None
        if self.free_depth != "auto":
            fd = float(self.free_depth)
            return None if fd >= M else fd
        if M <= self.band_above:
            return None
        fd = max(2.0 * M ** (-self.s), 8 * h)
        fd = math.ceil(fd / h - 1e-9) * h
        return None if fd >= M else fd

    def problem(self, M: float, free_depth=None) -> ProblemSpec:
        h = self.resolution(M)
        return make_problem(n=self.n, s=self.s, M=M, h=h, pad=self.pad, clamp_band=self.clamp_band,
                            trunc_radius=self.trunc(M), free_depth=free_depth)


def _band_binds(field: LabelField) -> bool:
    """Whether a free cell on the inner edge of the free band is labeled 1."""
    prob = field.problem
    if prob.free_depth is None:
        return False
    rows = prob.free_coords[:, 0]
    xn = np.abs(prob.grid.row_center(rows))
    inner = prob.M - xn > prob.free_depth - prob.h * (1 + 1e-9)
    return bool(np.any(field.labels[inner & (xn < prob.M)] == 1))


def solve(template: SweepTemplate, M: float):
    """Exact minimizer for one ``M``; returns ``(problem, table, flow)``.

    With a frozen core the band is doubled until the minimizer stays off its
    inner edge (or the band covers the whole slab).
    """
    h = template.resolution(M)
    fd = template.initial_band(M, h)
    while True:
        prob = template.problem(M, fd)
        table = build_kernel_table(prob, cache_dir=template.cache_dir)
        res = min_cut(prob, table)
        if fd is None or not _band_binds(res.labels):
            return prob, table, res
        log.info("M=%g: free band %g binds, widening", M, fd)
        fd = 2 * fd
        if fd >= M:
            fd = None


def run_row(M: float, template: SweepTemplate) -> tuple[SweepRow, LabelField | None]:
    t0 = time.perf_counter()
    h = template.resolution(M)
    try:
        prob, table, res = solve(template, M)
        info = classify_minimizer(res.labels)
        energy = fractional_perimeter(res.labels, table).total
        row = SweepRow(
            M=float(M), regime=info["regime"], energy=float(energy), depth_center=info["depth_center"],
            depth_wall=info["depth_wall"], component_count=int(info["component_count"]), h=prob.h,
            s=prob.s, n=prob.n, wall_clock=time.perf_counter() - t0, degenerate=res.degenerate,
            free_depth=prob.free_depth,
            resolution_limited=bool(info["regime"] == DISCONNECTED and prob.h > template.guard * M ** (-prob.s) * (1 + 1e-9)),
        )
        return row, res.labels
    except Exception as exc:  # a failed row must not stop the sweep
        log.warning("M=%g failed: %s", M, exc)
        row = SweepRow(M=float(M), regime=FAILED, energy=float("nan"), depth_center=float("nan"),
                       depth_wall=float("nan"), component_count=0, h=h, s=template.s, n=template.n,
                       wall_clock=time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")
        return row, None


def sweep_M(M_values: Sequence[float], template: SweepTemplate | None = None, csv_path=None,
            n_jobs: int = 1) -> list[SweepRow]:
    """One exact minimization per ``M``; rows come back in input order."""
    template = template or SweepTemplate()
    M_values = [float(m) for m in M_values]
    if any(b <= a for a, b in zip(M_values, M_values[1:])):
        raise ValueError("M_values must be strictly increasing")
    if n_jobs == 1 or len(M_values) < 2:
        rows = [run_row(M, template)[0] for M in M_values]
    else:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs)(delayed(_row_only)(M, template) for M in M_values)
    check_monotone(rows)
    if csv_path is not None:
        atomic_write_text(csv_path, rows_to_csv(rows))
    return rows


def _row_only(M, template):
    return run_row(M, template)[0]


def check_monotone(rows: Sequence[SweepRow]) -> bool:
    """Warn if a connected regime follows a disconnected one at larger ``M``."""
    seen_disc = False
    ok = True
    for r in sorted((r for r in rows if r.regime != FAILED), key=lambda r: r.M):
        if r.regime == DISCONNECTED:
            seen_disc = True
        elif seen_disc:
            ok = False
            warnings.warn(f"regime {r.regime} at M={r.M} after a disconnected row", MonotonicityWarning)
    return ok


# --- critical M ----------------------------------------------------------------------

@dataclass
class CriticalInterval:
    lo: float
    hi: float
    lo_row: SweepRow
    hi_row: SweepRow
    evaluations: list = field(default_factory=list)
    ok: bool = True
    message: str = ""

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "width": self.width, "ok": self.ok, "message": self.message,
                "lo_row": self.lo_row.to_dict(), "hi_row": self.hi_row.to_dict(),
                "evaluations": [r.to_dict() for r in self.evaluations]}


def locate_critical_M(lo: float, hi: float, tol: float = 0.1, template: SweepTemplate | None = None,
                      rows: Sequence[SweepRow] = ()) -> CriticalInterval:
    """Bisection on "disconnected" between ``lo`` (connected) and ``hi`` (disconnected).

    Midpoints are snapped to multiples of ``h/2`` of their own resolution so
    every evaluation is an exactly tiled instance.  ``rows`` from an earlier
    sweep are included in the monotonicity check.
    """
    template = template or SweepTemplate()
    cache = {}

    def row(M):
        if M not in cache:
            cache[M] = run_row(M, template)[0]
        return cache[M]

    lo_row, hi_row = row(lo), row(hi)
    if lo_row.regime == DISCONNECTED or hi_row.regime != DISCONNECTED:
        msg = f"precondition violated: regime({lo})={lo_row.regime}, regime({hi})={hi_row.regime}"
        log.warning(msg)
        return CriticalInterval(lo, hi, lo_row, hi_row, [lo_row, hi_row], ok=False, message=msg)
    floor = max(template.resolution(lo), template.resolution(hi))
    if tol < floor:
        warnings.warn(f"tolerance {tol} below grid size {floor}; using {floor}", ResolutionWarning)
        tol = floor
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        mid = snap_M(mid, template.resolution(mid))
        if not lo < mid < hi:
            break
        r = row(mid)
        if r.regime == FAILED:
            return CriticalInterval(lo, hi, cache[lo], cache[hi], list(cache.values()), ok=False,
                                    message=f"evaluation failed at M={mid}: {r.error}")
        if r.regime == DISCONNECTED:
            hi = mid
        else:
            lo = mid
    evals = sorted(cache.values(), key=lambda r: r.M)
    check_monotone(list(evals) + list(rows))
    return CriticalInterval(lo, hi, cache[lo], cache[hi], evals)


# --- depth fit -------------------------------------------------------------------------

@dataclass
class DepthFit:
    exponent: float
    intercept: float
    residual: float
    predicted_exponents: dict
    M_values: list
    depths: list
    resolution_limited: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def predicted_exponents(s: float, eps0: float = 0.0) -> dict:
    return {"ball_bound": -s, "planar_bound": -(2 + eps0) * s / (1 - s)}


def stickiness_depth_fit(rows: Sequence[SweepRow], eps0: float = 0.0) -> DepthFit:
    """Least-squares slope of log depth_center against log M over disconnected rows."""
    rows = [r for r in rows if r.regime == DISCONNECTED]
    if len(rows) < 4:
        raise ValueError(f"depth fit needs at least 4 disconnected rows, got {len(rows)}")
    s = rows[0].s
    Ms = [r.M for r in rows]
    depths = [r.depth_center for r in rows]
    pred = predicted_exponents(s, eps0)
    if max(Ms) < 10 * min(Ms):
        warnings.warn("depth fit spans less than one decade in M", ResolutionWarning)
    zero = [r.M for r in rows if not r.depth_center > 0]
    floor = all(abs(r.depth_center - r.h) < 1e-12 * max(1.0, r.h) for r in rows)
    if zero or floor:
        msg = (f"depth_center = 0 at M = {zero}" if zero else "every depth equals its cell size")
        return DepthFit(float("nan"), float("nan"), float("nan"), pred, Ms, depths,
                        resolution_limited=True, message=msg + "; fit aborted (resolution-limited)")
    x, y = np.log(Ms), np.log(depths)
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / len(x))) if res.size else 0.0
    return DepthFit(float(coef[0]), float(coef[1]), resid, pred, Ms, depths)


def write_fit(path, fit: DepthFit) -> None:
    write_json(path, fit.to_dict())


# --- sliding balls -----------------------------------------------------------------------

@dataclass
class SlideResult:
    touched: bool
    offset: float
    cells: list
    direction: str
    radius: float
    inside_omega: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _cell_boxes(problem: ProblemSpec, mask: np.ndarray):
    g = problem.grid
    idx = np.argwhere(mask)
    lo = np.empty(idx.shape, dtype=float)
    # columns: lateral coords first, x_n last
    for k in range(1, problem.n):
        lo[:, k - 1] = g.col_center(idx[:, k]) - g.h / 2
    lo[:, -1] = g.row_center(idx[:, 0]) - g.h / 2
    return idx, lo, lo + g.h


def sliding_ball_check(field: LabelField, radius: float, direction: str = "down") -> SlideResult:
    """Slide a ball along an axis until it first meets a window cell of the other phase.

    ``down``: a ball inside E centred on the axis comes down from above and
    stops at the first cell labeled 0.  ``right``: a ball in E^c centred on
    the ``x_1`` axis moves in the ``+x_1`` direction and stops at the first
    cell labeled 1.  Cells are closed boxes and contact is computed exactly.
    """
    prob = field.problem
    g = prob.grid
    win = field.window()
    if direction == "down":
        if radius >= 1:
            raise ValueError("vertical slides need radius < 1 (ball must fit in the cylinder)")
        idx, lo, hi = _cell_boxes(prob, win == 0)
        lat = np.sqrt(np.sum(np.maximum(np.maximum(lo[:, :-1], -hi[:, :-1]), 0.0) ** 2, axis=1))
        ok = lat <= radius
        if not ok.any():
            return SlideResult(False, float("-inf"), [], direction, radius)
        t = hi[ok, -1] + np.sqrt(radius**2 - lat[ok] ** 2)
    elif direction == "right":
        if radius > g.H:
            raise ValueError("ball taller than the window")
        if radius >= prob.M:
            # the ball always meets the datum {|x_n| > M} itself
            return SlideResult(True, float("-inf"), [], direction, radius, False)
        idx, lo, hi = _cell_boxes(prob, win == 1)
        # distance in the directions orthogonal to x_1
        d2 = np.sum(np.maximum(np.maximum(lo[:, 1:], -hi[:, 1:]), 0.0) ** 2, axis=1)
        ok = d2 <= radius**2
        if not ok.any():
            return SlideResult(False, float("inf"), [], direction, radius)
        t = -(lo[ok, 0] - np.sqrt(radius**2 - d2[ok]))  # negate: earliest contact is the smallest centre
    else:
        raise ValueError("direction must be 'down' or 'right'")
    best = t.max()
    hit = np.nonzero(np.abs(t - best) <= 1e-12 * max(1.0, abs(best)))[0]
    cells = idx[ok][hit]
    inside = bool(np.any(prob.in_omega[tuple(cells.T)])) if len(cells) else False
    offset = float(best) if direction == "down" else float(-best)
    return SlideResult(True, offset, [tuple(int(v) for v in c) for c in cells], direction, radius, inside)
