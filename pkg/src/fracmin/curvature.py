"""Nonlocal mean curvature of analytic sets and of label fields.

The curvature of ``E`` at ``q`` is the principal value of
``(chi_{E^c} - chi_E)(y) |y - q|^{-(n+s)}``.  For analytic shapes the radial
part is integrated exactly: along a ray from ``q`` the sign is piecewise
constant between boundary crossings and ``r^{-1-s}`` has an elementary
antiderivative.  The divergent ``eps^{-s}`` term of the innermost interval is
dropped; it cancels between opposite directions whenever the boundary is
C^{1,1} at ``q``, so what remains is the exact symmetric-exclusion limit.
Only the angular integral is done numerically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.signal import fftconvolve

from .geometry import LabelField
from .kernel import KernelTable, halfspace_tail
from .shapes import Ball, BumpSubgraph, HalfSpace, ShapeExpr, Union, smoothstep_profile


@dataclass(frozen=True)
class NmcQuery:
    q: tuple
    set: object
    pv_radii: tuple = ()
    outer_radius: float | None = None


@dataclass(frozen=True)
class NmcResult:
    value: float
    error: float
    # diagnostic values of the truncated integral outside each exclusion radius
    pv_values: tuple = ()


def _sphere_points(n: int, k: int):
    if n == 2:
        t = 2 * np.pi * (np.arange(k) + 0.5) / k
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    phi = np.pi * (1 + 5**0.5) * i
    r = np.sqrt(1 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def outward_normal(shape: ShapeExpr, q, delta: float = 1e-6) -> np.ndarray:
    """Outward unit normal of ``shape`` at the boundary point ``q``.

    Exact when ``q`` lies on a primitive's boundary, otherwise estimated
    from membership on a small sphere around ``q``.
    """
    q = np.asarray(q, dtype=float)
    v = shape.normal_at(q)
    if v is not None:
        return np.asarray(v, dtype=float)
    dirs = _sphere_points(q.size, 720 if q.size == 2 else 4000)
    inside = shape.contains(q + delta * dirs)
    if inside.all() or not inside.any():
        raise ValueError(f"point {tuple(q)} is not on the boundary of the set")
    v = dirs[~inside].mean(axis=0) - dirs[inside].mean(axis=0)
    return v / np.linalg.norm(v)


def _ray_integral(shape: ShapeExpr, q, d, s: float, eps: float = 0.0) -> float:
    """``int_eps^inf sigma(r) r^{-1-s} dr`` along ``q + r d``; ``eps = 0`` drops the divergent term."""
    r = shape.ray_crossings(q, d)
    r = r[r > eps] if eps > 0 else r
    edges = np.concatenate([[eps], r, [np.inf]])
    lo, hi = edges[:-1], edges[1:]
    mid = np.where(np.isinf(hi), 2.0 * lo + 1.0, 0.5 * (lo + hi))
    sigma = 1.0 - 2.0 * shape.contains(q[None, :] + mid[:, None] * d[None, :]).astype(float)
    # radii where the side does not change are not crossings; merging them
    # avoids cancelling large powers of tiny spurious radii
    keep = np.concatenate([[True], sigma[1:] != sigma[:-1]])
    sigma = sigma[keep]
    lo = lo[keep]
    hi = np.concatenate([lo[1:], [np.inf]])
    with np.errstate(divide="ignore"):
        a = np.where(lo > 0, lo ** (-s), 0.0)
        b = hi ** (-s)
    return float(np.sum(sigma * (a - b)) / s)


def _direction(theta, normal2):
    # angle measured from the outward normal
    c, sn = math.cos(theta), math.sin(theta)
    return np.array([c * normal2[0] - sn * normal2[1], sn * normal2[0] + c * normal2[1]])


def _crossing_count(shape, q, d):
    return shape.ray_crossings(q, d).size + shape.ray_crossings(q, -d).size


def _breakpoints(shape, q, normal, lo, hi, samples=720):
    """Angles in ``(lo, hi)`` where the number of crossings changes.

    The paired integrand has square-root kinks there (rays tangent to the
    boundary elsewhere, or rays escaping parallel to a flat part); making
    them interval ends keeps the adaptive quadrature cheap.
    """
    grid = np.linspace(lo, hi, samples + 1)[1:-1]
    counts = [_crossing_count(shape, q, _direction(t, normal)) for t in grid]
    out = []
    for a, b, ca, cb in zip(grid[:-1], grid[1:], counts[:-1], counts[1:]):
        if ca == cb:
            continue
        for _ in range(45):
            m = 0.5 * (a + b)
            if _crossing_count(shape, q, _direction(m, normal)) == ca:
                a = m
            else:
                b = m
        out.append(0.5 * (a + b))
    return out


def _nmc_2d(shape, q, s, normal, eps, epsabs):
    def pair(theta):
        d = _direction(theta, normal)
        return _ray_integral(shape, q, d, s, eps) + _ray_integral(shape, q, -d, s, eps)

    # pi/2 is the tangent at q: an integrable |pi/2 - theta|^{-s} singularity
    # on curved boundaries, a |pi/2 - theta|^{s} cusp next to flat pieces.
    # Both sit at interval ends, where the extrapolating quadrature copes.
    half = np.pi / 2
    cuts = _breakpoints(shape, q, normal, 0.0, np.pi)
    for v in shape.special_directions(q):
        # angle of v measured from the normal, folded to [0, pi) since rays come in pairs
        th = math.atan2(normal[0] * v[1] - normal[1] * v[0], float(np.dot(normal, v))) % np.pi
        cuts.append(th)
    cuts = [b for b in cuts if 1e-9 < b < np.pi - 1e-9 and abs(b - half) > 1e-6]
    edges = sorted(set([0.0, half, np.pi] + cuts))
    val = err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(pair, a, b, limit=200, epsabs=epsabs, epsrel=1e-11)
        val += v
        err += e
    return val, err


def _frame(normal):
    normal = np.asarray(normal, dtype=float)
    a = np.eye(3)[np.argmin(np.abs(normal))]
    e1 = np.cross(normal, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return normal, e1, e2


def _nmc_3d(shape, q, s, normal, eps, epsabs, n_azimuth=64):
    nrm, e1, e2 = _frame(normal)
    psi = 2 * np.pi * np.arange(n_azimuth) / n_azimuth

    def ring(theta):
        st, ct = math.sin(theta), math.cos(theta)
        tot = 0.0
        for p in psi:
            d = ct * nrm + st * (math.cos(p) * e1 + math.sin(p) * e2)
            tot += _ray_integral(shape, q, d, s, eps) + _ray_integral(shape, q, -d, s, eps)
        return st * tot * (2 * np.pi / n_azimuth)

    half = np.pi / 2
    val, err = integrate.quad(ring, 0.0, half, limit=200, epsabs=epsabs, epsrel=1e-9)
    return val, err


def nmc_analytic(query: NmcQuery, s: float, normal=None, epsabs: float = 1e-10) -> NmcResult:
    """Nonlocal mean curvature of an analytic shape at a boundary point.

    Works in two and three dimensions.  ``query.pv_radii`` optionally lists
    exclusion radii; the integral outside each ball is reported alongside
    the limit value for inspection.
    """
    shape = query.set
    if not isinstance(shape, ShapeExpr):
        raise TypeError("nmc_analytic needs an analytic shape; use nmc_grid for label fields")
    if not 0 < s < 1:
        raise ValueError(f"s required in (0,1), got {s}")
    q = np.asarray(query.q, dtype=float)
    if normal is None:
        normal = outward_normal(shape, q)
    normal = np.asarray(normal, dtype=float) / np.linalg.norm(normal)
    solver = {2: _nmc_2d, 3: _nmc_3d}.get(q.size)
    if solver is None:
        raise ValueError("only n = 2 and n = 3 are supported")
    radii = list(query.pv_radii)
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("pv_radii must be strictly decreasing")
    pv = []
    with warnings.catch_warnings():
        # QUADPACK flags round-off near the requested 1e-11; the estimate is returned in ``error``
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = solver(shape, q, s, normal, 0.0, epsabs)
        for rho in radii:
            pv.append(solver(shape, q, s, normal, float(rho), epsabs)[0])
    return NmcResult(val, err, tuple(pv))


# --- grid version ------------------------------------------------------------------

def _sigma_extended(field: LabelField, K: int) -> np.ndarray:
    prob = field.problem
    g = prob.grid
    rows = np.arange(-K, g.rows + K)
    datum = g.row_in_datum(rows).reshape((-1,) + (1,) * (prob.n - 1))
    shape = tuple(k + 2 * K for k in g.shape)
    lab = np.broadcast_to(datum, shape).astype(float).copy()
    inner = (slice(K, K + g.rows),) + (slice(K, K + g.cols),) * (prob.n - 1)
    lab[inner] = field.window()
    return 1.0 - 2.0 * lab


def cell_sums(field: LabelField, table: KernelTable) -> np.ndarray:
    """``sum_k sigma_k w(k - i)`` over all other cells, far field included, for every window cell."""
    prob = field.problem
    if not table.matches(prob):
        raise ValueError("kernel table was built for a different problem")
    K = table.K
    near = fftconvolve(_sigma_extended(field, K), table.weights, mode="valid")
    tin, tout = table.row_tails(np.arange(prob.grid.rows))
    return near + (tin - tout).reshape((-1,) + (1,) * (prob.n - 1))


@dataclass(frozen=True)
class Face:
    cell: tuple
    axis: int
    inner: tuple  # the neighbour across the face, labeled opposite


def interface_faces(field: LabelField):
    """Faces between window cells with different labels (each reported once)."""
    win = field.window()
    out = []
    for ax in range(win.ndim):
        a = np.swapaxes(win, 0, ax)
        diff = a[1:] != a[:-1]
        for idx in np.argwhere(diff):
            i = list(idx)
            j = list(idx)
            j[0] += 1
            i[0], i[ax] = i[ax], i[0]
            j[0], j[ax] = j[ax], j[0]
            out.append(Face(tuple(int(v) for v in i), ax, tuple(int(v) for v in j)))
    return out


def face_center(field: LabelField, face: Face) -> np.ndarray:
    g = field.problem.grid
    i, j = np.asarray(face.cell), np.asarray(face.inner)
    c = 0.5 * (i + j)
    x = [float(g.col_center(v)) for v in c[1:]] + [float(g.row_center(c[0]))]
    return np.asarray(x)


def _nearest_face(field: LabelField, q) -> Face:
    faces = interface_faces(field)
    if not faces:
        raise ValueError("field has no label interface")
    centers = np.array([face_center(field, f) for f in faces])
    k = int(np.argmin(np.sum((centers - np.asarray(q, dtype=float)) ** 2, axis=1)))
    if np.linalg.norm(centers[k] - q) > field.problem.h * (1 + 1e-9):
        raise ValueError(f"q = {tuple(q)} is not on a label interface")
    return faces[k]


def nmc_grid(query: NmcQuery, table: KernelTable, sums: np.ndarray | None = None) -> float:
    """Discrete curvature at the interface face nearest to ``query.q``.

    The value averages the per-cell kernel sums of the two cells sharing the
    face, normalized by the cell volume.
    """
    field = query.set
    if not isinstance(field, LabelField):
        raise TypeError("nmc_grid needs a LabelField")
    face = _nearest_face(field, np.asarray(query.q, dtype=float))
    if sums is None:
        sums = cell_sums(field, table)
    hn = field.problem.h ** field.problem.n
    return float(sums[face.cell] + sums[face.inner]) / (2 * hn)


def el_tolerance(h: float, s: float, scale: float = 1.0) -> float:
    return scale * h ** min(s, 1 - s)


def _ball_stencil(n: int, axis: int, sign: int, radius: float = 2.0):
    """Offsets (in cells, from the cell beside a face) of cells meeting a ball of ``radius`` cells
    tangent to that face on the cell's side."""
    c = np.zeros(n)
    c[axis] = sign * (radius - 0.5)
    r = int(np.ceil(radius)) + 1
    grid = np.stack(np.meshgrid(*([np.arange(-r, r + 1)] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return grid[np.sum((grid - c) ** 2, axis=1) < radius**2]


def _touchable(win: np.ndarray, cell, stencil, value: int) -> bool:
    pts = np.asarray(cell) + stencil
    ok = np.all((pts >= 0) & (pts < np.asarray(win.shape)), axis=1)
    return bool(np.all(win[tuple(pts[ok].T)] == value))


def euler_lagrange_report(field: LabelField, table: KernelTable, scale: float = 10.0) -> dict:
    """Signed curvature on interface faces in the open cylinder, as a diagnostic.

    A face is touchable from inside when a ball of radius ``2h`` tangent to it
    fits in the set, from outside when one fits in the complement.  The value
    is expected to be at most ``tol`` on the first kind and at least ``-tol``
    on the second.  Faces touchable from neither side (corners) are counted
    but not checked.
    """
    prob = field.problem
    sums = cell_sums(field, table)
    win = field.window()
    free = prob.free_mask
    hn = prob.h ** prob.n
    tol = el_tolerance(prob.h, prob.s, scale)
    stencils = {}
    vals, inside, outside = [], [], []
    corners = 0
    for f in interface_faces(field):
        if not (free[f.cell] or free[f.inner]):
            continue
        v = float(sums[f.cell] + sums[f.inner]) / (2 * hn)
        vals.append(v)
        # f.inner = f.cell + e_axis; find which side holds the set
        e_cell, o_cell, sign = (f.cell, f.inner, -1) if win[f.cell] == 1 else (f.inner, f.cell, 1)
        for key in ((f.axis, sign), (f.axis, -sign)):
            if key not in stencils:
                stencils[key] = _ball_stencil(prob.n, *key)
        t_in = _touchable(win, e_cell, stencils[(f.axis, sign)], 1)
        t_out = _touchable(win, o_cell, stencils[(f.axis, -sign)], 0)
        if t_in:
            inside.append(v)
        if t_out:
            outside.append(v)
        corners += not (t_in or t_out)
    vals, inside, outside = np.asarray(vals), np.asarray(inside), np.asarray(outside)
    bad = int(np.sum(inside > tol) + np.sum(outside < -tol))
    return {
        "faces": int(vals.size),
        "inside_touchable": int(inside.size),
        "outside_touchable": int(outside.size),
        "corner_faces": corners,
        "min": float(vals.min()) if vals.size else 0.0,
        "max": float(vals.max()) if vals.size else 0.0,
        "max_inside": float(inside.max()) if inside.size else None,
        "min_outside": float(outside.min()) if outside.size else None,
        "median_abs": float(np.median(np.abs(vals))) if vals.size else 0.0,
        "tolerance": tol,
        "violations": bad,
        "label_fraction": float(win[free].mean()) if free.any() else 0.0,
    }


# --- lens ----------------------------------------------------------------------------

def _sphere_area(k: int) -> float:
    """Surface measure of the unit sphere ``S^k``."""
    return 2 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def lens_complement_integral(R: float, lam: float, n: int, s: float, q=None) -> float:
    """Kernel mass of ``B_{lam R}(q)`` outside two radius-``R`` balls tangent at ``q`` from opposite sides.

    The result does not depend on where ``q`` is; the argument is accepted
    for symmetry with the other evaluators.
    """
    if lam <= 0 or R <= 0:
        raise ValueError("lens scale and radius must be positive")
    if lam > 1:
        raise ValueError("lam * R must not exceed R")
    rho = lam * R
    phimax = math.asin(min(1.0, lam / 2))

    def g(phi):
        # integrand times phi^s; the phi^{-s} factor goes into the quadrature weight
        sinc = math.sin(phi) / phi if phi > 0 else 1.0
        return ((2 * R * sinc) ** (-s) - rho ** (-s) * phi**s) * math.cos(phi) ** (n - 2)

    val, _ = integrate.quad(g, 0.0, phimax, weight="alg", wvar=(-s, 0.0), limit=200, epsabs=0, epsrel=1e-12)
    return 2 * _sphere_area(n - 2) * val / s


# --- barriers ------------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierSpec:
    eta: float
    M: float
    s: float = 0.5
    n: int = 2
    variant: str = "F"
    samples: int = 41

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.variant not in ("F", "G"):
            raise ValueError("variant must be 'F' or 'G'")
        if self.variant == "G" and self.eta >= 4 * self.M:
            raise ValueError("G needs eta < 4M so that the two pieces are disjoint")

    def shape(self) -> ShapeExpr:
        F = BumpSubgraph(eta=self.eta)
        if self.variant == "F":
            return F
        return Union(F, HalfSpace(self.n - 1, 4 * self.M, 1))


@dataclass
class BarrierReport:
    eta: float
    M: float
    s: float
    n: int
    variant: str
    max_over_boundary: float
    argmax: float
    max_formula: float | None = None
    G_strictly_negative: bool | None = None
    values: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _boundary_point(spec: BarrierSpec, r: float) -> np.ndarray:
    x = np.zeros(spec.n)
    x[0] = r
    x[-1] = spec.eta * float(smoothstep_profile(abs(r)))
    return x


def _bump_normal(spec: BarrierSpec, r: float) -> np.ndarray:
    # outward normal of the subgraph: (-eta phi'(r), 1) along the x_1 axis
    t = min(max((abs(r) - 0.5) * 4.0, 0.0), 1.0)
    dphi = -30.0 * t * t * (1 - t) ** 2 * 4.0 * np.sign(r)
    v = np.zeros(spec.n)
    v[0] = -spec.eta * dphi
    v[-1] = 1.0
    return v / np.linalg.norm(v)


def barrier_nmc_bound(spec: BarrierSpec, radii: Sequence[float] | None = None) -> BarrierReport:
    """Largest curvature of the barrier over sampled boundary points.

    Boundary points are taken along the ``x_1`` axis over ``[0, 1]``
    (the bump is radial; the far flat part has curvature tending to 0 from
    below).  For variant ``G`` the maximum is computed on the union itself
    and, independently, from the ``F`` values minus twice the upper
    half-space tail; both are reported.
    """
    if radii is None:
        radii = np.linspace(0.0, 1.0, spec.samples)
    F = BumpSubgraph(eta=spec.eta)
    shape = spec.shape()
    vals = []
    for r in radii:
        p = _boundary_point(spec, r)
        v = nmc_analytic(NmcQuery(tuple(p), shape), spec.s, normal=_bump_normal(spec, r)).value
        vals.append((float(r), v))
    k = int(np.argmax([v for _, v in vals]))
    # refine the maximum between the neighbouring samples
    lo = vals[max(k - 1, 0)][0]
    hi = vals[min(k + 1, len(vals) - 1)][0]
    best_r, best_v = vals[k]
    if hi > lo:
        obj = lambda r: -nmc_analytic(NmcQuery(tuple(_boundary_point(spec, r)), shape), spec.s,
                                      normal=_bump_normal(spec, r)).value
        res = optimize.minimize_scalar(obj, bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
        if -res.fun > best_v:
            best_r, best_v = float(res.x), float(-res.fun)
    rep = BarrierReport(spec.eta, spec.M, spec.s, spec.n, spec.variant, best_v, best_r, values=vals)
    if spec.variant == "G":
        p = _boundary_point(spec, best_r)
        fval = nmc_analytic(NmcQuery(tuple(p), F), spec.s, normal=_bump_normal(spec, best_r)).value
        rep.max_formula = fval - 2 * float(halfspace_tail(4 * spec.M - p[-1], spec.n, spec.s))
        rep.G_strictly_negative = bool(best_v < 0 and rep.max_formula < 0)
    return rep


def fit_eta_growth(etas: Sequence[float], M: float = 10.0, s: float = 0.5, n: int = 2, samples: int = 21) -> dict:
    """Log-log slope of the barrier maximum against the bump height."""
    maxima = [barrier_nmc_bound(BarrierSpec(eta=e, M=M, s=s, n=n, samples=samples)).max_over_boundary for e in etas]
    if min(maxima) <= 0:
        warnings.warn("non-positive barrier maximum; growth fit is meaningless", RuntimeWarning)
        return {"etas": list(etas), "maxima": maxima, "slope": float("nan"), "C0": float("nan")}
    slope, icpt = np.polyfit(np.log(etas), np.log(maxima), 1)
    return {"etas": list(map(float, etas)), "maxima": maxima, "slope": float(slope),
            "C0": float(max(m / e for m, e in zip(maxima, etas)))}


def calibrate_c_hat(M: float, s: float = 0.5, n: int = 2, C0: float | None = None, eta_probe: float = 0.01) -> float:
    """``c_hat`` with ``C0 * c_hat * M^{-s}`` equal to half the far mass ``2 T(4M)``."""
    if C0 is None:
        C0 = barrier_nmc_bound(BarrierSpec(eta=eta_probe, M=M, s=s, n=n, samples=21)).max_over_boundary / eta_probe
    eta = float(halfspace_tail(4 * M, n, s)) / C0
    return eta * M**s


def ball_nmc_constant(n: int, s: float) -> float:
    """Curvature of the unit ball at a boundary point, by the exact ray formula (reference value)."""
    q = np.zeros(n)
    q[-1] = 1.0
    return nmc_analytic(NmcQuery(tuple(q), Ball(tuple(np.zeros(n)), 1.0)), s, normal=q).value


__all__ = [
    "NmcQuery", "NmcResult", "nmc_analytic", "nmc_grid", "cell_sums", "interface_faces",
    "face_center", "euler_lagrange_report", "el_tolerance", "lens_complement_integral",
    "BarrierSpec", "BarrierReport", "barrier_nmc_bound", "fit_eta_growth", "calibrate_c_hat",
    "outward_normal",
]
