"""Analytic sets built from half-spaces, balls, slabs, cylinders and a bump subgraph.

Every shape answers two questions: whether points lie inside it (closed sets,
so boundary points count as inside) and where a ray ``q + r d`` (``r > 0``)
crosses its boundary.  The second is what the curvature quadrature needs:
the radial part of the kernel integral is then exact between crossings.

Crossing lists may contain spurious radii (tangencies, composite pieces that
are hidden by other pieces); callers classify the midpoint of every interval,
so extra radii only split intervals and never change the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

# primitives remove the root r = 0 themselves when q is on their boundary,
# so any strictly positive radius is a genuine crossing
_R_EPS = 0.0


def smoothstep_profile(rho):
    """Radial bump profile: 1 on ``rho <= 1/2``, 0 on ``rho >= 3/4``, C2 in between."""
    rho = np.asarray(rho, dtype=float)
    t = np.clip((rho - 0.5) * 4.0, 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


_SMOOTHSTEP_COEF = (0.0, 0.0, 0.0, 10.0, -15.0, 6.0)


def _as_points(p, n=None):
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    if n is not None and pts.shape[1] != n:
        raise ValueError(f"expected points of dimension {n}, got {pts.shape[1]}")
    return pts


def _unit(angle):
    return np.array([np.cos(angle), np.sin(angle)])


def _parallel(n, axis):
    """A direction parallel to the coordinate hyperplane ``x[axis] = const`` (planar case)."""
    v = np.zeros(n)
    v[1 - axis if n == 2 else (axis + 1) % n] = 1.0
    return v


def _positive(roots):
    roots = np.asarray(roots, dtype=float).ravel()
    return roots[roots > _R_EPS]


class ShapeExpr:
    """Base class of the shape expression tree."""

    def contains(self, points) -> np.ndarray:
        raise NotImplementedError

    def ray_crossings(self, q, d) -> np.ndarray:
        raise NotImplementedError

    def primitives(self):
        yield self

    def normal_at(self, q, tol: float = 1e-9):
        """Outward unit normal if ``q`` lies on this shape's boundary, else ``None``."""
        return None

    def special_directions(self, q) -> list:
        """Planar directions from ``q`` along which the crossing pattern changes.

        These are rays tangent to the boundary and rays parallel to unbounded
        flat pieces.  Quadrature over directions splits there.
        """
        return []

    # operator sugar keeps test and CLI code short
    def __or__(self, other):
        return Union(self, other)

    def __and__(self, other):
        return Intersection(self, other)

    def __invert__(self):
        return Complement(self)


@dataclass(frozen=True)
class HalfSpace(ShapeExpr):
    """``{x[axis] >= threshold}`` for ``side=+1``, ``{x[axis] <= threshold}`` for ``side=-1``."""

    axis: int
    threshold: float
    side: int = 1

    def __post_init__(self):
        if self.side not in (1, -1):
            raise ValueError("side must be +1 or -1")

    def contains(self, points):
        x = _as_points(points)[:, self.axis]
        if self.side > 0:
            return x >= self.threshold
        return x <= self.threshold

    def ray_crossings(self, q, d):
        if d[self.axis] == 0.0:
            return np.empty(0)
        return _positive([(self.threshold - q[self.axis]) / d[self.axis]])

    def special_directions(self, q):
        return [_parallel(len(q), self.axis)]

    def normal_at(self, q, tol=1e-9):
        if abs(q[self.axis] - self.threshold) > tol:
            return None
        v = np.zeros(len(q))
        v[self.axis] = -float(self.side)
        return v


@dataclass(frozen=True)
class Ball(ShapeExpr):
    center: tuple
    radius: float

    def contains(self, points):
        pts = _as_points(points)
        c = np.asarray(self.center, dtype=float)
        return np.sum((pts - c) ** 2, axis=1) <= self.radius**2

    def ray_crossings(self, q, d):
        w = np.asarray(q, dtype=float) - np.asarray(self.center, dtype=float)
        a = float(np.dot(d, d))
        b = 2.0 * float(np.dot(d, w))
        c = float(np.dot(w, w)) - self.radius**2
        if abs(c) <= 1e-12 * self.radius**2:
            # q on the sphere: the other root is exact
            return _positive([-b / a])
        disc = b * b - 4 * a * c
        if disc < 0:
            return np.empty(0)
        sq = np.sqrt(disc)
        # stable pair of roots
        t = -0.5 * (b + np.copysign(sq, b))
        roots = [t / a] + ([c / t] if t != 0 else [])
        return _positive(roots)

    def special_directions(self, q):
        if len(q) != 2:
            return []
        w = np.asarray(self.center, dtype=float) - np.asarray(q, dtype=float)
        dist = float(np.linalg.norm(w))
        if dist <= self.radius * (1 + 1e-12):
            return []
        half = np.arcsin(self.radius / dist)
        base = np.arctan2(w[1], w[0])
        return [_unit(base + half), _unit(base - half)]

    def normal_at(self, q, tol=1e-9):
        v = np.asarray(q, dtype=float) - np.asarray(self.center, dtype=float)
        r = np.linalg.norm(v)
        if abs(r - self.radius) > tol * max(1.0, self.radius):
            return None
        return v / r


@dataclass(frozen=True)
class Slab(ShapeExpr):
    """``{lo <= x[axis] <= hi}``."""

    axis: int
    lo: float
    hi: float

    def contains(self, points):
        x = _as_points(points)[:, self.axis]
        return (x >= self.lo) & (x <= self.hi)

    def ray_crossings(self, q, d):
        if d[self.axis] == 0.0:
            return np.empty(0)
        return _positive([(self.lo - q[self.axis]) / d[self.axis], (self.hi - q[self.axis]) / d[self.axis]])

    def special_directions(self, q):
        return [_parallel(len(q), self.axis)]

    def normal_at(self, q, tol=1e-9):
        v = np.zeros(len(q))
        if abs(q[self.axis] - self.hi) <= tol:
            v[self.axis] = 1.0
        elif abs(q[self.axis] - self.lo) <= tol:
            v[self.axis] = -1.0
        else:
            return None
        return v


@dataclass(frozen=True)
class Cylinder(ShapeExpr):
    """Infinite cylinder ``{|x without x[axis]| <= radius}`` around a coordinate axis."""

    axis: int
    radius: float

    def _lateral(self, x):
        x = np.asarray(x, dtype=float)
        keep = [i for i in range(x.shape[-1]) if i != self.axis]
        return x[..., keep]

    def contains(self, points):
        lat = self._lateral(_as_points(points))
        return np.sum(lat**2, axis=1) <= self.radius**2

    def ray_crossings(self, q, d):
        ql, dl = self._lateral(q), self._lateral(d)
        a = float(np.dot(dl, dl))
        if a == 0.0:
            return np.empty(0)
        b = 2.0 * float(np.dot(dl, ql))
        c = float(np.dot(ql, ql)) - self.radius**2
        if abs(c) <= 1e-12 * self.radius**2:
            return _positive([-b / a])
        disc = b * b - 4 * a * c
        if disc < 0:
            return np.empty(0)
        sq = np.sqrt(disc)
        t = -0.5 * (b + np.copysign(sq, b))
        return _positive([t / a] + ([c / t] if t != 0 else []))

    def special_directions(self, q):
        return [_parallel(len(q), 1 - self.axis)] if len(q) == 2 else []

    def normal_at(self, q, tol=1e-9):
        q = np.asarray(q, dtype=float)
        v = q.copy()
        v[self.axis] = 0.0
        r = np.linalg.norm(v)
        if abs(r - self.radius) > tol:
            return None
        return v / r


@dataclass(frozen=True)
class BumpSubgraph(ShapeExpr):
    """``{x_n <= base + eta * phi(x')}`` with the smoothstep bump ``phi``.

    ``phi`` equals 1 on ``|x'| <= 1/2`` and vanishes on ``|x'| >= 3/4``.  With
    ``flip=True`` the set is the supergraph ``{x_n >= base - eta * phi(x')}``,
    the mirror image used for barriers sliding down from above.
    """

    eta: float
    base: float = 0.0
    flip: bool = False

    def height(self, xl):
        rho = np.sqrt(np.sum(np.atleast_2d(xl) ** 2, axis=1))
        bump = self.eta * smoothstep_profile(rho)
        return self.base - bump if self.flip else self.base + bump

    def contains(self, points):
        pts = _as_points(points)
        surf = self.height(pts[:, :-1])
        if self.flip:
            return pts[:, -1] >= surf
        return pts[:, -1] <= surf

    def slope(self, xl):
        """Gradient of the height function at the lateral point ``xl``."""
        xl = np.asarray(xl, dtype=float)
        rho = float(np.linalg.norm(xl))
        t = min(max((rho - 0.5) * 4.0, 0.0), 1.0)
        if rho == 0.0 or t in (0.0, 1.0):
            return np.zeros_like(xl)
        dphi = -120.0 * t * t * (1 - t) ** 2
        g = self.eta * dphi * xl / rho
        return -g if self.flip else g

    def special_directions(self, q):
        if len(q) != 2:
            return []
        q = np.asarray(q, dtype=float)
        out = [np.array([1.0, 0.0])]
        sgn = -1.0 if self.flip else 1.0
        # junctions between pieces, where the profile is only C2
        for x in (-0.75, -0.5, 0.5, 0.75):
            v = np.array([x, self.height(np.array([[x]]))[0]]) - q
            nv = np.linalg.norm(v)
            if nv > 1e-6:
                out.append(v / nv)
        # tangency points x on the two transition pieces solve
        # g(x) - q_2 = g'(x) (x - q_1), a quintic in x
        for k, lo, hi in ((1.0, 0.5, 0.75), (-1.0, -0.75, -0.5)):
            # x = (t / 4 + 0.5) / k, so work in t in [0, 1]
            S = np.array(_SMOOTHSTEP_COEF)
            dS = np.polynomial.polynomial.polyder(S)
            x_of_t = np.array([0.5 / k, 0.25 / k])
            g = sgn * self.eta * -S
            g[0] += self.base + sgn * self.eta
            # g'(x) = dg/dt * dt/dx = (-sgn eta S'(t)) * 4k
            gp = -sgn * self.eta * dS * 4.0 * k
            lhs = np.polynomial.polynomial.polysub(g, [q[1]])
            rhs = np.polynomial.polynomial.polymul(gp, np.polynomial.polynomial.polysub(x_of_t, [q[0]]))
            eq = np.polynomial.polynomial.polysub(lhs, rhs)
            eq = np.trim_zeros(eq, "b")
            if eq.size < 2:
                continue
            for t in np.roots(eq[::-1]):
                if abs(t.imag) > 1e-9 or not (-1e-12 <= t.real <= 1 + 1e-12):
                    continue
                t = t.real
                x = (0.5 + 0.25 * t) / k
                y = np.polynomial.polynomial.polyval(t, g)
                v = np.array([x - q[0], y - q[1]])
                nv = np.linalg.norm(v)
                # the tangency at q itself is a double root; skip it
                if nv > 1e-6:
                    out.append(v / nv)
        return out

    def normal_at(self, q, tol=1e-9):
        q = np.asarray(q, dtype=float)
        if abs(q[-1] - self.height(q[None, :-1])[0]) > tol:
            return None
        v = np.append(-self.slope(q[:-1]), 1.0)
        v /= np.linalg.norm(v)
        return -v if self.flip else v

    def _gap(self, q, d, r):
        p = np.asarray(q)[None, :] + np.atleast_1d(r)[:, None] * np.asarray(d)[None, :]
        return p[:, -1] - self.height(p[:, :-1])

    def ray_crossings(self, q, d):
        q = np.asarray(q, dtype=float)
        d = np.asarray(d, dtype=float)
        if q.size == 2:
            return self._crossings_planar(q, d)
        return self._crossings_sampled(q, d)

    def _crossings_planar(self, q, d):
        # phi is piecewise polynomial in x1 and x1 is linear in r: exact roots per piece
        sgn = -1.0 if self.flip else 1.0
        pieces = [(-np.inf, -0.75, 0.0), (-0.75, -0.5, -1.0), (-0.5, 0.5, 1.0), (0.5, 0.75, 1.0), (0.75, np.inf, 0.0)]
        out = []
        for idx, (lo, hi, k) in enumerate(pieces):
            if d[0] == 0.0:
                if not (lo <= q[0] <= hi):
                    continue
                rlo, rhi = 0.0, np.inf
            else:
                ra, rb = (lo - q[0]) / d[0], (hi - q[0]) / d[0]
                rlo, rhi = max(min(ra, rb), 0.0), max(ra, rb)
                if rhi <= rlo:
                    continue
            tol = 1e-12 * max(1.0, rhi if np.isfinite(rhi) else rlo)
            if idx in (0, 2, 4):
                # flat pieces: height base (outer) or base +- eta (plateau)
                level = self.base + (sgn * self.eta if idx == 2 else 0.0)
                if d[1] != 0.0 and q[1] != level:
                    r = (level - q[1]) / d[1]
                    # only roots whose foot lies on this piece are crossings
                    if rlo - tol <= r <= rhi + tol:
                        out.append(r)
                continue
            # S(a + b r) with S the quintic smoothstep, by Horner in r
            a, b = 4.0 * (k * q[0] - 0.5), 4.0 * k * d[0]
            coef = np.array([_SMOOTHSTEP_COEF[-1]])
            for c in _SMOOTHSTEP_COEF[-2::-1]:
                nxt = np.zeros(coef.size + 1)
                nxt[:-1] += a * coef
                nxt[1:] += b * coef
                nxt[0] += c
                coef = nxt
            g = sgn * self.eta * coef
            g[0] += q[1] - self.base - sgn * self.eta
            g[1] += d[1]
            scale = np.abs(g).max()
            if scale == 0.0:
                continue
            if abs(g[0]) < 1e-13 * max(1.0, scale):
                # q lies on this piece: divide out the root r = 0 so that
                # round-off cannot turn it into a tiny spurious crossing
                g = g[1:]
            nz = np.nonzero(np.abs(g) > 1e-15 * scale)[0]
            if nz.size == 0 or nz[-1] == 0:
                continue
            g = g[: nz[-1] + 1]
            for root in np.roots(g[::-1]):
                if abs(root.imag) > 1e-9 * max(1.0, abs(root.real)):
                    continue
                r = root.real
                if rlo - tol <= r <= rhi + tol:
                    out.append(r)
        return np.unique(_positive(out))

    def _crossings_sampled(self, q, d):
        dl = d[:-1]
        ql = q[:-1]
        out = []
        if d[-1] != 0.0:
            out.append((self.base - q[-1]) / d[-1])
        a = float(np.dot(dl, dl))
        if a > 0:
            b = 2.0 * float(np.dot(dl, ql))
            c = float(np.dot(ql, ql)) - 0.75**2
            disc = b * b - 4 * a * c
            if disc > 0:
                r0 = max((-b - np.sqrt(disc)) / (2 * a), 0.0)
                r1 = (-b + np.sqrt(disc)) / (2 * a)
                if r1 > r0:
                    out.extend([r0, r1])
                    grid = np.unique(np.concatenate([
                        r0 + (r1 - r0) * np.geomspace(1e-10, 1.0, 80),
                        np.linspace(r0, r1, 400),
                    ]))
                    g = self._gap(q, d, grid)
                    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
                        out.append(brentq(lambda r: self._gap(q, d, r)[0], grid[i], grid[i + 1], xtol=1e-14))
        elif d[-1] != 0.0:
            out.append((self.height(ql[None, :])[0] - q[-1]) / d[-1])
        return np.unique(_positive(out))


class _Composite(ShapeExpr):
    def __init__(self, *children: ShapeExpr):
        if not children:
            raise ValueError("composite shape needs at least one child")
        self.children = tuple(children)

    def ray_crossings(self, q, d):
        parts = [c.ray_crossings(q, d) for c in self.children]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0)

    def primitives(self):
        for c in self.children:
            yield from c.primitives()

    def special_directions(self, q):
        out = []
        for c in self.children:
            out.extend(c.special_directions(q))
        return out

    def normal_at(self, q, tol=1e-9):
        # the boundary of a union/intersection lies on some child's boundary
        for c in self.children:
            v = c.normal_at(q, tol)
            if v is not None:
                return v
        return None

    def __eq__(self, other):
        return type(self) is type(other) and self.children == other.children

    def __hash__(self):
        return hash((type(self).__name__, self.children))

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(map(repr, self.children))})"


class Union(_Composite):
    def contains(self, points):
        pts = _as_points(points)
        out = np.zeros(len(pts), dtype=bool)
        for c in self.children:
            out |= c.contains(pts)
        return out


class Intersection(_Composite):
    def contains(self, points):
        pts = _as_points(points)
        out = np.ones(len(pts), dtype=bool)
        for c in self.children:
            out &= c.contains(pts)
        return out


class Complement(_Composite):
    """Set complement.  Boundary points of the child end up outside."""

    def __init__(self, child: ShapeExpr):
        super().__init__(child)

    @property
    def child(self):
        return self.children[0]

    def normal_at(self, q, tol=1e-9):
        v = self.child.normal_at(q, tol)
        return None if v is None else -v

    def contains(self, points):
        return ~self.child.contains(points)


def slab_complement(n: int, M: float) -> ShapeExpr:
    """The exterior datum ``{|x_n| > M}`` (closed half-spaces, so ``|x_n| = M`` counts as inside)."""
    return Union(HalfSpace(n - 1, M, 1), HalfSpace(n - 1, -M, -1))


def bump_subgraph(eta: float, base: float = 0.0) -> BumpSubgraph:
    return BumpSubgraph(eta=eta, base=base)


def classify_point(shape: ShapeExpr, p: Sequence[float]) -> int:
    """Return 1 if ``p`` lies in ``shape`` and 0 otherwise."""
    return int(shape.contains(np.asarray(p, dtype=float)[None, :])[0])
