"""Estimator-style wrapper around a single exact minimization."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .energy import fractional_perimeter
from .experiments import classify_minimizer
from .geometry import make_problem
from .kernel import build_kernel_table
from .mincut import min_cut


class SPerimeterMinimizer(BaseEstimator):
    """Discrete s-minimizer in the cylinder with slab-complement datum.

    ``fit`` ignores its arguments (the problem is fully defined by the
    parameters) and stores the minimizer; ``predict`` returns membership
    of points ``(x_1, ..., x_n)`` in the minimizer, with points outside the
    window taking their datum label.
    """

    def __init__(self, n=2, s=0.5, M=1.0, h=0.125, pad=1.0, clamp_band=True, trunc_radius=None,
                 free_depth=None, cache_dir=None):
        self.n = n
        self.s = s
        self.M = M
        self.h = h
        self.pad = pad
        self.clamp_band = clamp_band
        self.trunc_radius = trunc_radius
        self.free_depth = free_depth
        self.cache_dir = cache_dir

    def fit(self, X=None, y=None):
        prob = make_problem(n=self.n, s=self.s, M=self.M, h=self.h, pad=self.pad, clamp_band=self.clamp_band,
                            trunc_radius=self.trunc_radius, free_depth=self.free_depth)
        table = build_kernel_table(prob, cache_dir=self.cache_dir)
        res = min_cut(prob, table)
        self.problem_ = prob
        self.flow_ = res
        self.labels_ = res.labels
        self.energy_ = fractional_perimeter(res.labels, table)
        info = classify_minimizer(res.labels)
        self.regime_ = info["regime"]
        self.depth_center_ = info["depth_center"]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "labels_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        g = self.problem_.grid
        if X.shape[1] != g.n:
            raise ValueError(f"expected points with {g.n} coordinates, got {X.shape[1]}")
        out = (np.abs(X[:, -1]) > self.problem_.M).astype(np.uint8)
        rows = np.floor((X[:, -1] + g.H) / g.h).astype(int)
        cols = np.floor((X[:, :-1] + 1.0) / g.h).astype(int)
        inside = (rows >= 0) & (rows < g.rows) & np.all((cols >= 0) & (cols < g.cols), axis=1)
        win = self.labels_.window()
        idx = (rows[inside],) + tuple(cols[inside].T)
        out[inside] = win[idx]
        return out
