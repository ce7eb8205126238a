import csv
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracmin.experiments import (
    DISCONNECTED, STICKY, MonotonicityWarning, ResolutionWarning, SweepRow, SweepTemplate, check_monotone,
    classify_minimizer, locate_critical_M, resolution_for, sliding_ball_check, snap_M, stickiness_depth_fit,
    sweep_M,
)
from fracmin.geometry import LabelField, free_cell_index, make_problem


def _row(M, regime, depth, h=0.03125, s=0.5):
    return SweepRow(M=M, regime=regime, energy=0.0, depth_center=depth, depth_wall=depth, component_count=2,
                    h=h, s=s, n=2, wall_clock=0.0)


def test_classify_full():
    p = make_problem(M=1.0, h=0.125)
    info = classify_minimizer(LabelField.full(p))
    assert info["regime"] == STICKY and info["component_count"] == 1
    # depth from the formula: the bottom component reaches the window top
    assert info["depth_center"] == pytest.approx(2 * p.M + p.grid.pad)


def test_classify_datum():
    p = make_problem(M=1.0, h=0.125)
    info = classify_minimizer(LabelField.datum(p))
    assert info["regime"] == DISCONNECTED and info["depth_center"] == 0.0 and info["depth_wall"] == 0.0


def test_classify_one_bump_cell():
    p = make_problem(M=1.0, h=0.125)
    row = int(round((p.grid.H - p.M) / p.h))  # first row above -M
    col = p.grid.cols // 2
    labels = np.zeros(p.num_free, dtype=np.uint8)
    labels[free_cell_index(p, (row, col))] = 1
    one_sided = classify_minimizer(LabelField(p, labels))
    # the depth is the smaller of the two sides, so a single bump reads 0
    assert one_sided["regime"] == DISCONNECTED and one_sided["depth_center"] == 0.0
    labels[free_cell_index(p, (p.grid.rows - 1 - row, col))] = 1
    info = classify_minimizer(LabelField(p, labels))
    assert info["regime"] == DISCONNECTED and info["depth_center"] == pytest.approx(p.h)
    assert info["depth_wall"] == 0.0


@given(st.integers(0, 10_000))
def test_classification_reflection_invariant(seed):
    p = make_problem(M=0.75, h=0.25)
    f = LabelField(p, np.random.default_rng(seed).integers(0, 2, p.num_free).astype(np.uint8))
    a, b = classify_minimizer(f), classify_minimizer(f.reflected())
    assert a["regime"] == b["regime"] and a["depth_center"] == b["depth_center"]


def test_mismatched_problem():
    p, q = make_problem(M=1.0, h=0.125), make_problem(M=1.0, h=0.25)
    with pytest.raises(ValueError):
        classify_minimizer(LabelField.full(p), q)


@given(st.floats(0.05, 40), st.sampled_from([0.3, 0.5, 0.7]))
def test_resolution_policy(M, s):
    M = round(M, 2)
    h = resolution_for(M, s)
    assert h <= min(0.125, M / 8, 0.125 * M ** (-s)) * (1 + 1e-12)
    make_problem(s=s, M=M, h=h)  # must tile


def test_snap():
    assert snap_M(2.437, 0.0625) == pytest.approx(2.4375)


def test_depth_fit_synthetic():
    rows = [_row(M, DISCONNECTED, M ** -0.5) for M in (1, 4, 16, 64)]
    fit = stickiness_depth_fit(rows)
    assert fit.exponent == pytest.approx(-0.5, abs=0.01)
    assert fit.predicted_exponents == {"ball_bound": -0.5, "planar_bound": -2.0}


def test_depth_fit_resolution_floor():
    rows = [_row(M, DISCONNECTED, 0.03125) for M in (4, 8, 16, 32)]
    with pytest.warns(ResolutionWarning):
        fit = stickiness_depth_fit(rows)
    assert fit.resolution_limited and np.isnan(fit.exponent)


def test_depth_fit_zero_depth():
    rows = [_row(M, DISCONNECTED, d) for M, d in ((1, 0.5), (4, 0.25), (16, 0.0), (64, 0.1))]
    assert stickiness_depth_fit(rows).resolution_limited


def test_depth_fit_needs_rows():
    with pytest.raises(ValueError):
        stickiness_depth_fit([_row(4, DISCONNECTED, 0.1)])


def test_monotonicity_warning():
    rows = [_row(1, STICKY, 1), _row(2, DISCONNECTED, 0.1), _row(3, STICKY, 1)]
    with pytest.warns(MonotonicityWarning):
        assert not check_monotone(rows)


def test_sweep_small_M_sticky(tmp_path):
    rows = sweep_M([0.1, 0.2], csv_path=tmp_path / "s.csv")
    assert all(r.regime == STICKY for r in rows)
    assert all(r.component_count == 1 for r in rows)
    with open(tmp_path / "s.csv") as fh:
        recs = list(csv.reader(fh))
    assert recs[0] == ["M", "regime", "energy", "depth_center", "depth_wall", "component_count", "h", "s", "n",
                       "wall_clock"]
    assert len(recs) == 3


def test_sweep_large_M_disconnected():
    rows = sweep_M([8.0, 16.0])
    assert [r.regime for r in rows] == [DISCONNECTED, DISCONNECTED]
    assert all(r.depth_center >= r.h for r in rows)


def test_sweep_reproducible():
    a = sweep_M([1.0, 3.0])
    b = sweep_M([1.0, 3.0])
    assert [(r.regime, r.energy, r.depth_center) for r in a] == [(r.regime, r.energy, r.depth_center) for r in b]


def test_sweep_requires_sorted():
    with pytest.raises(ValueError):
        sweep_M([2.0, 1.0])


def test_sweep_records_failures():
    rows = sweep_M([0.5, 1.0], SweepTemplate(h=0.3))
    assert all(r.regime == "Failed" and r.error for r in rows)


def test_critical_precondition():
    ci = locate_critical_M(0.5, 1.0, tol=0.1)
    assert not ci.ok and "precondition" in ci.message


def test_critical_tol_clamped():
    with pytest.warns(ResolutionWarning):
        ci = locate_critical_M(2.0, 3.0, tol=0.01)
    assert ci.ok and ci.hi - ci.lo <= 0.0625 + 1e-12


def test_vertical_slide_datum():
    p = make_problem(M=1.0, h=0.125)
    res = sliding_ball_check(LabelField.datum(p), 0.5, "down")
    assert res.touched and res.offset == pytest.approx(p.M + 0.5)


def test_vertical_slide_full():
    p = make_problem(M=1.0, h=0.125)
    assert not sliding_ball_check(LabelField.full(p), 0.5, "down").touched


def test_slide_errors():
    p = make_problem(M=1.0, h=0.125)
    with pytest.raises(ValueError):
        sliding_ball_check(LabelField.full(p), 1.2, "down")
    with pytest.raises(ValueError):
        sliding_ball_check(LabelField.full(p), 5.0, "right")
    with pytest.raises(ValueError):
        sliding_ball_check(LabelField.full(p), 0.5, "sideways")


def test_horizontal_slide_small_M():
    # sqrt(M) >= M: the ball always meets the datum
    p = make_problem(M=0.5, h=0.125)
    assert sliding_ball_check(LabelField.full(p), np.sqrt(0.5), "right").touched


def test_horizontal_slide_hits_first_column():
    p = make_problem(M=1.0, h=0.125)
    res = sliding_ball_check(LabelField.full(p), 0.5, "right")
    assert res.touched and res.offset == pytest.approx(-1.0 - 0.5)


def test_horizontal_slide_disconnected_large_M():
    # with E^c containing the whole slab core, a ball of radius sqrt(M) centred
    # on x_n = 0 passes through the cylinder without meeting the set
    from fracmin.experiments import solve

    _, _, res = solve(SweepTemplate(), 16.0)
    out = sliding_ball_check(res.labels, 4.0, "right")
    assert not out.touched
