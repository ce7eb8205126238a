import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fracmin.geometry import make_problem
from fracmin.kernel import (
    build_kernel_table, cell_perimeter, halfspace_tail, load_kernel_table, offset_weight,
    save_kernel_table, unit_cell_perimeter, weight_box,
)
from fracmin.verify import tail_oracle


def _tri(z, k):
    return max(0.0, 1.0 - abs(z - k))


def polar_weight_2d(k, s):
    """Independent oracle: the triangle-weighted kernel in polar coordinates around the singularity."""
    a = 2 + s
    tot = 0.0
    for th0, th1 in [(-np.pi / 2, -np.pi / 4), (-np.pi / 4, 0), (0, np.pi / 4), (np.pi / 4, np.pi / 2)]:
        f = lambda r, th: r ** (1 - a) * _tri(r * np.cos(th), k[0]) * _tri(r * np.sin(th), k[1])
        v, _ = integrate.dblquad(f, th0, th1, 0, lambda th: 2 / max(abs(np.cos(th)), abs(np.sin(th))),
                                 epsabs=1e-12, epsrel=1e-10)
        tot += v
    return tot


def radial_cell_perimeter_2d(s):
    """Unit-square perimeter from the covariogram in polar form."""
    def f(th):
        a, b = abs(np.cos(th)), abs(np.sin(th))
        rs = 1 / max(a, b)
        return (a + b) * rs ** (1 - s) / (1 - s) - a * b * rs ** (2 - s) / (2 - s) + rs ** (-s) / s
    return 8 * integrate.quad(f, 0, np.pi / 4, epsabs=1e-14, epsrel=1e-13)[0]


@pytest.mark.parametrize("k", [(1, 0), (1, 1)])
def test_touching_weights_match_polar_oracle(k):
    assert offset_weight(k, 1.0, 0.5) == pytest.approx(polar_weight_2d(k, 0.5), rel=1e-8)


def cartesian_weight_2d(k, s):
    """Triangle-weighted kernel over the four smooth quarter boxes of the support (k away from 0)."""
    tot = 0.0
    for a in (k[0] - 1, k[0]):
        for b in (k[1] - 1, k[1]):
            f = lambda y, x: (x * x + y * y) ** (-(2 + s) / 2) * _tri(x, k[0]) * _tri(y, k[1])
            tot += integrate.dblquad(f, a, a + 1, b, b + 1, epsabs=0, epsrel=1e-12)[0]
    return tot


@pytest.mark.parametrize("k", [(2, 0), (3, 1), (6, 3)])
def test_far_weights_match_cartesian_oracle(k):
    assert offset_weight(k, 1.0, 0.5) == pytest.approx(cartesian_weight_2d(k, 0.5), rel=1e-9)


def test_far_weight_approaches_point_kernel():
    k = np.array([100, 0])
    assert offset_weight(k, 1.0, 0.5) == pytest.approx(np.linalg.norm(k) ** -2.5, rel=1e-4)


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_unit_cell_perimeter_2d(s):
    assert unit_cell_perimeter(2, s) == pytest.approx(radial_cell_perimeter_2d(s), rel=1e-8)


@given(st.integers(-6, 6), st.integers(-6, 6), st.sampled_from([0.2, 0.5, 0.8]),
       st.sampled_from([0.5, 0.125, 1 / 16]))
def test_homogeneity(k1, k2, s, h):
    if k1 == k2 == 0:
        return
    w1 = offset_weight((k1, k2), 1.0, s)
    assert offset_weight((k1, k2), h, s) == pytest.approx(h ** (2 - s) * w1, rel=1e-10)


@given(st.permutations([0, 1, 3]), st.sampled_from([1, -1]))
def test_weight_symmetry_3d(perm, sign):
    base = offset_weight((0, 1, 3), 1.0, 0.4)
    assert offset_weight(tuple(sign * p for p in perm), 1.0, 0.4) == pytest.approx(base, rel=1e-13)


def test_weight_box_is_symmetric_and_radial():
    w = weight_box(4, 2, 1.0, 0.5, radius_cells=4)
    assert w[4, 4] == 0
    assert np.allclose(w, w[::-1, ::-1]) and np.allclose(w, w.T)
    assert w[0, 0] == 0 and w[4, 0] > 0


@pytest.mark.parametrize("n,s,a", [(2, 0.3, 0.5), (2, 0.7, 2.0), (3, 0.5, 1.0)])
def test_halfspace_tail_oracle(n, s, a):
    assert halfspace_tail(a, n, s) == pytest.approx(tail_oracle(a, n, s), rel=1e-6)


@given(st.floats(0.01, 100), st.floats(0.05, 0.95), st.sampled_from([2, 3]))
def test_tail_scaling(a, s, n):
    assert halfspace_tail(2 * a, n, s) / halfspace_tail(a, n, s) == pytest.approx(2.0 ** (-s), rel=1e-13)


def test_tail_rejects_nonpositive():
    with pytest.raises(ValueError):
        halfspace_tail(0.0, 2, 0.5)


def test_sum_rule_in_slab():
    # tabulated near weights plus both tails give the whole cell perimeter
    p = make_problem(M=1.0, h=0.25, trunc_radius=1.5)
    t = build_kernel_table(p)
    total = t.weights.sum() + t.tail_in + t.tail_out
    assert np.allclose(total, cell_perimeter(2, 0.5, 0.25), rtol=1e-9)


def test_tails_nonnegative():
    p = make_problem(n=2, s=0.3, M=0.5, h=0.125, trunc_radius=1.0)
    t = build_kernel_table(p)
    assert np.all(t.row_tail_in >= 0) and np.all(t.row_tail_out >= 0)


def test_cache_round_trip(tmp_path):
    p = make_problem(M=0.5, h=0.25, trunc_radius=1.0)
    t = build_kernel_table(p)
    save_kernel_table(tmp_path / "k.npz", t)
    t2 = load_kernel_table(tmp_path / "k.npz", p)
    assert np.array_equal(t.weights, t2.weights) and np.array_equal(t.tail_in, t2.tail_in)
    other = make_problem(M=0.5, h=0.25, trunc_radius=1.25)
    assert load_kernel_table(tmp_path / "k.npz", other) is None


def test_cache_dir_build(tmp_path):
    p = make_problem(M=0.5, h=0.25, trunc_radius=1.0)
    a = build_kernel_table(p, cache_dir=tmp_path)
    assert list(tmp_path.iterdir())
    b = build_kernel_table(p, cache_dir=tmp_path)
    assert np.array_equal(a.weights, b.weights)
