import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracmin.energy import energy_delta, fractional_perimeter, unaries
from fracmin.geometry import LabelField, make_problem
from fracmin.kernel import build_kernel_table


def naive_energy(field, table):
    """Direct double loop over free cells and every offset in the truncation box."""
    p = field.problem
    g = p.grid
    K = table.K
    rows = np.arange(-K, g.rows + K)
    shape = tuple(k + 2 * K for k in g.shape)
    lab = np.zeros(shape)
    fr = np.zeros(shape, bool)
    lab[...] = g.row_in_datum(rows).reshape((-1,) + (1,) * (p.n - 1))
    inner = (slice(K, K + g.rows),) + (slice(K, K + g.cols),) * (p.n - 1)
    lab[inner] = field.window()
    fr[inner] = p.free_mask
    E = 0.0
    for c in np.argwhere(fr):
        for off in itertools.product(range(-K, K + 1), repeat=p.n):
            if not any(off):
                continue
            d = tuple(c + np.array(off))
            w = table.weight(off)
            if w and lab[tuple(c)] != lab[d]:
                E += w * (0.5 if fr[d] else 1.0)
    u = field.labels
    return E + u @ table.tail_in + (1 - u) @ table.tail_out


CASES = [(2, 0.5, 1.0, 0.25, 1.0), (2, 0.3, 0.5, 0.25, 1.5), (3, 0.7, 0.5, 0.5, 1.5)]


@pytest.fixture(scope="module", params=CASES, ids=lambda c: f"n{c[0]}s{c[1]}")
def setup(request):
    n, s, M, h, tr = request.param
    p = make_problem(n=n, s=s, M=M, h=h, trunc_radius=tr)
    return p, build_kernel_table(p)


def test_matches_naive_oracle(setup):
    p, t = setup
    rng = np.random.default_rng(0)
    for _ in range(2):
        f = LabelField(p, rng.integers(0, 2, p.num_free).astype(np.uint8))
        assert fractional_perimeter(f, t).total == pytest.approx(naive_energy(f, t), rel=1e-12)


def test_report_parts_add_up(setup):
    p, t = setup
    f = LabelField(p, np.random.default_rng(1).integers(0, 2, p.num_free).astype(np.uint8))
    r = fractional_perimeter(f, t)
    assert r.total == pytest.approx(r.interior_interior + r.interior_fixed + r.tail, rel=1e-14)
    assert min(r.interior_interior, r.interior_fixed, r.tail) >= 0


@given(st.integers(0, 1000))
def test_delta_is_exact(seed):
    p = make_problem(M=1.0, h=0.25, trunc_radius=1.0)
    t = build_kernel_table(p)
    rng = np.random.default_rng(seed)
    f = LabelField(p, rng.integers(0, 2, p.num_free).astype(np.uint8))
    i = int(rng.integers(p.num_free))
    want = fractional_perimeter(f.flipped(i), t).total - fractional_perimeter(f, t).total
    assert energy_delta(f, i, t) == pytest.approx(want, abs=1e-11)


@given(st.integers(0, 1000), st.sampled_from([0.2, 0.5, 0.8]))
def test_reflection_symmetry(seed, s):
    p = make_problem(s=s, M=0.75, h=0.25, trunc_radius=1.5)
    t = build_kernel_table(p)
    f = LabelField(p, np.random.default_rng(seed).integers(0, 2, p.num_free).astype(np.uint8))
    a = fractional_perimeter(f, t).total
    b = fractional_perimeter(f.reflected(), t).total
    assert abs(a - b) <= 1e-12 * a


def test_unaries_nonnegative_and_symmetric():
    p = make_problem(M=1.0, h=0.25, trunc_radius=2.0)
    t = build_kernel_table(p)
    u = unaries(p, t)
    assert np.all(u.cost0 >= 0) and np.all(u.cost1 >= 0)
    # rows mirror in x_n
    c1 = np.zeros(p.grid.shape)
    c1[p.free_mask] = u.cost1
    assert np.allclose(c1, c1[::-1], rtol=1e-12, atol=0)


def test_table_mismatch_rejected():
    p = make_problem(M=1.0, h=0.25, trunc_radius=1.0)
    q = make_problem(M=1.0, h=0.25, trunc_radius=1.5)
    with pytest.raises(ValueError):
        fractional_perimeter(LabelField.datum(p), build_kernel_table(q))
