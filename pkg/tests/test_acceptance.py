"""One test per acceptance criterion, each at its stated tolerance and time budget."""

import itertools
import time

import numpy as np
import pytest

from fracmin.curvature import (
    BarrierSpec, NmcQuery, barrier_nmc_bound, calibrate_c_hat, fit_eta_growth, lens_complement_integral,
    nmc_analytic,
)
from fracmin.experiments import (
    DISCONNECTED, STICKY, SweepTemplate, locate_critical_M, stickiness_depth_fit, sweep_M,
)
from fracmin.geometry import LabelField, dumps_field, loads_field, make_problem
from fracmin.kernel import build_kernel_table, halfspace_tail, offset_weight
from fracmin.mincut import build_cut_graph
from fracmin.shapes import Ball, HalfSpace, slab_complement
from fracmin.verify import oracle_equivalence, random_instance, tail_closed_form_check


def test_criterion_1_oracle_equivalence(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    sizes = [random_instance(rng).num_free for _ in range(50)]
    rep = oracle_equivalence(50, seed=0)
    dt = time.perf_counter() - t0
    ok = rep["passed"] and max(sizes) <= 20 and dt < 60
    record_criterion(1, ok, f"{50 - len(rep['failures'])}/50 exact matches, max {max(sizes)} free cells, {dt:.1f}s")
    assert ok


def test_criterion_2_kernel_closed_forms(record_criterion):
    t0 = time.perf_counter()
    rep = tail_closed_form_check()
    dt = time.perf_counter() - t0
    rel = max(c["rel_err"] for c in rep["cases"])
    ratio = max(c["ratio_err"] for c in rep["cases"])
    ok = len(rep["cases"]) == 18 and rel <= 1e-6 and ratio <= 1e-14 and dt < 10
    record_criterion(2, ok, f"18 cases, max rel err {rel:.1e}, max |T(2a)/T(a) - 2^-s| {ratio:.1e}, {dt:.1f}s")
    assert ok


def _ball_exponent(n, s):
    radii = [0.5, 1.0, 2.0]
    c = (0.0,) * n
    vals = [nmc_analytic(NmcQuery((0.0,) * (n - 1) + (r,), Ball(c, r)), s).value for r in radii]
    return np.polyfit(np.log(radii), np.log(vals), 1)[0]


def test_criterion_3_nmc_sanity(record_criterion):
    t0 = time.perf_counter()
    half = max(abs(nmc_analytic(NmcQuery((0.2,) * (n - 1) + (0.0,), HalfSpace(n - 1, 0.0, -1)), 0.5).value)
               for n in (2, 3))
    exps = {(n, s): _ball_exponent(n, s) for n, s in [(2, 0.5), (2, 0.2), (3, 0.3)]}
    slab = []
    for n, s, M in [(2, 0.5, 1.0), (2, 0.5, 10.0), (3, 0.5, 2.0)]:
        v = nmc_analytic(NmcQuery((0.0,) * (n - 1) + (-M,), slab_complement(n, M)), s).value
        ref = -2 * halfspace_tail(2 * M, n, s)
        slab.append((v < 0, abs(v / ref - 1)))
    dt = time.perf_counter() - t0
    exp_err = max(abs(e + s) for (n, s), e in exps.items())
    slab_err = max(e for _, e in slab)
    ok = half <= 1e-6 and exp_err <= 0.03 and all(neg for neg, _ in slab) and slab_err <= 1e-4 and dt < 60
    record_criterion(3, ok, f"half-space |H| {half:.1e}; ball exponent err {exp_err:.1e}; "
                            f"slab rel err {slab_err:.1e}; {dt:.1f}s")
    assert ok


def test_criterion_4_lens(record_criterion):
    t0 = time.perf_counter()
    lams = [0.05, 0.1, 0.2, 0.4]
    slopes = {}
    for n, s in itertools.product((2, 3), (0.3, 0.7)):
        vals = [lens_complement_integral(1.0, lam, n, s) for lam in lams]
        slopes[(n, s)] = np.polyfit(np.log(lams), np.log(vals), 1)[0]
    dt = time.perf_counter() - t0
    err = max(abs(v - (1 - s)) for (n, s), v in slopes.items())
    ok = err <= 0.1 and dt < 120
    detail = ", ".join(f"n={n} s={s}: {v:.4f}" for (n, s), v in slopes.items())
    record_criterion(4, ok, f"slopes {detail}; max |slope-(1-s)| {err:.1e}; {dt:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_5_phase_transition(record_criterion):
    t0 = time.perf_counter()
    rows = sweep_M([0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 8.0])
    regimes = [r.regime for r in rows]
    sticky = [r.M for r in rows if r.regime == STICKY]
    disc = [r.M for r in rows if r.regime == DISCONNECTED]
    lo = max(r.M for r in rows if r.regime != DISCONNECTED)
    hi = min(r.M for r in rows if r.regime == DISCONNECTED and r.M > lo)
    ci = locate_critical_M(lo, hi, tol=0.1, rows=rows)
    dt = time.perf_counter() - t0
    ok = bool(sticky) and bool(disc) and ci.ok and ci.width <= 0.1 and min(r.h for r in rows) >= 1 / 32
    record_criterion(5, ok, f"regimes {dict(zip([r.M for r in rows], regimes))}; "
                            f"critical M in [{ci.lo}, {ci.hi}] (width {ci.width}); {dt:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_6_stickiness(record_criterion):
    t0 = time.perf_counter()
    tmpl = SweepTemplate()
    with pytest.warns(UserWarning):  # four points span less than a decade
        rows = sweep_M([4.0, 8.0, 16.0, 32.0], tmpl)
        fit = stickiness_depth_fit(rows)
    dt = time.perf_counter() - t0
    resolved = [r for r in rows if r.regime == DISCONNECTED and r.h <= tmpl.guard * r.M ** (-r.s) * (1 + 1e-12)]
    ok = (len(resolved) == 4 and all(r.depth_center >= r.h for r in resolved)
          and not fit.resolution_limited and fit.exponent < 0)
    depths = ", ".join(f"M={r.M:g}: {r.depth_center:g} (h={r.h:g})" for r in rows)
    record_criterion(6, ok, f"depths {depths}; fitted exponent {fit.exponent:.3f} vs predicted "
                            f"{fit.predicted_exponents}; {dt:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_7_barriers(record_criterion):
    t0 = time.perf_counter()
    M, s = 10.0, 0.5
    growth = fit_eta_growth([0.01, 0.02, 0.04], M=M, s=s, samples=11)
    c_hat = calibrate_c_hat(M, s, C0=growth["C0"])
    eta = c_hat * M ** (-s)
    rep = barrier_nmc_bound(BarrierSpec(eta=eta, M=M, s=s, variant="G", samples=11))
    dt = time.perf_counter() - t0
    ok = abs(growth["slope"] - 1) <= 0.2 and rep.G_strictly_negative and dt < 300
    record_criterion(7, ok, f"F growth exponent {growth['slope']:.3f}; c_hat {c_hat:.3e}, eta {eta:.3e}: "
                            f"max NMC of G {rep.max_over_boundary:.3e} (formula {rep.max_formula:.3e}); {dt:.1f}s")
    assert ok


def test_criterion_8_invariants(record_criterion):
    rng = np.random.default_rng(8)
    # reflection: exact integer energies
    p = make_problem(s=0.5, M=0.75, h=0.125, trunc_radius=1.5)
    g = build_cut_graph(p, build_kernel_table(p))
    fields = [LabelField(p, rng.integers(0, 2, p.num_free).astype(np.uint8)) for _ in range(20)]
    refl = all(g.cut_value(f.labels) == g.cut_value(f.reflected().labels) for f in fields)
    # homogeneity on 10 random offsets
    hom = 0.0
    for _ in range(10):
        k = tuple(int(v) for v in rng.integers(-8, 9, size=2))
        if k == (0, 0):
            k = (1, 0)
        h = float(rng.choice([0.5, 0.25, 0.1, 1 / 64]))
        s = float(rng.uniform(0.1, 0.9))
        hom = max(hom, abs(offset_weight(k, h, s) / (h ** (2 - s) * offset_weight(k, 1.0, s)) - 1))
    # submodularity on every pair of labelings of a 3x3 window
    q = make_problem(s=0.5, M=1.0, h=2 / 3, pad=4 / 3, trunc_radius=2.0)
    gq = build_cut_graph(q, build_kernel_table(q))
    codes = np.arange(512)
    bits = ((codes[:, None] >> np.arange(9)[None, :]) & 1).astype(np.uint8)
    E = np.array([gq.cut_value(b) for b in bits], dtype=np.int64)
    A, B = np.meshgrid(codes, codes, indexing="ij")
    sub = q.num_free == 9 and bool(np.all(E[A & B] + E[A | B] <= E[A] + E[B]))
    # dump round trip
    trip = True
    for n in (2, 3):
        r = make_problem(n=n, s=0.3, M=0.5, h=0.25, trunc_radius=1.0)
        f = LabelField(r, rng.integers(0, 2, r.num_free).astype(np.uint8))
        text = dumps_field(f)
        trip &= dumps_field(loads_field(text)) == text and loads_field(text) == f
    ok = refl and hom <= 1e-10 and sub and trip
    record_criterion(8, ok, f"reflection exact {refl}; homogeneity max rel {hom:.1e}; "
                            f"submodular on 3x3 {sub}; dump round-trip {trip}")
    assert ok
