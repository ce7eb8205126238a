"""Self-checks: min-cut against exhaustive search, closed-form tails against quadrature."""

from __future__ import annotations

import itertools
import math
import time

import numpy as np
from scipy import integrate

from .geometry import make_problem
from .kernel import build_kernel_table, halfspace_tail
from .mincut import brute_force_min, min_cut

# (h, M, clamp_band, free_depth) layouts with at most 20 free cells at n = 2
_LAYOUTS = [
    (0.5, 0.5, True, None), (0.5, 0.75, True, None), (0.5, 1.0, True, None), (0.5, 1.25, True, None),
    (0.25, 0.25, True, None), (0.5, 0.25, False, None), (0.5, 2.5, True, 1.0), (0.5, 4.0, True, 1.0),
    (0.5, 6.0, True, 1.25), (0.25, 3.0, True, 0.25), (0.25, 5.0, True, 0.25),
]


def random_instance(rng: np.random.Generator, s_values=(0.2, 0.5, 0.8)):
    h, M, clamp, fd = _LAYOUTS[rng.integers(len(_LAYOUTS))]
    s = float(rng.choice(s_values))
    trunc = float(rng.uniform(1.5, 4.0))
    return make_problem(n=2, s=s, M=M, h=h, clamp_band=clamp, trunc_radius=trunc, free_depth=fd)


def oracle_equivalence(count: int = 50, seed: int = 0) -> dict:
    """Compare the min-cut energy with the exhaustive minimum on random small instances."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures = []
    for i in range(count):
        prob = random_instance(rng)
        table = build_kernel_table(prob)
        res = min_cut(prob, table)
        _, best = brute_force_min(prob, table)
        if res.cut_int != best:
            failures.append({"instance": i, "key": list(prob.key()), "min_cut": int(res.cut_int), "brute": int(best)})
    return {"instances": count, "failures": failures, "passed": not failures,
            "seconds": time.perf_counter() - t0}


def _half_line(f, a: float) -> float:
    """``int_a^inf f`` as two finite integrals (``z = a/u`` on the far part)."""
    q = lambda g, lo, hi: integrate.quad(g, lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
    return q(f, a, 2 * a) + q(lambda u: f(2 * a / u) * 2 * a / (u * u), 0.0, 1.0)


def tail_oracle(a: float, n: int, s: float) -> float:
    """Kernel mass of ``{z_n > a}`` by nested adaptive quadrature (no closed form used)."""
    if n == 2:
        inner = lambda z: 2 * _half_line(lambda w: (z * z + w * w) ** (-(2 + s) / 2), z) + 2 * integrate.quad(
            lambda w: (z * z + w * w) ** (-(2 + s) / 2), 0, z, epsabs=0, epsrel=1e-12)[0]
    elif n == 3:
        g = lambda z: (lambda r: r * (z * z + r * r) ** (-(3 + s) / 2))
        inner = lambda z: 2 * math.pi * (_half_line(g(z), z) + integrate.quad(g(z), 0, z, epsabs=0, epsrel=1e-12)[0])
    else:
        raise ValueError("n must be 2 or 3")
    return _half_line(inner, a)


def tail_closed_form_check(a_values=(0.25, 1.0, 4.0), s_values=(0.2, 0.5, 0.8), dims=(2, 3), rtol=1e-6) -> dict:
    rows = []
    for a, s, n in itertools.product(a_values, s_values, dims):
        exact = halfspace_tail(a, n, s)
        ref = tail_oracle(a, n, s)
        ratio = halfspace_tail(2 * a, n, s) / exact
        rows.append({"a": a, "s": s, "n": n, "closed": exact, "quadrature": ref,
                     "rel_err": abs(exact - ref) / abs(ref), "ratio_err": abs(ratio - 2.0 ** (-s))})
    ok = all(r["rel_err"] <= rtol and r["ratio_err"] <= 1e-14 for r in rows)
    return {"cases": rows, "passed": ok}


def run_all(count: int = 50, seed: int = 0) -> dict:
    oracle = oracle_equivalence(count, seed)
    tails = tail_closed_form_check()
    return {"oracle_equivalence": oracle, "tail_closed_form": tails,
            "passed": oracle["passed"] and tails["passed"]}
