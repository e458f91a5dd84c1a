import random

import gmpy2
import numpy as np
import pytest
import sympy

from ar2lab import estimate
from ar2lab.estimate import (
    NotPositiveDefiniteError,
    SingularGramError,
    ZeroSumOfSquaresError,
    confidence_contains,
    confidence_region,
    gram_sums,
    lse,
    martingale,
    scaled_error,
    sym_sqrt_2x2,
)
from ar2lab.model import CASES, ArParams, roots
from ar2lab.numerics import PrecisionCtx, mat_mul, mat_rel_residual, mat_vec
from ar2lab.simulate import Innovations, SeedSpec, gen_innovations, simulate_path

TOL650 = gmpy2.mpfr(2) ** -650
TOL700 = gmpy2.mpfr(2) ** -700


def fib_path(ctx):
    return simulate_path(ArParams(1, 1, x0=2, x_neg1=1), Innovations.zeros(3), ctx)


def run(case, rep, ctx, n=100, sigma=1.0, seed=42):
    p = ArParams.case(case, sigma)
    innov = gen_innovations(SeedSpec(seed, rep), n, sigma)
    t = simulate_path(p, innov, ctx)
    return p, innov, t


def test_fibonacci_gram_sums(ctx):
    g = gram_sums(fib_path(ctx), ctx)
    assert (g.s11, g.s22, g.s12, g.h1, g.h2) == (38, 14, 23, 61, 37)
    est = lse(g, ctx)
    assert est.theta_hat == (1, 1)
    assert est.det_g == 38 * 14 - 23**2


def test_zero_trajectory(ctx):
    t = simulate_path(ArParams(1, 3), Innovations.zeros(5), ctx)
    g = gram_sums(t, ctx)
    assert all(v == 0 for v in (g.s11, g.s22, g.s12, g.h1, g.h2))
    with pytest.raises(SingularGramError):
        lse(g, ctx)
    with pytest.raises(ZeroSumOfSquaresError):
        estimate.scaling_matrix(g, ctx)


def test_cauchy_schwarz_exact(ctx):
    for case in CASES:
        for rep in range(5):
            _, _, t = run(case, rep, ctx)
            g = gram_sums(t, ctx)
            with ctx.activate():
                assert g.s12 * g.s12 <= g.s11 * g.s22
            assert g.det(ctx) > 0


def test_lse_matches_rational_normal_equations(ctx):
    # n = 5 path solved exactly in rational arithmetic with sympy
    p = ArParams(1, 3, x0=0.3, x_neg1=-0.7)
    innov = gen_innovations(SeedSpec(11, 0), 5)
    t = simulate_path(p, innov, ctx)
    est = lse(gram_sums(t, ctx), ctx)
    xs = [sympy.Rational(gmpy2.mpq(v).numerator, gmpy2.mpq(v).denominator) for v in t.values]
    a = sympy.Matrix([[xs[k], xs[k - 1]] for k in range(1, 6)])
    y = sympy.Matrix([xs[k + 1] for k in range(1, 6)])
    exact = (a.T * a).solve(a.T * y)
    for got, want in zip(est.theta_hat, exact):
        q = gmpy2.mpq(int(want.p), int(want.q))
        with ctx.activate():
            assert abs(got - q) <= TOL700 * abs(q)


def test_lse_matches_least_squares_solver(ctx):
    # double-precision lstsq on a short, well conditioned path
    p = ArParams(0.5, 0.3)
    innov = gen_innovations(SeedSpec(12, 0), 200)
    t = simulate_path(p, innov, ctx)
    est = lse(gram_sums(t, ctx), ctx)
    x = np.array([float(v) for v in t.values])
    a = np.column_stack([x[1:-1], x[:-2]])
    sol, *_ = np.linalg.lstsq(a, x[2:], rcond=None)
    assert np.allclose([float(v) for v in est.theta_hat], sol, rtol=1e-10)


def test_martingale_zero_innovations(ctx):
    t = simulate_path(ArParams(1, 3, x0=1), Innovations.zeros(10), ctx)
    m = martingale(t, Innovations.zeros(10), ctx)
    assert m.m == (0, 0)


def test_martingale_sigma_homogeneity(ctx):
    _, innov, t = run(1, 0, ctx)
    m1 = martingale(t, innov, ctx)
    m2 = martingale(t, Innovations(innov.z, 2.0), ctx)
    with ctx.activate():
        assert m2.m == (m1.m[0] / 4, m1.m[1] / 4)
        assert mat_rel_residual(m2.qc, tuple(tuple(v / 4 for v in row) for row in m1.qc)) == 0


@pytest.mark.parametrize("case", sorted(CASES))
def test_decomposition_and_factorization_identities(ctx, case):
    for rep in range(10):
        p, innov, t = run(case, rep, ctx)
        g = gram_sums(t, ctx)
        est = lse(g, ctx)
        m = martingale(t, innov, ctx)
        d = est.error(p, ctx)
        dec = estimate.decomposition_error(m, ctx)
        se = scaled_error(g, est, p, ctx)
        se_m = estimate.scaled_error_via_martingale(g, m, ctx)
        with ctx.activate():
            assert max(abs(d[0] - dec[0]), abs(d[1] - dec[1])) < TOL650 * max(abs(d[0]), abs(d[1]))
            assert max(abs(se.e1 - se_m.e1), abs(se.e2 - se_m.e2)) < TOL650 * max(abs(se.e1), abs(se.e2))


def test_factorization_with_sigma(ctx):
    p, innov, t = run(1, 3, ctx, sigma=0.37)
    g = gram_sums(t, ctx)
    est = lse(g, ctx)
    se = scaled_error(g, est, p, ctx)
    se_m = estimate.scaled_error_via_martingale(g, martingale(t, innov, ctx), ctx)
    with ctx.activate():
        assert abs(se.e1 - se_m.e1) < TOL650 * abs(se.e1)


def test_scaled_error_zero_at_truth(ctx):
    g = gram_sums(fib_path(ctx), ctx)
    est = lse(g, ctx)
    se = scaled_error(g, est, ArParams(1, 1), ctx)
    assert (se.e1, se.e2) == (0, 0)


def test_case1_collinearity_range(ctx):
    r = roots(1, 3)
    for rep in range(30):
        p, _, t = run(1, rep, ctx)
        g = gram_sums(t, ctx)
        se = scaled_error(g, lse(g, ctx), p, ctx)
        gap = se.collinearity_gap(r.sign1, ctx)
        assert 0 < gap < gmpy2.mpfr("1e-20")


def test_collinearity_is_not_a_precision_artifact():
    # the gap is the same at 800 and 1600 bits
    for case, rep in [(1, 0), (2, 3)]:
        gaps = []
        for bits in (800, 1600):
            c = PrecisionCtx(bits)
            p, _, t = run(case, rep, c)
            g = gram_sums(t, c)
            se = scaled_error(g, lse(g, c), p, c)
            gaps.append(se.collinearity_gap(roots(p.theta1, p.theta2).sign1, c))
        with PrecisionCtx(1600).activate():
            assert abs(gaps[0] - gaps[1]) < gmpy2.mpfr("1e-150") * gaps[1]


def test_sym_sqrt_examples(ctx):
    with ctx.activate():
        one, zero = gmpy2.mpfr(1), gmpy2.mpfr(0)
        assert sym_sqrt_2x2(((one, zero), (zero, one)), ctx) == ((1, 0), (0, 1))
        r = sym_sqrt_2x2(((gmpy2.mpfr(4), zero), (zero, gmpy2.mpfr(9))), ctx)
        assert r == ((2, 0), (0, 3))


def test_sym_sqrt_squares_back(ctx):
    rng = random.Random(3)
    for _ in range(200):
        with ctx.activate():
            a, b = gmpy2.mpfr(rng.uniform(-5, 5)), gmpy2.mpfr(rng.uniform(-5, 5))
            c, d = gmpy2.mpfr(rng.uniform(-5, 5)), gmpy2.mpfr(rng.uniform(-5, 5))
            # B B^T + small ridge is SPD
            v = ((a * a + b * b + 1e-3, a * c + b * d), (a * c + b * d, c * c + d * d + 1e-3))
            root = sym_sqrt_2x2(v, ctx)
            assert root[0][1] == root[1][0]
            assert mat_rel_residual(mat_mul(root, root), v) < TOL700


def test_sym_sqrt_rejects_bad_input(ctx):
    with ctx.activate():
        m = gmpy2.mpfr
        with pytest.raises(NotPositiveDefiniteError):
            sym_sqrt_2x2(((m(1), m(2)), (m(2), m(1))), ctx)
        with pytest.raises(NotPositiveDefiniteError):
            sym_sqrt_2x2(((m(1), m(0)), (m(1), m(1))), ctx)
        rank1 = ((m(1), m(2)), (m(2), m(4)))
        with pytest.raises(NotPositiveDefiniteError):
            sym_sqrt_2x2(rank1, ctx)
        root = sym_sqrt_2x2(rank1, ctx, allow_singular=True)
        assert mat_rel_residual(mat_mul(root, root), rank1) < TOL700


def test_sqrt_scaled_error_two_paths(ctx):
    for case in (1, 2):
        for rep in range(5):
            p, innov, t = run(case, rep, ctx)
            g = gram_sums(t, ctx)
            est = lse(g, ctx)
            a = estimate.sqrt_scaled_error(martingale(t, innov, ctx), est, p, p.sigma, ctx)
            b = estimate.sqrt_scaled_error_direct(g, t, p, ctx)
            with ctx.activate():
                assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) < TOL650 * max(abs(b[0]), abs(b[1]))


def test_sqrt_scaled_error_zero_at_truth(ctx):
    t = fib_path(ctx)
    g = gram_sums(t, ctx)
    est = lse(g, ctx)
    out = estimate.sqrt_scaled_error(martingale(t, Innovations.zeros(3), ctx), est, ArParams(1, 1), 1.0, ctx)
    assert out == (0, 0)


def test_confidence_region_basics(ctx):
    p, _, t = run(1, 0, ctx)
    g = gram_sums(t, ctx)
    est = lse(g, ctx)
    region = confidence_region(g, est, 1.0, 0.05, ctx)
    assert region.quadratic_form(est.theta_hat, ctx) == 0
    assert region.contains(est.theta_hat, ctx)
    assert float(region.threshold) == pytest.approx(2 * 5.991465, abs=2e-6)
    q = region.quad_matrix
    assert q[0][1] == q[1][0]
    # the quadratic form equals |S d|^2 with S the scaling matrix; Q is nearly
    # rank one with d close to its null direction, so ~160 bits cancel
    s = estimate.scaling_matrix(g, ctx)
    with ctx.activate():
        d = est.error(p, ctx)
        sd = mat_vec(s, d)
        assert abs(region.quadratic_form((p.theta1, p.theta2), ctx) - (sd[0] ** 2 + sd[1] ** 2)) \
            < gmpy2.mpfr(2) ** -600 * (sd[0] ** 2 + sd[1] ** 2)
    assert not confidence_contains(g, est, 1.0, 0.05, (p.theta1 + 1, p.theta2), ctx)
    with pytest.raises(ValueError):
        confidence_region(g, est, 1.0, 1.0, ctx)


def test_confidence_region_df1_threshold(ctx):
    p, _, t = run(1, 0, ctx)
    g = gram_sums(t, ctx)
    region = confidence_region(g, lse(g, ctx), 1.0, 0.05, ctx, df=1)
    assert float(region.threshold) == pytest.approx(2 * 3.841459, abs=2e-6)
