"""Closed-form limits of the supercritical AR(2) LSE and their numerical checks.

Everything here assumes real roots with ``|lambda1| > |lambda2|`` and
``|lambda1| > 1``.  Limits that involve ``lambda1**n`` times a positive
quantity (the normalizations ``A_n``) are taken with ``|lambda1|**n``: the
entries of ``A_n`` are positive, so for ``lambda1 < 0`` only the modulus
gives a convergent sequence.  For ``lambda1 > 0`` nothing changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from . import estimate
from .model import ArParams, RootInfo, roots
from .numerics import (
    BigReal,
    PrecisionCtx,
    det2,
    embed,
    inv2,
    mat_mul,
    mat_rel_residual,
    mat_scale,
    max_abs,
    to_decimal,
)
from .simulate import Innovations, SeedSpec, gen_innovations, simulate_path


@dataclass(frozen=True)
class LimitY:
    y: BigReal
    truncation: int


@dataclass(frozen=True)
class LimitLaw:
    ray: tuple
    innovation_cov: tuple
    eta: tuple
    p_matrix: tuple


def y_truncation(r: RootInfo, ctx: PrecisionCtx) -> int:
    """Series length with tail ``|lambda1|**-T`` below ``2**-mantissa_bits``, plus 8 guard terms."""
    r.require_lambda1(supercritical=True)
    return math.ceil(ctx.mantissa_bits * math.log(2) / math.log(abs(r.lambda1))) + 8


def y_realization(params: ArParams, innov: Innovations, r: RootInfo, ctx: PrecisionCtx) -> LimitY:
    """``Y = l1/(l1-l2) (X_0 - l2 X_{-1}) + l1/(l1-l2) sum_j l1**-j Z_j``,
    the almost sure limit of ``lambda1**-n X_n``.

    ``innov`` must hold at least ``y_truncation`` innovations; the stream is
    the one driving the path (its first ``n`` entries).
    """
    r.require_lambda1(supercritical=True)
    t = y_truncation(r, ctx)
    if len(innov) < t:
        raise ValueError(f"need {t} innovations for the series, got {len(innov)}")
    l1, l2 = r.big_roots(ctx)
    with ctx.activate():
        c = l1 / (l1 - l2)
        inv = 1 / l1
        acc = mpfr(0)
        w = mpfr(1)
        for j in range(1, t + 1):
            w *= inv
            acc += w * mpfr(float(innov.z[j - 1]))
        y = c * (embed(params.x0, ctx) - l2 * embed(params.x_neg1, ctx)) + c * acc
    return LimitY(y, t)


def limit_law(y: LimitY, r: RootInfo, sigma: float, ctx: PrecisionCtx) -> LimitLaw:
    r.require_lambda1(supercritical=True)
    l1, _ = r.big_roots(ctx)
    s = r.sign1
    with ctx.activate():
        a1 = abs(l1)
        f = (l1 * l1 - 1) / (l1 * l1)
        cov = ((f, s * f), (s * f, f))
        e = abs(y.y) / (embed(sigma, ctx) * gmpy2.sqrt(l1 * l1 - 1))
        zero = mpfr(0)
        eta = ((e, zero), (zero, e / a1))
        p = ((1 / l1, zero), (zero, 1 / l1))
        return LimitLaw((mpfr(1), mpfr(s)), cov, eta, p)


def limit_quad_char(y: LimitY, r: RootInfo, sigma: float, ctx: PrecisionCtx):
    """Limit of ``lambda1**(-2n) <M>_n``: ``Y^2/((l1^2-1) sigma^2) [[1, 1/l1], [1/l1, 1/l1^2]]``."""
    r.require_lambda1(supercritical=True)
    l1, _ = r.big_roots(ctx)
    with ctx.activate():
        c = y.y * y.y / ((l1 * l1 - 1) * embed(sigma, ctx) ** 2)
        inv = 1 / l1
        return ((c, c * inv), (c * inv, c * inv * inv))


def limit_An(y: LimitY, r: RootInfo, sigma: float, ctx: PrecisionCtx):
    """Limit of ``|lambda1|**n A_n``: ``sigma sqrt(l1^2-1)/|Y| diag(1, |l1|)``."""
    r.require_lambda1(supercritical=True)
    if y.y == 0:
        raise ZeroDivisionError("Y = 0: degenerate initial data")
    l1, _ = r.big_roots(ctx)
    with ctx.activate():
        c = embed(sigma, ctx) * gmpy2.sqrt(l1 * l1 - 1) / abs(y.y)
        zero = mpfr(0)
        return ((c, zero), (zero, c * abs(l1)))


def limit_An_sqrtM(r: RootInfo, ctx: PrecisionCtx):
    """Limit of ``A_n <M>_n^{1/2}``: ``(1+l1^-2)^-1/2 [[1, 1/l1], [sign(l1), 1/|l1|]]``."""
    r.require_lambda1(supercritical=True)
    l1, _ = r.big_roots(ctx)
    s = r.sign1
    with ctx.activate():
        inv = 1 / l1
        c = 1 / gmpy2.sqrt(1 + inv * inv)
        return ((c, c * inv), (c * s, c * abs(inv)))


@dataclass
class MsltReport:
    """Residuals of conditions (i)-(iii) of the martingale limit theorem used
    for the LSE (the ``Q_n B_n^{-1}``, ``Q_n U_n`` and ``B_n B_{n-r}^{-1}``
    conditions with ``B_n = A_n``, ``Q_n = |lambda1|**-n I``)."""

    cond_i: BigReal
    cond_iii: dict = field(default_factory=dict)
    cond_ii_max: BigReal = None

    def to_dict(self):
        out = {"cond_i": to_decimal(self.cond_i, 6), "cond_ii_max_abs": to_decimal(self.cond_ii_max, 6)}
        for k, v in self.cond_iii.items():
            out[f"cond_iii_r{k}"] = to_decimal(v, 6)
        return out


def _an(sums, sigma, ctx):
    """A_n from running (s11, s22)."""
    s11, s22 = sums
    with ctx.activate():
        sg = embed(sigma, ctx)
        zero = mpfr(0)
        return ((sg / gmpy2.sqrt(s11), zero), (zero, sg / gmpy2.sqrt(s22)))


def _running_squares(xs, n, ctx):
    """``(sum_{k<=m} X_{k-1}^2, sum_{k<=m} X_{k-2}^2)`` for m = 0..n."""
    out = []
    with ctx.activate():
        s11 = s22 = mpfr(0)
        out.append((s11, s22))
        for k in range(1, n + 1):
            s11 += xs[k] * xs[k]
            s22 += xs[k - 1] * xs[k - 1]
            out.append((s11, s22))
    return out


def check_mslt_conditions(traj, innov: Innovations, r: RootInfo, ctx: PrecisionCtx,
                          y: LimitY | None = None, lags=(1, 2, 3)) -> MsltReport:
    """Numerical residuals of the limit-theorem conditions on one path.

    (i)   ``|l1|**-n A_n^{-1}`` against ``eta`` (relative, entrywise)
    (iii) ``A_n A_{n-r}^{-1}`` against ``|l1|**-r I`` for each lag r (relative)
    (ii)  ``max_k ||l1**-k M_k||`` over the path, a boundedness diagnostic
    """
    r.require_lambda1(supercritical=True)
    n = traj.n
    if y is None:
        y = y_realization(traj.params, innov, r, ctx)
    law = limit_law(y, r, innov.sigma, ctx)
    l1, _ = r.big_roots(ctx)
    run = _running_squares(traj.values, n, ctx)
    a_n = _an(run[n], innov.sigma, ctx)
    with ctx.activate():
        a1 = abs(l1)
        q_b = mat_scale(a1 ** (-n), inv2(a_n))
        cond_i = mat_rel_residual(q_b, law.eta)
        cond_iii = {}
        for lag in lags:
            a_prev = _an(run[n - lag], innov.sigma, ctx)
            ratio = mat_mul(a_n, inv2(a_prev))
            target = ((a1 ** (-lag), mpfr(0)), (mpfr(0), a1 ** (-lag)))
            cond_iii[lag] = mat_rel_residual(ratio, target)
    mpath = estimate.martingale_path(traj, innov, ctx)
    with ctx.activate():
        inv = 1 / l1
        biggest = mpfr(0)
        w = mpfr(1)
        for k, (m1, m2) in enumerate(mpath):
            if k:
                w *= inv
            biggest = max(biggest, gmpy2.sqrt((w * m1) ** 2 + (w * m2) ** 2))
    return MsltReport(cond_i, cond_iii, biggest)


def convergence_rate(r: RootInfo, n: int) -> float:
    """``max(|l2/l1|**n, |l1|**-n)``, the deterministic rate of the a.s. limits."""
    r.require_lambda1(supercritical=True)
    return max(abs(r.lambda2 / r.lambda1) ** n, abs(r.lambda1) ** (-n))


def verify_limits(params: ArParams, n: int, seed: SeedSpec, ctx: PrecisionCtx) -> dict:
    """Simulate one path and return every limit residual (BigReal values).

    The innovation stream is generated long enough for the ``Y`` series; the
    path uses its first ``n`` entries.
    """
    r = roots(params.theta1, params.theta2)
    r.require_lambda1(supercritical=True)
    t = y_truncation(r, ctx)
    innov_long = gen_innovations(seed, max(n, t), params.sigma)
    innov = innov_long.prefix(n)
    traj = simulate_path(params, innov, ctx)
    y = y_realization(params, innov_long, r, ctx)
    g = estimate.gram_sums(traj, ctx)
    est = estimate.lse(g, ctx)
    mstate = estimate.martingale(traj, innov, ctx)
    l1, _ = r.big_roots(ctx)

    with ctx.activate():
        a1 = abs(l1)
        x_ratio = abs(traj.x(n) / l1**n - y.y)
        qc_scaled = mat_scale(l1 ** (-2 * n), mstate.qc)
        det_scaled = det2(mstate.qc) / l1 ** (4 * n)
    qc_limit = limit_quad_char(y, r, params.sigma, ctx)

    a_n = estimate.scaling_an(g, params.sigma, ctx)
    with ctx.activate():
        an_scaled = mat_scale(a1**n, a_n)
    an_limit = limit_An(y, r, params.sigma, ctx)

    sqrt_qc = estimate.sym_sqrt_2x2(mstate.qc, ctx)
    with ctx.activate():
        an_sqrt = mat_mul(a_n, sqrt_qc)
    an_sqrt_limit = limit_An_sqrtM(r, ctx)

    mslt = check_mslt_conditions(traj, innov_long, r, ctx, y=y)

    d = est.error(params, ctx)
    dec = estimate.decomposition_error(mstate, ctx)
    se = estimate.scaled_error(g, est, params, ctx)
    se_m = estimate.scaled_error_via_martingale(g, mstate, ctx)
    with ctx.activate():
        dec_res = max(abs(d[0] - dec[0]), abs(d[1] - dec[1])) / max_abs(d)
        fac_res = max(abs(se.e1 - se_m.e1), abs(se.e2 - se_m.e2)) / max(abs(se.e1), abs(se.e2))

    out = {
        "y": y.y,
        "x_n_over_lambda1_n_minus_y": x_ratio,
        "quad_char_residual": mat_rel_residual(qc_scaled, qc_limit),
        "det_quad_char_scaled": abs(det_scaled),
        "an_residual": mat_rel_residual(an_scaled, an_limit),
        "an_sqrt_quad_char_residual": mat_rel_residual(an_sqrt, an_sqrt_limit),
        "mslt_cond_i": mslt.cond_i,
        "mslt_cond_ii_max_abs": mslt.cond_ii_max,
        "decomposition_identity": dec_res,
        "factorization_identity": fac_res,
        "collinearity_gap": se.collinearity_gap(r.sign1, ctx),
    }
    for lag, v in mslt.cond_iii.items():
        out[f"mslt_cond_iii_r{lag}"] = v
    return out


# tolerances applied by the verify-limits report
LIMIT_TOLERANCES = {
    "quad_char_residual": 1e-3,
    "det_quad_char_scaled": 1e-6,
    "an_residual": 1e-3,
    "an_sqrt_quad_char_residual": 1e-3,
    "mslt_cond_i": 1e-3,
    "mslt_cond_iii_r1": 1e-3,
    "mslt_cond_iii_r2": 1e-3,
    "mslt_cond_iii_r3": 1e-3,
    "x_n_over_lambda1_n_minus_y": 1e-20,
    "decomposition_identity": 2.0**-650,
    "factorization_identity": 2.0**-650,
}
