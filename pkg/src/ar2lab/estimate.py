"""Least squares estimation, martingale objects and randomly scaled errors.

All sums run over ``k = 1..n`` in ascending order and are accumulated at the
working precision; for integer AR coefficients and 800 bits they are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from .model import ArParams
from .numerics import (
    BigReal,
    PrecisionCtx,
    embed,
    inv2,
    mat_scale,
    mat_vec,
)
from .simulate import Innovations, Trajectory
from .stats import chi2_quantile


class SingularGramError(ArithmeticError):
    """det(G_n) <= 0: the least squares estimator is not unique."""


class ZeroSumOfSquaresError(ArithmeticError):
    """A lagged sum of squares vanished, so the random scaling is undefined."""


class NotPositiveDefiniteError(ValueError):
    pass


@dataclass(frozen=True)
class GramSums:
    s11: BigReal  # sum X_{k-1}^2
    s22: BigReal  # sum X_{k-2}^2
    s12: BigReal  # sum X_{k-1} X_{k-2}
    h1: BigReal   # sum X_k X_{k-1}
    h2: BigReal   # sum X_k X_{k-2}
    n: int

    @property
    def matrix(self):
        return ((self.s11, self.s12), (self.s12, self.s22))

    @property
    def rhs(self):
        return (self.h1, self.h2)

    def det(self, ctx: PrecisionCtx) -> BigReal:
        with ctx.activate():
            return self.s11 * self.s22 - self.s12 * self.s12


@dataclass(frozen=True)
class LseResult:
    theta_hat1: BigReal
    theta_hat2: BigReal
    gram: GramSums
    det_g: BigReal

    @property
    def theta_hat(self):
        return (self.theta_hat1, self.theta_hat2)

    def error(self, truth: ArParams, ctx: PrecisionCtx):
        """``(theta_hat1 - theta1, theta_hat2 - theta2)``."""
        with ctx.activate():
            return (
                self.theta_hat1 - embed(truth.theta1, ctx),
                self.theta_hat2 - embed(truth.theta2, ctx),
            )


@dataclass(frozen=True)
class MartingaleState:
    m: tuple   # M_n
    qc: tuple  # <M>_n
    sigma: float


@dataclass(frozen=True)
class ScaledError:
    e1: BigReal
    e2: BigReal

    def collinearity_gap(self, sign1: int, ctx: PrecisionCtx) -> BigReal:
        """``|e1 - sign1 e2|`` at the working precision."""
        with ctx.activate():
            return abs(self.e1 - sign1 * self.e2)


def gram_sums(t: Trajectory, ctx: PrecisionCtx) -> GramSums:
    if t.n < 1:
        raise ValueError("trajectory must have n >= 1")
    xs = t.values
    with ctx.activate():
        s11 = s22 = s12 = h1 = h2 = mpfr(0)
        # xs[k + 1] is X_k
        for k in range(1, t.n + 1):
            xk, xk1, xk2 = xs[k + 1], xs[k], xs[k - 1]
            s11 += xk1 * xk1
            s22 += xk2 * xk2
            s12 += xk1 * xk2
            h1 += xk * xk1
            h2 += xk * xk2
    return GramSums(s11, s22, s12, h1, h2, t.n)


def lse(g: GramSums, ctx: PrecisionCtx) -> LseResult:
    """Solve the normal equations ``G_n theta = H_n`` with the explicit 2x2 inverse."""
    det_g = g.det(ctx)
    if not det_g > 0:
        raise SingularGramError(f"det(G_n) = {float(det_g):.3e} is not positive")
    with ctx.activate():
        th1 = (g.s22 * g.h1 - g.s12 * g.h2) / det_g
        th2 = (g.s11 * g.h2 - g.s12 * g.h1) / det_g
    return LseResult(th1, th2, g, det_g)


def martingale(t: Trajectory, innov: Innovations, ctx: PrecisionCtx) -> MartingaleState:
    """``M_n = sigma^-2 sum Z_k (X_{k-1}, X_{k-2})`` and ``<M>_n = sigma^-2 G_n``."""
    if len(innov) < t.n:
        raise ValueError(f"{len(innov)} innovations for a path of length {t.n}")
    g = gram_sums(t, ctx)
    xs = t.values
    with ctx.activate():
        inv_var = 1 / (embed(innov.sigma, ctx) ** 2)
        m1 = m2 = mpfr(0)
        for k in range(1, t.n + 1):
            zk = mpfr(float(innov.z[k - 1]))
            m1 += zk * xs[k]
            m2 += zk * xs[k - 1]
        m = (inv_var * m1, inv_var * m2)
        qc = mat_scale(inv_var, g.matrix)
    return MartingaleState(m, qc, innov.sigma)


def martingale_path(t: Trajectory, innov: Innovations, ctx: PrecisionCtx):
    """``M_k`` for ``k = 0..n`` (used for boundedness diagnostics)."""
    xs = t.values
    out = []
    with ctx.activate():
        inv_var = 1 / (embed(innov.sigma, ctx) ** 2)
        m1 = m2 = mpfr(0)
        out.append((m1, m2))
        for k in range(1, t.n + 1):
            zk = mpfr(float(innov.z[k - 1]))
            m1 += zk * xs[k]
            m2 += zk * xs[k - 1]
            out.append((inv_var * m1, inv_var * m2))
    return out


def decomposition_error(mstate: MartingaleState, ctx: PrecisionCtx):
    """``<M>_n^{-1} M_n``, which equals ``theta_hat - theta``."""
    with ctx.activate():
        return mat_vec(inv2(mstate.qc), mstate.m)


def scaling_matrix(g: GramSums, ctx: PrecisionCtx):
    """``[[sqrt(s11), s12/sqrt(s11)], [s12/sqrt(s22), sqrt(s22)]]``."""
    if not (g.s11 > 0 and g.s22 > 0):
        raise ZeroSumOfSquaresError("sum of squared lagged values is zero")
    with ctx.activate():
        r11, r22 = gmpy2.sqrt(g.s11), gmpy2.sqrt(g.s22)
        return ((r11, g.s12 / r11), (g.s12 / r22, r22))


def scaled_error(g: GramSums, est: LseResult, truth: ArParams, ctx: PrecisionCtx) -> ScaledError:
    """Random scaling matrix applied to the estimation error."""
    s = scaling_matrix(g, ctx)
    d = est.error(truth, ctx)
    with ctx.activate():
        e1, e2 = mat_vec(s, d)
    return ScaledError(e1, e2)


def scaling_an(g: GramSums, sigma: float, ctx: PrecisionCtx):
    """``A_n = sigma diag(s11^-1/2, s22^-1/2)``."""
    if not (g.s11 > 0 and g.s22 > 0):
        raise ZeroSumOfSquaresError("sum of squared lagged values is zero")
    with ctx.activate():
        sg = embed(sigma, ctx)
        zero = mpfr(0)
        return ((sg / gmpy2.sqrt(g.s11), zero), (zero, sg / gmpy2.sqrt(g.s22)))


def scaled_error_via_martingale(g: GramSums, mstate: MartingaleState, ctx: PrecisionCtx) -> ScaledError:
    """The same statistic as ``sigma A_n M_n`` (independent evaluation path)."""
    a_n = scaling_an(g, mstate.sigma, ctx)
    with ctx.activate():
        e1, e2 = mat_vec(a_n, mstate.m)
        sg = embed(mstate.sigma, ctx)
        return ScaledError(sg * e1, sg * e2)


def sym_sqrt_2x2(v, ctx: PrecisionCtx, allow_singular: bool = False):
    """Square root of a symmetric positive definite 2x2 matrix.

    ``V^{1/2} = (V + sqrt(det V) I) / sqrt(v11 + v22 + 2 sqrt(det V))``.
    With ``allow_singular`` a positive semidefinite rank-one input is accepted
    as well (det V = 0, trace > 0); a determinant within rounding of zero is
    then treated as zero.
    """
    (a, b), (c, d) = v
    if b != c:
        raise NotPositiveDefiniteError("matrix is not symmetric")
    with ctx.activate():
        det = a * d - b * c
        if allow_singular:
            if det < 0 and -det <= 4 * ctx.ulp_bound() * a * d:
                det = mpfr(0)
            ok = a >= 0 and d >= 0 and det >= 0 and a + d > 0
        else:
            ok = a > 0 and det > 0
        if not ok:
            raise NotPositiveDefiniteError("matrix is not positive definite")
        r = gmpy2.sqrt(det)
        scale = 1 / gmpy2.sqrt(a + d + 2 * r)
        return (((a + r) * scale, b * scale), (c * scale, (d + r) * scale))


def sqrt_scaled_error(mstate: MartingaleState, est: LseResult, truth: ArParams,
                      sigma: float, ctx: PrecisionCtx):
    """``(sigma^2 <M>_n)^{1/2} (theta_hat - theta)``, i.e. the error scaled by
    the symmetric square root of the Gram matrix."""
    with ctx.activate():
        g = mat_scale(embed(sigma, ctx) ** 2, mstate.qc)
    try:
        root = sym_sqrt_2x2(g, ctx)
    except NotPositiveDefiniteError as exc:
        raise SingularGramError(str(exc)) from exc
    d = est.error(truth, ctx)
    with ctx.activate():
        return mat_vec(root, d)


def _inv_sym_sqrt_2x2(v, ctx: PrecisionCtx):
    """``V^{-1/2} = [[d + r, -b], [-b, a + r]] / (r sqrt(a + d + 2r))``, ``r = sqrt(det V)``."""
    (a, b), (c, d) = v
    with ctx.activate():
        det = a * d - b * c
        if not (b == c and a > 0 and det > 0):
            raise NotPositiveDefiniteError("matrix is not symmetric positive definite")
        r = gmpy2.sqrt(det)
        scale = 1 / (r * gmpy2.sqrt(a + d + 2 * r))
        return (((d + r) * scale, -b * scale), (-c * scale, (a + r) * scale))


def sqrt_scaled_error_direct(g: GramSums, t: Trajectory, truth: ArParams, ctx: PrecisionCtx):
    """``G_n^{1/2} G_n^{-1} (H_n - G_n theta)``, bypassing the estimator and
    the innovation stream.

    ``G_n^{1/2} G_n^{-1} = G_n^{-1/2}`` is evaluated in closed form and
    ``H_n - G_n theta`` is accumulated as the sum of one-step residuals
    ``(X_k - theta1 X_{k-1} - theta2 X_{k-2}) (X_{k-1}, X_{k-2})``, which is
    the same quantity without the cancellation between ``H_n`` and ``G_n theta``.
    """
    inv_root = _inv_sym_sqrt_2x2(g.matrix, ctx)
    xs = t.values
    with ctx.activate():
        t1, t2 = embed(truth.theta1, ctx), embed(truth.theta2, ctx)
        r1 = r2 = mpfr(0)
        for k in range(1, t.n + 1):
            e = xs[k + 1] - t1 * xs[k] - t2 * xs[k - 1]
            r1 += e * xs[k]
            r2 += e * xs[k - 1]
        return mat_vec(inv_root, (r1, r2))


@dataclass(frozen=True)
class ConfidenceRegion:
    center: tuple
    quad_matrix: tuple
    threshold: BigReal
    alpha: float
    df: int = 2

    def quadratic_form(self, point, ctx: PrecisionCtx) -> BigReal:
        with ctx.activate():
            u, v = embed(point[0], ctx), embed(point[1], ctx)
            d1, d2 = self.center[0] - u, self.center[1] - v
            q = self.quad_matrix
            return d1 * (q[0][0] * d1 + q[0][1] * d2) + d2 * (q[1][0] * d1 + q[1][1] * d2)

    def contains(self, point, ctx: PrecisionCtx) -> bool:
        return self.quadratic_form(point, ctx) <= self.threshold


def confidence_region(g: GramSums, est: LseResult, sigma: float, alpha: float,
                      ctx: PrecisionCtx, df: int = 2) -> ConfidenceRegion:
    """Ellipse ``{(u, v): d' Q d <= 2 sigma^2 chi2_{1-alpha}(df)}`` around the LSE.

    ``Q = [[s11 + s12^2/s22, 2 s12], [2 s12, s22 + s12^2/s11]]`` is the
    scaling matrix's Gram product.  ``df=2`` is the region as usually stated;
    since the limiting quadratic form is ``2 sigma^2 N^2`` with ``N^2`` a
    chi-squared(1) variable, ``df=1`` gives asymptotically exact coverage.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not (g.s11 > 0 and g.s22 > 0):
        raise ZeroSumOfSquaresError("sum of squared lagged values is zero")
    with ctx.activate():
        off = 2 * g.s12
        q = ((g.s11 + g.s12 * g.s12 / g.s22, off), (off, g.s22 + g.s12 * g.s12 / g.s11))
        threshold = 2 * embed(sigma, ctx) ** 2 * mpfr(chi2_quantile(1 - alpha, df))
    return ConfidenceRegion(est.theta_hat, q, threshold, alpha, df)


def confidence_contains(g: GramSums, est: LseResult, sigma: float, alpha: float,
                        point, ctx: PrecisionCtx, df: int = 2) -> bool:
    return confidence_region(g, est, sigma, alpha, ctx, df).contains(point, ctx)

