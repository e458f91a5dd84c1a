"""AR(2) parameters, characteristic roots, companion matrix and classification.

The process is ``X_n = theta1 X_{n-1} + theta2 X_{n-2} + Z_n``; its
characteristic polynomial is ``x**2 - theta1 x - theta2`` and the companion
matrix is ``[[theta1, theta2], [1, 0]]``.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from .numerics import PrecisionCtx, embed, mat_mul

# Parameter pairs of the four reference cases.
CASES = {
    1: (1.0, 3.0),    # purely explosive
    2: (1.0, 1.0),    # partially explosive
    3: (-1.0, 2.0),   # characteristic root +1
    4: (-3.0, -2.0),  # characteristic root -1
}


class Classification(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    PURELY_EXPLOSIVE = "purely_explosive"
    PARTIALLY_EXPLOSIVE = "partially_explosive"
    UNIT_ROOT_PLUS = "unit_root_plus"
    UNIT_ROOT_MINUS = "unit_root_minus"
    SUPERCRITICAL_DISTINCT_REAL_OTHER = "supercritical_distinct_real_other"
    SUPERCRITICAL_OTHER = "supercritical_other"

    @property
    def distinct_real_supercritical(self) -> bool:
        return self in _DISTINCT_REAL


_DISTINCT_REAL = {
    Classification.PURELY_EXPLOSIVE,
    Classification.PARTIALLY_EXPLOSIVE,
    Classification.UNIT_ROOT_PLUS,
    Classification.UNIT_ROOT_MINUS,
    Classification.SUPERCRITICAL_DISTINCT_REAL_OTHER,
}


class UnsupportedRootsError(ValueError):
    """Raised when an operation needs real roots with |lambda1| > |lambda2|."""


@dataclass(frozen=True)
class ArParams:
    theta1: float
    theta2: float
    sigma: float = 1.0
    x0: float = 0.0
    x_neg1: float = 0.0

    def __post_init__(self):
        for name in ("theta1", "theta2", "sigma", "x0", "x_neg1"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def case(cls, number: int, sigma: float = 1.0) -> "ArParams":
        theta1, theta2 = CASES[number]
        return cls(theta1, theta2, sigma=sigma)


@dataclass(frozen=True)
class RootInfo:
    theta1: float
    theta2: float
    lambda_plus: complex
    lambda_minus: complex
    lambda1: float | None
    lambda2: float | None
    discriminant: float
    classification: Classification

    @property
    def spectral_radius(self) -> float:
        return max(abs(self.lambda_plus), abs(self.lambda_minus))

    @property
    def has_lambda1(self) -> bool:
        return self.lambda1 is not None

    @property
    def sign1(self) -> int:
        self.require_lambda1()
        return 1 if self.lambda1 > 0 else -1

    def require_lambda1(self, supercritical: bool = False) -> None:
        if self.lambda1 is None:
            raise UnsupportedRootsError(
                f"({self.theta1}, {self.theta2}) has no real roots with |lambda1| > |lambda2|"
            )
        if supercritical and not abs(self.lambda1) > 1:
            raise UnsupportedRootsError(
                f"({self.theta1}, {self.theta2}) is not supercritical (|lambda1| = {abs(self.lambda1)})"
            )

    def big_roots(self, ctx: PrecisionCtx):
        """``(lambda1, lambda2)`` as BigReal at the context's precision.

        The larger-magnitude root comes from the quadratic formula with the
        sign chosen to avoid cancellation; the other one from the product of
        the roots, which equals ``-theta2``.
        """
        self.require_lambda1()
        with ctx.activate():
            t1, t2 = embed(self.theta1, ctx), embed(self.theta2, ctx)
            root_d = gmpy2.sqrt(t1 * t1 + 4 * t2)
            big = (t1 + root_d) / 2 if t1 > 0 else (t1 - root_d) / 2
            small = -t2 / big
        return big, small


def _poly(theta1: Fraction, theta2: Fraction, x: int) -> Fraction:
    return x * x - theta1 * x - theta2


def roots(theta1: float, theta2: float) -> RootInfo:
    """Characteristic roots and classification of the AR(2) polynomial.

    ``lambda1``/``lambda2`` (larger/smaller absolute value) are filled in only
    for distinct real roots of different magnitude.
    """
    disc = theta1 * theta1 + 4 * theta2
    root_d = cmath.sqrt(complex(disc))
    lam_plus = (theta1 + root_d) / 2
    lam_minus = (theta1 - root_d) / 2

    q1, q2 = Fraction(theta1), Fraction(theta2)
    exact_disc = q1 * q1 + 4 * q2

    lambda1 = lambda2 = None
    if exact_disc > 0 and q1 != 0:
        # stable formula: the big root has the sign of theta1
        big = (theta1 + math.copysign(math.sqrt(disc), theta1)) / 2
        lambda1, lambda2 = big, -theta2 / big
        lam_plus, lam_minus = (complex(lambda1), complex(lambda2)) if theta1 > 0 else (
            complex(lambda2), complex(lambda1))
    elif exact_disc > 0:
        lam_plus, lam_minus = complex(math.sqrt(disc) / 2), complex(-math.sqrt(disc) / 2)

    info = RootInfo(
        theta1=theta1,
        theta2=theta2,
        lambda_plus=lam_plus,
        lambda_minus=lam_minus,
        lambda1=lambda1,
        lambda2=lambda2,
        discriminant=disc,
        classification=Classification.SUBCRITICAL,  # replaced below
    )
    return RootInfo(**{**info.__dict__, "classification": classify(info)})


def _compare_abs_to_one(square_modulus: Fraction) -> int:
    return (square_modulus > 1) - (square_modulus < 1)


def classify(r: RootInfo) -> Classification:
    """Classify by spectral radius and the position of the roots.

    Works in exact rational arithmetic on the (double) coefficients: the
    position of each real root relative to +-1 follows from the sign of the
    polynomial at +-1 and the location of its vertex, so no tolerance is
    involved.
    """
    q1, q2 = Fraction(r.theta1), Fraction(r.theta2)
    disc = q1 * q1 + 4 * q2

    if disc < 0:
        # complex conjugate pair, |lambda|^2 = lambda * conj(lambda) = -theta2
        cmp = _compare_abs_to_one(-q2)
        return _by_radius(cmp)
    if disc == 0:
        # double root theta1 / 2
        cmp = _compare_abs_to_one((q1 / 2) ** 2)
        return _by_radius(cmp)

    p_plus, p_minus = _poly(q1, q2, 1), _poly(q1, q2, -1)
    if p_plus == 0 or p_minus == 0:
        # one root is +-1; the product of the roots is -theta2
        unit = 1 if p_plus == 0 else -1
        other = -q2 / unit
        positions = [0, _compare_abs_to_one(other * other)]
    else:
        vertex = q1 / 2
        # distinct real roots a < b, neither equal to +-1
        b_gt_1 = p_plus < 0 or vertex > 1
        a_gt_1 = p_plus > 0 and vertex > 1
        a_lt_m1 = p_minus < 0 or vertex < -1
        b_lt_m1 = p_minus > 0 and vertex < -1
        n_out = b_gt_1 + a_gt_1 + a_lt_m1 + b_lt_m1
        positions = [1] * n_out + [-1] * (2 - n_out)
    outside = positions.count(1)
    on_circle = positions.count(0)

    if outside == 0:
        return Classification.CRITICAL if on_circle else Classification.SUBCRITICAL
    if q1 == 0:
        # lambda_- = -lambda_+: equal moduli
        return Classification.SUPERCRITICAL_OTHER
    # |lambda1| > 1 here; locate lambda2
    if p_plus == 0:
        return Classification.UNIT_ROOT_PLUS
    if p_minus == 0:
        return Classification.UNIT_ROOT_MINUS
    if outside == 2:
        return Classification.PURELY_EXPLOSIVE
    if outside == 1:
        return Classification.PARTIALLY_EXPLOSIVE
    return Classification.SUPERCRITICAL_DISTINCT_REAL_OTHER


def _by_radius(cmp: int) -> Classification:
    if cmp < 0:
        return Classification.SUBCRITICAL
    if cmp == 0:
        return Classification.CRITICAL
    return Classification.SUPERCRITICAL_OTHER


def companion_matrix(theta1: float, theta2: float, ctx: PrecisionCtx):
    with ctx.activate():
        return ((embed(theta1, ctx), embed(theta2, ctx)), (mpfr(1), mpfr(0)))


def companion_power(r: RootInfo, n: int, ctx: PrecisionCtx):
    """``theta**n`` through its spectral decomposition.

    ``theta**n = l1**n/(l1-l2) [[l1, -l1 l2], [1, -l2]]
                + l2**n/(l1-l2) [[-l2, l1 l2], [-1, l1]]``
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if r.lambda1 is None:
        raise UnsupportedRootsError("companion_power needs distinct real roots")
    l1, l2 = r.big_roots(ctx)
    with ctx.activate():
        d = l1 - l2
        c1 = l1**n / d
        c2 = l2**n / d
        p = l1 * l2
        return (
            (c1 * l1 - c2 * l2, -c1 * p + c2 * p),
            (c1 - c2, -c1 * l2 + c2 * l1),
        )


def companion_power_by_multiplication(theta1: float, theta2: float, n: int, ctx: PrecisionCtx):
    """``theta**n`` by repeated multiplication (reference path)."""
    m = companion_matrix(theta1, theta2, ctx)
    with ctx.activate():
        out = ((mpfr(1), mpfr(0)), (mpfr(0), mpfr(1)))
        for _ in range(n):
            out = mat_mul(out, m)
    return out
