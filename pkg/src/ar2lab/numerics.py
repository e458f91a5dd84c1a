"""Arbitrary-precision reals backed by MPFR (through gmpy2).

Every quantity the laboratory carries between modules (path values, cross
sums, estimators, limit matrices) is a ``BigReal``, which is simply a
``gmpy2.mpfr``.  Arithmetic on such values is rounded to nearest (ties to
even) at the precision of the active gmpy2 context, so pipeline code runs
inside ``with ctx.activate():`` blocks.

Small helpers for 2x2 matrices and 2-vectors live here as well; matrices are
nested tuples ``((a, b), (c, d))``.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

BigReal = type(mpfr(0))

DEFAULT_BITS = 800
MIN_BITS = 64
DEFAULT_SIG_DIGITS = 25
MAX_SIG_DIGITS = 250

_DECIMAL_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def default_bits() -> int:
    """Default mantissa width, honouring the ``AR2LAB_BITS`` override."""
    env = os.environ.get("AR2LAB_BITS")
    if env:
        return int(env)
    return DEFAULT_BITS


@dataclass(frozen=True)
class PrecisionCtx:
    """Working precision (mantissa bits) for BigReal arithmetic."""

    mantissa_bits: int = DEFAULT_BITS

    def __post_init__(self):
        if int(self.mantissa_bits) != self.mantissa_bits or self.mantissa_bits < MIN_BITS:
            raise ValueError(f"mantissa_bits must be an integer >= {MIN_BITS}, got {self.mantissa_bits}")

    def activate(self) -> gmpy2.context:
        """Return a fresh gmpy2 context to use as ``with ctx.activate(): ...``.

        Division by zero and invalid operations (sqrt of a negative number)
        raise instead of producing inf/nan; the exponent range is the widest
        MPFR allows.
        """
        return gmpy2.context(
            precision=self.mantissa_bits,
            round=gmpy2.RoundToNearest,
            emax=gmpy2.get_emax_max(),
            emin=gmpy2.get_emin_min(),
            subnormalize=False,
            trap_divzero=True,
            trap_invalid=True,
            trap_overflow=True,
        )

    @property
    def roundtrip_digits(self) -> int:
        """Significant decimal digits that make to_decimal/parse round-trip."""
        return math.ceil(self.mantissa_bits * math.log10(2)) + 2

    def ulp_bound(self, k: int = 1) -> BigReal:
        """``2**(k - mantissa_bits)``, a relative rounding bound."""
        return mpfr(2) ** (k - self.mantissa_bits)


def embed(x: float, ctx: PrecisionCtx) -> BigReal:
    """Embed a finite double (or int) exactly.

    A BigReal argument is passed through, rounded to the working precision.
    """
    if isinstance(x, BigReal):
        if not gmpy2.is_finite(x):
            raise ValueError(f"cannot embed non-finite value {x!r}")
        with ctx.activate():
            return +x
    if isinstance(x, int) and not isinstance(x, bool):
        if x.bit_length() > ctx.mantissa_bits:
            raise ValueError("integer does not fit in the working precision")
    else:
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"cannot embed non-finite value {x!r}")
    # a double has a 53-bit significand, so this never rounds at >= 64 bits
    with ctx.activate():
        return mpfr(x)


def parse(text: str, ctx: PrecisionCtx) -> BigReal:
    """Parse decimal text (sign, digits, optional point, optional exponent)."""
    s = text.strip()
    if not _DECIMAL_RE.match(s):
        raise ValueError(f"malformed decimal text: {text!r}")
    with ctx.activate():
        return mpfr(s)


def to_float(a: BigReal) -> float:
    """Round to the nearest double."""
    return float(a)


def to_decimal(a: BigReal, sig_digits: int = DEFAULT_SIG_DIGITS) -> str:
    """Correctly rounded decimal text with ``sig_digits`` significant digits.

    Plain positional notation is used when the decimal exponent lies in
    ``[-5, sig_digits)``, scientific notation otherwise (like ``%g`` but
    keeping trailing zeros).
    """
    if not 1 <= sig_digits <= MAX_SIG_DIGITS:
        raise ValueError(f"sig_digits must be in [1, {MAX_SIG_DIGITS}]")
    if not gmpy2.is_finite(a):
        raise ValueError("cannot format a non-finite value")
    if a == 0:
        body = "0" if sig_digits == 1 else "0." + "0" * (sig_digits - 1)
        return ("-" if gmpy2.is_signed(a) else "") + body

    mant, exp, _ = a.digits(10, sig_digits)
    sign = ""
    if mant[0] == "-":
        sign, mant = "-", mant[1:]
    # value = 0.mant * 10**exp, so the leading digit has exponent exp - 1
    e10 = exp - 1
    if -5 <= e10 < sig_digits:
        if e10 >= 0:
            head, tail = mant[: e10 + 1], mant[e10 + 1 :]
            body = head + ("." + tail if tail else "")
        else:
            body = "0." + "0" * (-e10 - 1) + mant
    else:
        body = mant[0] + ("." + mant[1:] if len(mant) > 1 else "")
        body += f"e{e10:+d}"
    return sign + body


def arith(op: str, a: BigReal, b: BigReal | None = None, *, ctx: PrecisionCtx) -> BigReal:
    """Single correctly rounded operation: one of ``+ - * / sqrt``."""
    with ctx.activate():
        if op == "sqrt":
            if a < 0:
                raise ValueError("sqrt of a negative number")
            return gmpy2.sqrt(a)
        if b is None:
            raise TypeError(f"operator {op!r} needs two operands")
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                raise ZeroDivisionError("division by zero")
            return a / b
    raise ValueError(f"unknown operator {op!r}")


def sign(a) -> int:
    return (a > 0) - (a < 0)


def rel_diff(a, b) -> BigReal:
    """``|a - b| / max(|a|, |b|)``; 0 when both are 0."""
    scale = max(abs(a), abs(b))
    if scale == 0:
        return mpfr(0)
    return abs(a - b) / scale


# 2x2 matrices / 2-vectors.  Callers are expected to hold an active context.

def mat_mul(a, b):
    return (
        (a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]),
        (a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]),
    )


def mat_vec(a, v):
    return (a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1])


def mat_scale(c, a):
    return ((c * a[0][0], c * a[0][1]), (c * a[1][0], c * a[1][1]))


def mat_add(a, b):
    return ((a[0][0] + b[0][0], a[0][1] + b[0][1]), (a[1][0] + b[1][0], a[1][1] + b[1][1]))


def transpose(a):
    return ((a[0][0], a[1][0]), (a[0][1], a[1][1]))


def det2(a):
    return a[0][0] * a[1][1] - a[0][1] * a[1][0]


def inv2(a):
    d = det2(a)
    if d == 0:
        raise ZeroDivisionError("singular 2x2 matrix")
    return ((a[1][1] / d, -a[0][1] / d), (-a[1][0] / d, a[0][0] / d))


def identity2(ctx: PrecisionCtx | None = None):
    one, zero = mpfr(1), mpfr(0)
    return ((one, zero), (zero, one))


def max_abs(a) -> BigReal:
    """Largest absolute entry of a vector or 2x2 matrix."""
    if isinstance(a[0], tuple):
        return max(abs(x) for row in a for x in row)
    return max(abs(x) for x in a)


def mat_rel_residual(a, b) -> BigReal:
    """``max_ij |a_ij - b_ij| / max_ij |b_ij|`` (entrywise, scaled by the reference)."""
    if isinstance(a[0], tuple):
        num = max(abs(x - y) for ra, rb in zip(a, b) for x, y in zip(ra, rb))
    else:
        num = max(abs(x - y) for x, y in zip(a, b))
    den = max_abs(b)
    if den == 0:
        return num
    return num / den


def to_float_matrix(a):
    if isinstance(a[0], tuple):
        return [[float(x) for x in row] for row in a]
    return [float(x) for x in a]
