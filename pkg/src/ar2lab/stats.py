"""Descriptive statistics and normality tests (double precision).

Samples arrive as plain floats; the scaled errors being tested are O(1), so
nothing here needs more than 64-bit arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special
from scipy.stats import chi2 as _chi2

NORMAL_IQR = 2 * special.ndtri(0.75)  # about 1.349


class Variant(enum.Enum):
    FULLY_SPECIFIED_N01 = "fully_specified_n01"
    ESTIMATED_PARAMS = "estimated_params"


class DegenerateSampleError(ValueError):
    """Sample too small or with zero spread."""


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    mean: float
    variance: float
    median: float
    skewness: float
    kurtosis: float
    iqr: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TestReport:
    test: str
    variant: str
    statistic: float
    p_value: float
    n: int
    flags: tuple = ()

    def to_dict(self):
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d

    def accepts(self, level: float) -> bool:
        return self.p_value >= level


def normal_cdf(x: float) -> float:
    """Standard normal distribution function."""
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _as_sample(sample, min_n: int) -> np.ndarray:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < min_n:
        raise DegenerateSampleError(f"need at least {min_n} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    return x


def descriptive(sample) -> DescriptiveStats:
    """Mean, variance (divisor n-1), median, moment skewness and kurtosis
    (divisor n, non-excess), and the R-7 interquartile range."""
    x = _as_sample(sample, 4)
    n = x.size
    mean = float(x.mean())
    d = x - mean
    spread = float(np.max(np.abs(d)))
    if spread <= 16 * np.finfo(float).eps * float(np.max(np.abs(x))):
        # includes spread == 0; below this the deviations are rounding noise
        raise DegenerateSampleError("zero variance: skewness and kurtosis undefined")
    # shape moments are scale free; rescaling keeps m2**2 from underflowing
    u = d / spread
    m2 = float(np.mean(u**2))
    m3 = float(np.mean(u**3))
    m4 = float(np.mean(u**4))
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    return DescriptiveStats(
        n=n,
        mean=mean,
        variance=float(np.sum(d**2) / (n - 1)),
        median=float(med),
        skewness=m3 / m2**1.5,
        kurtosis=m4 / m2**2,
        iqr=float(q3 - q1),
    )


def covariance(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise DegenerateSampleError("need at least 2 observations")
    return float(np.sum((a - a.mean()) * (b - b.mean())) / (a.size - 1))


def _standardize(x: np.ndarray, variant: Variant) -> np.ndarray:
    if variant is Variant.FULLY_SPECIFIED_N01:
        return x
    sd = x.std(ddof=1)
    if sd == 0:
        raise DegenerateSampleError("zero variance")
    return (x - x.mean()) / sd


def _phi(y: np.ndarray) -> np.ndarray:
    return 0.5 * special.erfc(-y / math.sqrt(2.0))


def kolmogorov_sf(t: float, tol: float = 1e-12) -> float:
    """P(K > t) for the limiting Kolmogorov distribution.

    For t >= 1 the alternating series ``2 sum (-1)**(k-1) exp(-2 k^2 t^2)``
    is summed until terms drop below ``tol``; below that the equivalent
    theta-function form of the CDF converges much faster.
    """
    if t <= 0:
        return 1.0
    if t >= 1.0:
        total, k = 0.0, 1
        while True:
            term = math.exp(-2.0 * k * k * t * t)
            total += term if k % 2 else -term
            if term < tol:
                break
            k += 1
        p = 2.0 * total
    else:
        total, k = 0.0, 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * t * t))
            total += term
            if term < tol * total or k > 200:
                break
            k += 1
        p = 1.0 - math.sqrt(2 * math.pi) / t * total
    return min(1.0, max(0.0, p))


def ks_statistic(sample, variant: Variant = Variant.FULLY_SPECIFIED_N01) -> float:
    x = np.sort(_standardize(_as_sample(sample, 1), variant))
    n = x.size
    cdf = _phi(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def lilliefors_pvalue(d: float, n: int) -> float:
    """Approximate p-value of the KS statistic when mean and sd are estimated.

    Dallal and Wilkinson's fit for p < 0.1, with Stephens' polynomial in the
    modified statistic ``(sqrt(n) - 0.01 + 0.85/sqrt(n)) D`` above that.
    """
    if n > 100:
        kd, nd = d * (n / 100) ** 0.49, 100
    else:
        kd, nd = d, n
    p = math.exp(-7.01256 * kd**2 * (nd + 2.78019) + 2.99587 * kd * math.sqrt(nd + 2.78019)
                 - 0.122119 + 0.974598 / math.sqrt(nd) + 1.67997 / nd)
    if p > 0.1:
        k = (math.sqrt(n) - 0.01 + 0.85 / math.sqrt(n)) * d
        if k <= 0.302:
            p = 1.0
        elif k <= 0.5:
            p = 2.76773 - 19.828315 * k + 80.709644 * k**2 - 138.55152 * k**3 + 81.218052 * k**4
        elif k <= 0.9:
            p = -4.901232 + 40.662806 * k - 97.490286 * k**2 + 94.029866 * k**3 - 32.355711 * k**4
        elif k <= 1.31:
            p = 6.198765 - 19.329958 * k + 22.554231 * k**2 - 11.596009 * k**3 + 2.299995 * k**4
        else:
            p = 0.0
    return min(1.0, max(0.0, p))


def ks_test(sample, variant: Variant = Variant.FULLY_SPECIFIED_N01, lilliefors: bool = False) -> TestReport:
    """Kolmogorov-Smirnov against N(0, 1) or against N(mean, sd) with plug-in
    estimates.

    By default the p-value uses the asymptotic Kolmogorov law with the
    Stephens correction ``t = (sqrt(n) + 0.12 + 0.11/sqrt(n)) D`` for both
    variants, as common statistical software does.  With estimated
    parameters that p-value is conservative (rejects far less often than the
    nominal level); ``lilliefors=True`` uses the Lilliefors null
    distribution instead (see ``lilliefors_pvalue``).
    """
    x = _as_sample(sample, 8)
    n = x.size
    d = ks_statistic(x, variant)
    if variant is Variant.FULLY_SPECIFIED_N01:
        name = "KS_N01"
    else:
        name = "KS"
        if lilliefors:
            return TestReport(name, variant.value, d, lilliefors_pvalue(d, n), n, ("lilliefors",))
    rn = math.sqrt(n)
    return TestReport(name, variant.value, d, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d), n)


def jb_test(sample) -> TestReport:
    """Jarque-Bera with the chi-squared(2) survival function ``exp(-JB/2)``."""
    x = _as_sample(sample, 8)
    s = descriptive(x)
    jb = x.size / 6.0 * (s.skewness**2 + (s.kurtosis - 3.0) ** 2 / 4.0)
    return TestReport("JB", Variant.ESTIMATED_PARAMS.value, jb, math.exp(-jb / 2.0), x.size)


def ad_statistic(sample, variant: Variant = Variant.ESTIMATED_PARAMS):
    """Anderson-Darling A^2 and whether any CDF value had to be clamped."""
    x = np.sort(_standardize(_as_sample(sample, 1), variant))
    n = x.size
    cdf = _phi(x)
    clamped = bool(np.any(cdf < 1e-16) or np.any(cdf > 1 - 1e-16))
    cdf = np.clip(cdf, 1e-16, 1 - 1e-16)
    i = np.arange(1, n + 1)
    s = np.sum((2 * i - 1) * (np.log(cdf) + np.log1p(-cdf[::-1])))
    return float(-n - s / n), clamped


def ad_pvalue_composite(a2_star: float) -> float:
    """p-value for the modified statistic A* (normal, both parameters
    estimated), piecewise exponential fit of D'Agostino and Stephens."""
    a = a2_star
    if a < 0.2:
        p = 1 - math.exp(-13.436 + 101.14 * a - 223.73 * a * a)
    elif a < 0.34:
        p = 1 - math.exp(-8.318 + 42.796 * a - 59.938 * a * a)
    elif a < 0.6:
        p = math.exp(0.9177 - 4.279 * a - 1.38 * a * a)
    elif a < 10:
        p = math.exp(1.2937 - 5.709 * a + 0.0186 * a * a)
    else:
        p = 3.7e-24
    return min(1.0, max(0.0, p))


def ad_pvalue_simple(a2: float) -> float:
    """Asymptotic p-value of A^2 for a fully specified null
    (Marsaglia and Marsaglia's approximation of the limiting CDF)."""
    z = a2
    if z <= 0:
        return 1.0
    if z < 2:
        cdf = math.exp(-1.2337141 / z) / math.sqrt(z) * (
            2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z
        )
    else:
        cdf = math.exp(
            -math.exp(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z)
        )
    return min(1.0, max(0.0, 1.0 - cdf))


def ad_test(sample, variant: Variant = Variant.ESTIMATED_PARAMS) -> TestReport:
    x = _as_sample(sample, 8)
    n = x.size
    a2, clamped = ad_statistic(x, variant)
    flags = ("cdf_clamped",) if clamped else ()
    if variant is Variant.ESTIMATED_PARAMS:
        a_star = a2 * (1 + 0.75 / n + 2.25 / n**2)
        return TestReport("AD", variant.value, a_star, ad_pvalue_composite(a_star), n, flags)
    return TestReport("AD_N01", variant.value, a2, ad_pvalue_simple(a2), n, flags)


def pearson_bins(n: int) -> int:
    return math.ceil(2 * n**0.4)


def pearson_chi2_test(sample) -> TestReport:
    """Pearson chi-squared with ceil(2 n^0.4) cells equiprobable under the
    fitted normal; df = cells - 3 (two estimated parameters)."""
    x = _as_sample(sample, 50)
    n = x.size
    bins = pearson_bins(n)
    flags = ()
    if n / bins < 1:
        bins = n
        flags = ("bins_reduced",)
    y = _standardize(x, Variant.ESTIMATED_PARAMS)
    cell = np.minimum(np.floor(_phi(y) * bins).astype(int), bins - 1)
    observed = np.bincount(cell, minlength=bins)
    expected = n / bins
    stat = float(np.sum((observed - expected) ** 2) / expected)
    p = float(_chi2.sf(stat, bins - 3))
    return TestReport("PCS", Variant.ESTIMATED_PARAMS.value, stat, p, n, flags)


def chi2_quantile_2df(prob: float) -> float:
    """``prob``-quantile of chi-squared(2): ``-2 ln(1 - prob)``."""
    if not 0 < prob < 1:
        raise ValueError("prob must lie in (0, 1)")
    return -2.0 * math.log1p(-prob)


def chi2_quantile(prob: float, df: int) -> float:
    if not 0 < prob < 1:
        raise ValueError("prob must lie in (0, 1)")
    if df == 2:
        return chi2_quantile_2df(prob)
    if df == 1:
        return float(special.ndtri(0.5 + prob / 2) ** 2)
    return float(_chi2.ppf(prob, df))


def all_tests(sample) -> list[TestReport]:
    """The battery reported per case: both KS variants, PCS, both AD variants, JB."""
    return [
        ks_test(sample, Variant.ESTIMATED_PARAMS),
        ks_test(sample, Variant.FULLY_SPECIFIED_N01),
        pearson_chi2_test(sample),
        ad_test(sample, Variant.ESTIMATED_PARAMS),
        ad_test(sample, Variant.FULLY_SPECIFIED_N01),
        jb_test(sample),
    ]
