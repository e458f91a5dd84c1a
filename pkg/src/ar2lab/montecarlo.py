"""Replicated experiments: per-case runs, table aggregation, histograms, coverage.

Replication ``i`` of a case always draws its innovations from
``SeedSpec(master_seed, i)`` and results are aggregated in replication order,
so reports do not depend on the number of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import estimate, stats
from .model import ArParams, RootInfo, UnsupportedRootsError, roots
from .numerics import DEFAULT_BITS, PrecisionCtx, mat_mul, mat_rel_residual, to_decimal
from .simulate import SeedSpec, gen_innovations, simulate_path

DEFAULT_SEED = 42


@dataclass(frozen=True)
class ExperimentConfig:
    params: ArParams
    n: int = 100
    reps: int = 1000
    master_seed: int = DEFAULT_SEED
    mantissa_bits: int = DEFAULT_BITS
    alpha: float = 0.05

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        PrecisionCtx(self.mantissa_bits)

    @property
    def ctx(self) -> PrecisionCtx:
        return PrecisionCtx(self.mantissa_bits)


@dataclass(frozen=True)
class ReplicationRecord:
    rep_index: int
    gram_ok: bool
    theta_hats: tuple = (math.nan, math.nan)
    scaled_error: tuple = (math.nan, math.nan)
    collinearity_gap: float = math.nan
    sqrt_scaled_error: tuple = (math.nan, math.nan)
    covered: bool = False
    # quadratic form at the true parameter divided by 2 sigma^2
    coverage_pivot: float = math.nan
    decomposition_residual: float = math.nan
    factorization_residual: float = math.nan
    # relative residual of (G_n^{1/2})^2 = G_n
    sym_sqrt_residual: float = math.nan
    # rep, theta_hat1, theta_hat2, e1, e2, det_g as 25-digit decimal text
    csv_row: tuple = ()


def run_replication(cfg: ExperimentConfig, rep_index: int) -> ReplicationRecord:
    ctx = cfg.ctx
    p = cfg.params
    r = roots(p.theta1, p.theta2)
    innov = gen_innovations(SeedSpec(cfg.master_seed, rep_index), cfg.n, p.sigma)
    traj = simulate_path(p, innov, ctx)
    g = estimate.gram_sums(traj, ctx)
    try:
        est = estimate.lse(g, ctx)
        se = estimate.scaled_error(g, est, p, ctx)
    except (estimate.SingularGramError, estimate.ZeroSumOfSquaresError):
        return ReplicationRecord(rep_index, gram_ok=False)

    mstate = estimate.martingale(traj, innov, ctx)
    d = est.error(p, ctx)
    dec = estimate.decomposition_error(mstate, ctx)
    se_m = estimate.scaled_error_via_martingale(g, mstate, ctx)
    sq = estimate.sqrt_scaled_error(mstate, est, p, p.sigma, ctx)
    region = estimate.confidence_region(g, est, p.sigma, cfg.alpha, ctx)
    truth = (p.theta1, p.theta2)
    covered = region.contains(truth, ctx)
    pivot = region.quadratic_form(truth, ctx) / (2 * p.sigma**2)
    root = estimate.sym_sqrt_2x2(g.matrix, ctx)
    with ctx.activate():
        sqrt_res = mat_rel_residual(mat_mul(root, root), g.matrix)
        dec_res = max(abs(d[0] - dec[0]), abs(d[1] - dec[1])) / max(abs(d[0]), abs(d[1]))
        fac_res = max(abs(se.e1 - se_m.e1), abs(se.e2 - se_m.e2)) / max(abs(se.e1), abs(se.e2))
    gap = se.collinearity_gap(r.sign1, ctx)

    row = (str(rep_index),) + tuple(
        to_decimal(v, 25) for v in (est.theta_hat1, est.theta_hat2, se.e1, se.e2, est.det_g)
    )
    return ReplicationRecord(
        rep_index=rep_index,
        gram_ok=True,
        theta_hats=(float(est.theta_hat1), float(est.theta_hat2)),
        scaled_error=(float(se.e1), float(se.e2)),
        collinearity_gap=float(gap),
        sqrt_scaled_error=(float(sq[0]), float(sq[1])),
        covered=bool(covered),
        coverage_pivot=float(pivot),
        decomposition_residual=float(dec_res),
        factorization_residual=float(fac_res),
        sym_sqrt_residual=float(sqrt_res),
        csv_row=row,
    )


def _replicate_chunk(args):
    cfg, indices = args
    return [run_replication(cfg, i) for i in indices]


def run_replications(cfg: ExperimentConfig, workers: int = 1) -> list[ReplicationRecord]:
    """All replications of ``cfg``, ordered by replication index."""
    r = roots(cfg.params.theta1, cfg.params.theta2)
    if not (r.classification.distinct_real_supercritical and r.lambda1 is not None):
        raise UnsupportedRootsError(
            f"({cfg.params.theta1}, {cfg.params.theta2}) is {r.classification.value}; "
            "need a supercritical process with distinct real roots"
        )
    indices = list(range(cfg.reps))
    if workers <= 1 or cfg.reps < 2:
        return [run_replication(cfg, i) for i in indices]
    chunks = [indices[k::workers] for k in range(workers)]
    chunks = [c for c in chunks if c]
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(_replicate_chunk, [(cfg, c) for c in chunks]))
    records = [rec for part in parts for rec in part]
    records.sort(key=lambda rec: rec.rep_index)
    return records


def histogram(sample, bin_width_rule: str = "fd"):
    """Density histogram as a list of ``(bin_left, bin_right, density)``.

    The default Freedman-Diaconis rule uses width ``2 IQR n**(-1/3)``; bin
    edges are integer multiples of the width (aligned to 0).
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 10:
        raise stats.DegenerateSampleError("need at least 10 observations")
    if bin_width_rule != "fd":
        raise ValueError(f"unknown bin width rule {bin_width_rule!r}")
    q1, q3 = np.quantile(x, [0.25, 0.75])
    iqr = float(q3 - q1)
    if iqr == 0:
        raise stats.DegenerateSampleError("zero interquartile range")
    h = 2 * iqr * x.size ** (-1 / 3)
    lo = math.floor(x.min() / h)
    hi = math.floor(x.max() / h) + 1
    idx = np.floor(x / h).astype(int) - lo
    counts = np.bincount(idx, minlength=hi - lo)
    return [
        ((lo + k) * h, (lo + k + 1) * h, float(c) / (x.size * h))
        for k, c in enumerate(counts)
    ]


@dataclass
class CaseReport:
    params: ArParams
    root_info: RootInfo
    n: int
    reps: int
    master_seed: int
    mantissa_bits: int
    alpha: float
    used_reps: int
    singular_count: int
    mean_estimates: tuple
    descriptive: stats.DescriptiveStats | None
    covariance_e1e2: float | None
    tests: list = field(default_factory=list)
    histogram: list = field(default_factory=list)
    coverage: float | None = None
    max_collinearity_gap: float | None = None
    sqrt_scaled: dict | None = None
    max_decomposition_residual: float | None = None
    max_factorization_residual: float | None = None
    max_sym_sqrt_residual: float | None = None
    flags: list = field(default_factory=list)

    def test(self, name: str) -> stats.TestReport:
        for t in self.tests:
            if t.test == name:
                return t
        raise KeyError(name)

    def to_dict(self) -> dict:
        r = self.root_info
        return {
            "params": asdict(self.params),
            "roots": {
                "lambda1": r.lambda1,
                "lambda2": r.lambda2,
                "classification": r.classification.value,
            },
            "n": self.n,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "mantissa_bits": self.mantissa_bits,
            "alpha": self.alpha,
            "used_reps": self.used_reps,
            "singular_count": self.singular_count,
            "mean_estimates": list(self.mean_estimates),
            "descriptive": self.descriptive.to_dict() if self.descriptive else None,
            "covariance_e1e2": self.covariance_e1e2,
            "tests": [t.to_dict() for t in self.tests],
            "histogram": [list(b) for b in self.histogram],
            "coverage": self.coverage,
            "max_collinearity_gap": self.max_collinearity_gap,
            "sqrt_scaled": self.sqrt_scaled,
            "max_decomposition_residual": self.max_decomposition_residual,
            "max_factorization_residual": self.max_factorization_residual,
            "max_sym_sqrt_residual": self.max_sym_sqrt_residual,
            "flags": list(self.flags),
        }


def aggregate(cfg: ExperimentConfig, records: list[ReplicationRecord]) -> CaseReport:
    r = roots(cfg.params.theta1, cfg.params.theta2)
    ok = [rec for rec in records if rec.gram_ok]
    singular = len(records) - len(ok)
    flags = []
    if singular:
        flags.append(f"excluded {singular} replications with det(G_n) <= 0")
    if not ok:
        return CaseReport(cfg.params, r, cfg.n, cfg.reps, cfg.master_seed, cfg.mantissa_bits, cfg.alpha,
                          0, singular, (math.nan, math.nan), None, None, flags=flags + ["no usable replications"])

    th = np.array([rec.theta_hats for rec in ok])
    e = np.array([rec.scaled_error for rec in ok])
    sq = np.array([rec.sqrt_scaled_error for rec in ok])
    report = CaseReport(
        params=cfg.params,
        root_info=r,
        n=cfg.n,
        reps=cfg.reps,
        master_seed=cfg.master_seed,
        mantissa_bits=cfg.mantissa_bits,
        alpha=cfg.alpha,
        used_reps=len(ok),
        singular_count=singular,
        mean_estimates=(float(th[:, 0].mean()), float(th[:, 1].mean())),
        descriptive=None,
        covariance_e1e2=None,
        coverage=float(np.mean([rec.covered for rec in ok])),
        max_collinearity_gap=float(max(rec.collinearity_gap for rec in ok)),
        max_decomposition_residual=float(max(rec.decomposition_residual for rec in ok)),
        max_factorization_residual=float(max(rec.factorization_residual for rec in ok)),
        max_sym_sqrt_residual=float(max(rec.sym_sqrt_residual for rec in ok)),
        flags=flags,
    )
    e1 = e[:, 0]
    try:
        report.descriptive = stats.descriptive(e1)
        report.covariance_e1e2 = stats.covariance(e1, e[:, 1])
        report.sqrt_scaled = {
            "variance1": stats.descriptive(sq[:, 0]).variance,
            "variance2": stats.descriptive(sq[:, 1]).variance,
            "covariance12": stats.covariance(sq[:, 0], sq[:, 1]),
        }
    except stats.DegenerateSampleError:
        report.flags.append("too few replications for descriptive statistics")
        return report
    try:
        report.tests = stats.all_tests(e1)
    except stats.DegenerateSampleError:
        report.flags.append("too few replications for normality tests")
    try:
        report.histogram = histogram(e1)
    except stats.DegenerateSampleError:
        report.flags.append("too few replications for a histogram")
    return report


def run_case(cfg: ExperimentConfig, workers: int = 1) -> CaseReport:
    return aggregate(cfg, run_replications(cfg, workers))


def coverage_experiment(cfg: ExperimentConfig, workers: int = 1) -> float:
    """Fraction of replications whose confidence region at level ``cfg.alpha``
    contains the true parameter."""
    report = run_case(cfg, workers)
    return report.coverage


def coverage_at(records, alpha: float, df: int = 2) -> float:
    """Coverage of the region with threshold ``2 sigma^2 chi2_{1-alpha}(df)``,
    from the pivots stored in the records."""
    q = stats.chi2_quantile(1 - alpha, df)
    pivots = [rec.coverage_pivot for rec in records if rec.gram_ok]
    return sum(v <= q for v in pivots) / len(pivots)
