"""Command-line front end.

    ar2lab replicate --case 1 --reps 1000 --out runs/case1
    ar2lab tables --config exp.json --out tables/
    ar2lab verify-limits --theta1 1 --theta2 3 --n 100 --seed 7

Values come from built-in defaults, then the JSON config file, then flags.
Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import estimate, limits, montecarlo, stats
from .model import CASES, ArParams, roots
from .numerics import PrecisionCtx, default_bits, to_decimal
from .simulate import SeedSpec, gen_innovations, simulate_path

COMMANDS = ("simulate", "estimate", "replicate", "tables", "hist", "coverage", "verify-limits")

# config keys -> types; flags use the same names with '-' for '_'
_FIELDS = {
    "theta1": float,
    "theta2": float,
    "sigma": float,
    "x0": float,
    "x_neg1": float,
    "n": int,
    "reps": int,
    "seed": int,
    "bits": int,
    "alpha": float,
    "workers": int,
    "rep": int,
    "df": int,
}


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    command: str
    theta1: float = 1.0
    theta2: float = 3.0
    sigma: float = 1.0
    x0: float = 0.0
    x_neg1: float = 0.0
    n: int = 100
    reps: int = 1000
    seed: int = montecarlo.DEFAULT_SEED
    bits: int = field(default_factory=default_bits)
    alpha: float = 0.05
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    rep: int = 0
    df: int = 2
    cases: list = field(default_factory=list)
    out: str | None = None
    input: str | None = None

    @property
    def params(self) -> ArParams:
        return ArParams(self.theta1, self.theta2, self.sigma, self.x0, self.x_neg1)

    def experiment(self, params: ArParams | None = None, seed: int | None = None) -> montecarlo.ExperimentConfig:
        return montecarlo.ExperimentConfig(
            params=params or self.params,
            n=self.n,
            reps=self.reps,
            master_seed=self.seed if seed is None else seed,
            mantissa_bits=self.bits,
            alpha=self.alpha,
        )


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ar2lab", description="Supercritical AR(2) least squares laboratory")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with experiment settings")
        p.add_argument("--case", type=int, choices=sorted(CASES), help="reference parameter pair 1..4")
        p.add_argument("--theta1", type=float)
        p.add_argument("--theta2", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--x0", type=float)
        p.add_argument("--x-neg1", dest="x_neg1", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--bits", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="output file (simulate, estimate, hist, coverage, verify-limits) "
                                      "or directory (replicate, tables)")
        if name == "simulate" or name == "estimate":
            p.add_argument("--rep", type=int, help="replication index of the innovation stream")
        if name == "hist":
            p.add_argument("--input", help="replications CSV written by 'replicate' (e1 column is used)")
        if name == "coverage":
            p.add_argument("--df", type=int, choices=(1, 2), help="degrees of freedom of the chi-squared quantile")
    return parser


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def _apply(cfg: CliConfig, values: dict, source: str) -> None:
    for key, value in values.items():
        if value is None:
            continue
        if key == "case":
            cfg.theta1, cfg.theta2 = CASES[int(value)]
        elif key == "cases":
            if not isinstance(value, list) or not value:
                raise UsageError(f"{source}: 'cases' must be a non-empty list")
            cfg.cases = value
        elif key in ("out", "input"):
            setattr(cfg, key, str(value))
        elif key in _FIELDS:
            try:
                setattr(cfg, key, _FIELDS[key](value))
            except (TypeError, ValueError) as exc:
                raise UsageError(f"{source}: bad value for {key}: {value!r}") from exc
        else:
            raise UsageError(f"{source}: unknown setting {key!r}")


def _validate(cfg: CliConfig) -> None:
    if not 0 < cfg.alpha < 1:
        raise UsageError(f"alpha must lie in (0, 1), got {cfg.alpha}")
    if not cfg.sigma > 0:
        raise UsageError(f"sigma must be positive, got {cfg.sigma}")
    if cfg.n < 3:
        raise UsageError("n must be at least 3")
    if cfg.reps < 1:
        raise UsageError("reps must be at least 1")
    if cfg.bits < 64:
        raise UsageError("bits must be at least 64")
    if cfg.workers < 1:
        raise UsageError("workers must be at least 1")
    if not 0 <= cfg.seed < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    for name in ("theta1", "theta2", "x0", "x_neg1"):
        if not math.isfinite(getattr(cfg, name)):
            raise UsageError(f"{name} must be finite")


def parse_args(argv=None) -> CliConfig:
    ns = build_parser().parse_args(argv)
    cfg = CliConfig(command=ns.command)
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    if ns.config:
        file_values = _load_config(ns.config)
        file_values.pop("command", None)
        _apply(cfg, file_values, ns.config)
    # an explicit --case is overridden by explicit --theta flags
    _apply(cfg, {"case": flags.pop("case")}, "flags")
    _apply(cfg, flags, "flags")
    _validate(cfg)
    return cfg


# output helpers

def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write UTF-8 text with LF endings via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(cfg: CliConfig, text: str, default_name: str | None = None) -> None:
    if cfg.out is None:
        sys.stdout.write(text)
        return
    target = Path(cfg.out)
    if default_name and (target.is_dir() or cfg.out.endswith(os.sep)):
        target = target / default_name
    write_atomic(target, text)


def _clean(obj):
    """JSON-safe copy: NaN/inf become null."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return f"{x:.10g}"


def _summary(label: str, report: montecarlo.CaseReport) -> str:
    d = report.descriptive
    parts = [
        f"{label}: theta=({report.params.theta1:g}, {report.params.theta2:g})",
        f"reps={report.used_reps}/{report.reps}",
        f"mean_lse=({report.mean_estimates[0]:.6f}, {report.mean_estimates[1]:.6f})",
    ]
    if d is not None:
        parts.append(f"var={d.variance:.5f} cov={report.covariance_e1e2:.5f}")
    if report.coverage is not None:
        parts.append(f"coverage={report.coverage:.3f}")
    return " ".join(parts)


# commands

def _cmd_simulate(cfg: CliConfig) -> None:
    ctx = PrecisionCtx(cfg.bits)
    innov = gen_innovations(SeedSpec(cfg.seed, cfg.rep), cfg.n, cfg.sigma)
    traj = simulate_path(cfg.params, innov, ctx)
    _emit(cfg, traj.to_csv(), "trajectory.csv")
    print(f"simulate: theta=({cfg.theta1:g}, {cfg.theta2:g}) n={cfg.n} "
          f"X_n={to_decimal(traj.x(cfg.n), 6)}", file=sys.stderr)


def _cmd_estimate(cfg: CliConfig) -> None:
    ctx = PrecisionCtx(cfg.bits)
    p = cfg.params
    r = roots(p.theta1, p.theta2)
    innov = gen_innovations(SeedSpec(cfg.seed, cfg.rep), cfg.n, p.sigma)
    traj = simulate_path(p, innov, ctx)
    g = estimate.gram_sums(traj, ctx)
    est = estimate.lse(g, ctx)
    out = {
        "theta_hat1": to_decimal(est.theta_hat1),
        "theta_hat2": to_decimal(est.theta_hat2),
        "det_g": to_decimal(est.det_g),
    }
    if r.lambda1 is not None:
        se = estimate.scaled_error(g, est, p, ctx)
        mstate = estimate.martingale(traj, innov, ctx)
        sq = estimate.sqrt_scaled_error(mstate, est, p, p.sigma, ctx)
        out.update({
            "e1": to_decimal(se.e1),
            "e2": to_decimal(se.e2),
            "collinearity_gap": to_decimal(se.collinearity_gap(r.sign1, ctx), 6),
            "sqrt_scaled_error": [to_decimal(v) for v in sq],
            "contains_truth": estimate.confidence_contains(g, est, p.sigma, cfg.alpha,
                                                           (p.theta1, p.theta2), ctx),
        })
    _emit(cfg, to_json(out), "estimate.json")
    print(f"estimate: theta_hat=({to_decimal(est.theta_hat1, 8)}, {to_decimal(est.theta_hat2, 8)})",
          file=sys.stderr)


def _replications_csv(records) -> str:
    rows = [rec.csv_row for rec in records if rec.gram_ok]
    return _csv(rows, ["rep", "theta_hat1", "theta_hat2", "e1", "e2", "det_g"])


def _histogram_csv(bins) -> str:
    return _csv([[_fmt(a), _fmt(b), _fmt(c)] for a, b, c in bins], ["bin_left", "bin_right", "density"])


def _cmd_replicate(cfg: CliConfig) -> None:
    exp = cfg.experiment()
    records = montecarlo.run_replications(exp, cfg.workers)
    report = montecarlo.aggregate(exp, records)
    if cfg.out is None:
        sys.stdout.write(to_json(report.to_dict()))
    else:
        out = Path(cfg.out)
        write_atomic(out / "replications.csv", _replications_csv(records))
        write_atomic(out / "case.json", to_json(report.to_dict()))
        write_atomic(out / "histogram.csv", _histogram_csv(report.histogram))
    print(_summary("replicate", report), file=sys.stderr)


def _case_list(cfg: CliConfig) -> list[tuple[str, ArParams]]:
    if not cfg.cases:
        return [(f"case{k}", ArParams.case(k, cfg.sigma)) for k in sorted(CASES)]
    out = []
    for i, item in enumerate(cfg.cases):
        if isinstance(item, int):
            out.append((f"case{item}", ArParams.case(item, cfg.sigma)))
        elif isinstance(item, dict):
            try:
                p = ArParams(float(item["theta1"]), float(item["theta2"]),
                             float(item.get("sigma", cfg.sigma)),
                             float(item.get("x0", 0.0)), float(item.get("x_neg1", 0.0)))
            except (KeyError, TypeError, ValueError) as exc:
                raise UsageError(f"bad case entry {item!r}") from exc
            out.append((str(item.get("name", f"case{i + 1}")), p))
        else:
            raise UsageError(f"bad case entry {item!r}")
    return out


def case_seed(master_seed: int, position: int) -> int:
    """Master seed of the case at ``position`` in a multi-case run."""
    return (master_seed + position) % 2**64


def table_rows(reports):
    """(table2, table3, table4) row lists in the reference table column layout."""
    t2, t3, t4 = [], [], []
    for name, rep in reports:
        r = rep.root_info
        t2.append([name, _fmt(rep.params.theta1), _fmt(rep.params.theta2), _fmt(r.lambda1), _fmt(r.lambda2),
                   _fmt(rep.mean_estimates[0]), _fmt(rep.mean_estimates[1])])
        d = rep.descriptive
        if d is not None:
            t3.append([name, _fmt(d.mean), _fmt(d.variance), _fmt(d.median), _fmt(d.skewness),
                       _fmt(d.kurtosis), _fmt(d.iqr), _fmt(rep.covariance_e1e2)])
        if rep.tests:
            t4.append([name] + [_fmt(rep.test(k).p_value) for k in ("KS", "KS_N01", "PCS", "AD", "JB")])
    return t2, t3, t4


TABLE_HEADERS = (
    ["case", "theta1", "theta2", "lambda1", "lambda2", "mean_theta_hat1", "mean_theta_hat2"],
    ["case", "mean", "variance", "median", "skewness", "kurtosis", "iqr", "covariance"],
    ["case", "ks", "ks_n01", "pcs", "ad", "jb"],
)


def _cmd_tables(cfg: CliConfig) -> None:
    reports = []
    for pos, (name, params) in enumerate(_case_list(cfg)):
        exp = cfg.experiment(params, seed=case_seed(cfg.seed, pos))
        rep = montecarlo.run_case(exp, cfg.workers)
        reports.append((name, rep))
        print(_summary(name, rep), file=sys.stderr)
    tables = table_rows(reports)
    out = Path(cfg.out or ".")
    for fname, rows, header in zip(("table2.csv", "table3.csv", "table4.csv"), tables, TABLE_HEADERS):
        write_atomic(out / fname, _csv(rows, header))
    write_atomic(out / "cases.json", to_json({name: rep.to_dict() for name, rep in reports}))
    for name, rep in reports:
        if rep.histogram:
            write_atomic(out / f"histogram_{name}.csv", _histogram_csv(rep.histogram))


def _read_e1(path: str) -> list[float]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise RuntimeError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows or "e1" not in rows[0]:
        raise RuntimeError(f"{path} has no 'e1' column")
    return [float(row["e1"]) for row in rows]


def _cmd_hist(cfg: CliConfig) -> None:
    if cfg.input:
        sample = _read_e1(cfg.input)
    else:
        records = montecarlo.run_replications(cfg.experiment(), cfg.workers)
        sample = [rec.scaled_error[0] for rec in records if rec.gram_ok]
    bins = montecarlo.histogram(sample)
    _emit(cfg, _histogram_csv(bins), "histogram.csv")
    print(f"hist: {len(bins)} bins over {len(sample)} scaled errors", file=sys.stderr)


def _cmd_coverage(cfg: CliConfig) -> None:
    exp = cfg.experiment()
    records = montecarlo.run_replications(exp, cfg.workers)
    cov = montecarlo.coverage_at(records, cfg.alpha, cfg.df)
    out = {
        "theta1": cfg.theta1,
        "theta2": cfg.theta2,
        "alpha": cfg.alpha,
        "df": cfg.df,
        "threshold_quantile": stats.chi2_quantile(1 - cfg.alpha, cfg.df),
        "reps": sum(rec.gram_ok for rec in records),
        "coverage": cov,
    }
    _emit(cfg, to_json(out), "coverage.json")
    print(f"coverage: theta=({cfg.theta1:g}, {cfg.theta2:g}) alpha={cfg.alpha:g} df={cfg.df} "
          f"coverage={cov:.4f}", file=sys.stderr)


def _cmd_verify_limits(cfg: CliConfig) -> None:
    ctx = PrecisionCtx(cfg.bits)
    res = limits.verify_limits(cfg.params, cfg.n, SeedSpec(cfg.seed, cfg.rep), ctx)
    within = {k: bool(res[k] < tol) for k, tol in limits.LIMIT_TOLERANCES.items() if k in res}
    out = {
        "residuals": {k: to_decimal(v, 10) for k, v in res.items()},
        "tolerances": {k: f"{tol:.6g}" for k, tol in limits.LIMIT_TOLERANCES.items()},
        "within_tolerance": within,
        "all_within_tolerance": all(within.values()),
    }
    _emit(cfg, to_json(out), "limits.json")
    print(f"verify-limits: theta=({cfg.theta1:g}, {cfg.theta2:g}) n={cfg.n} "
          f"all_within_tolerance={out['all_within_tolerance']}", file=sys.stderr)


_DISPATCH = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "replicate": _cmd_replicate,
    "tables": _cmd_tables,
    "hist": _cmd_hist,
    "coverage": _cmd_coverage,
    "verify-limits": _cmd_verify_limits,
}


def run(cfg: CliConfig) -> int:
    _DISPATCH[cfg.command](cfg)
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        print(f"ar2lab: error: {exc}", file=sys.stderr)
        return 1
    try:
        return run(cfg)
    except UsageError as exc:
        print(f"ar2lab: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # reported, not traced
        print(f"ar2lab: {cfg.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
