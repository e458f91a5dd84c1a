import functools

import pytest

from ar2lab import montecarlo
from ar2lab.cli import case_seed
from ar2lab.model import CASES, ArParams
from ar2lab.numerics import PrecisionCtx


@pytest.fixture(scope="session")
def ctx():
    return PrecisionCtx(800)


@functools.lru_cache(maxsize=None)
def full_case_run(case: int, reps: int = 1000, seed: int = montecarlo.DEFAULT_SEED):
    """Records and report for one reference case, seeded as the ``tables`` command does."""
    cfg = montecarlo.ExperimentConfig(ArParams.case(case), n=100, reps=reps,
                                      master_seed=case_seed(seed, case - 1))
    records = montecarlo.run_replications(cfg, workers=1)
    return cfg, records, montecarlo.aggregate(cfg, records)


@pytest.fixture(scope="session")
def case_runs():
    return {k: full_case_run(k) for k in sorted(CASES)}


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
