"""Least squares estimation for supercritical Gaussian AR(2) processes.

Simulation and estimation run in high-precision binary floating point
(gmpy2/MPFR), because trajectories of explosive processes grow like
``|lambda_1|**n`` and the randomly scaled errors cancel to many digits.
"""

from .model import CASES, ArParams, Classification, RootInfo, UnsupportedRootsError, classify, roots
from .numerics import DEFAULT_BITS, PrecisionCtx
from .simulate import SeedSpec, gen_innovations, simulate_path

__version__ = "0.1.0"

__all__ = [
    "CASES",
    "ArParams",
    "Classification",
    "RootInfo",
    "UnsupportedRootsError",
    "classify",
    "roots",
    "DEFAULT_BITS",
    "PrecisionCtx",
    "SeedSpec",
    "gen_innovations",
    "simulate_path",
]
