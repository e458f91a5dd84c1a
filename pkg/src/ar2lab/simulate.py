"""Gaussian innovations and AR(2) trajectories in high precision."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from gmpy2 import mpfr

from .model import ArParams
from .numerics import BigReal, PrecisionCtx, embed, to_decimal

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of Vigna's SplitMix64 finalizer (a bijection on 64-bit words)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replication_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.replication_index < 0:
            raise ValueError("replication_index must be non-negative")

    @property
    def stream_seed(self) -> int:
        return splitmix64(splitmix64(self.master_seed) ^ (self.replication_index & _MASK64))


@dataclass(frozen=True, eq=False)
class Innovations:
    z: np.ndarray
    sigma: float

    def __len__(self):
        return len(self.z)

    def prefix(self, n: int) -> "Innovations":
        if n > len(self.z):
            raise ValueError(f"only {len(self.z)} innovations available, asked for {n}")
        return Innovations(self.z[:n], self.sigma)

    @classmethod
    def zeros(cls, n: int, sigma: float = 1.0) -> "Innovations":
        return cls(np.zeros(n), sigma)


def standard_normals(seed: SeedSpec, n: int) -> np.ndarray:
    """``n`` N(0, 1) draws: Box-Muller on Philox4x64 uniforms.

    Draws come in (cos, sin) pairs from consecutive uniforms, so a shorter
    request is always a prefix of a longer one with the same seed.
    """
    pairs = (n + 1) // 2
    gen = np.random.Generator(np.random.Philox(key=seed.stream_seed))
    u = gen.random(2 * pairs)
    u1 = 1.0 - u[0::2]  # (0, 1]
    u2 = u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


def gen_innovations(seed: SeedSpec, n: int, sigma: float = 1.0) -> Innovations:
    if n < 1:
        raise ValueError("n must be at least 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    z = standard_normals(seed, n)
    if sigma != 1.0:
        z = sigma * z
    return Innovations(z, float(sigma))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Path ``X_{-1}, X_0, X_1, ..., X_n`` stored in ``values``."""

    values: tuple
    params: ArParams
    n: int

    def x(self, k: int) -> BigReal:
        if not -1 <= k <= self.n:
            raise IndexError(k)
        return self.values[k + 1]

    def to_csv(self, sig_digits: int = 25) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "x"])
        for k in range(-1, self.n + 1):
            w.writerow([k, to_decimal(self.x(k), sig_digits)])
        return buf.getvalue()


def simulate_path(params: ArParams, innov: Innovations, ctx: PrecisionCtx) -> Trajectory:
    """Run the AR(2) recursion on the given innovations at ``ctx`` precision."""
    n = len(innov)
    if n < 1:
        raise ValueError("need at least one innovation")
    with ctx.activate():
        t1, t2 = embed(params.theta1, ctx), embed(params.theta2, ctx)
        xs = [embed(params.x_neg1, ctx), embed(params.x0, ctx)]
        for zk in innov.z:
            xs.append(t1 * xs[-1] + t2 * xs[-2] + mpfr(float(zk)))
    return Trajectory(tuple(xs), params, n)
