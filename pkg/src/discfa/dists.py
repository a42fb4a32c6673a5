"""Poisson and truncated Poisson kernels: log-pmfs, moments, samplers.

The truncated distribution conditions a Poisson variable on not
exceeding a bound A, i.e. pmf(y) = (rate^y / y!) / sum_{j<=A} rate^j / j!
on {0..A}.  All probability math is done in log space; a rate of 0 is a
valid boundary value denoting a point mass at 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

# Rates below this are treated as an exact point mass at zero.
ZERO_RATE = 1e-300


@dataclass(frozen=True)
class PoissonSpec:
    """Untruncated Poisson with the given rate (>= 0)."""

    rate: float

    def __post_init__(self) -> None:
        if not (self.rate >= 0.0):
            raise ValueError(f"rate must be non-negative, got {self.rate}")


@dataclass(frozen=True)
class TruncPoissonSpec:
    """Poisson conditioned on values in {0..bound}."""

    rate: float
    bound: int

    def __post_init__(self) -> None:
        if not (self.rate >= 0.0):
            raise ValueError(f"rate must be non-negative, got {self.rate}")
        if self.bound < 0 or int(self.bound) != self.bound:
            raise ValueError(f"bound must be a non-negative integer, got {self.bound}")


def log_norm_constant(rate: float, bound: int) -> float:
    """log sum_{j=0}^{A} rate^j / j!, the truncated-pmf denominator."""
    if rate <= ZERO_RATE:
        return 0.0
    j = np.arange(bound + 1)
    return float(logsumexp(j * math.log(rate) - gammaln(j + 1)))


def log_pmf(spec: PoissonSpec | TruncPoissonSpec, y: int) -> float:
    """Exact log-probability of observing count ``y``.

    Truncated specs reject y outside {0..A}; a zero rate gives log 1 at
    y = 0 and -inf elsewhere.
    """
    if y < 0 or int(y) != y:
        raise ValueError(f"count must be a non-negative integer, got {y}")
    rate = spec.rate
    if isinstance(spec, TruncPoissonSpec):
        if y > spec.bound:
            raise ValueError(
                f"observation {y} exceeds truncation bound {spec.bound}"
            )
        if rate <= ZERO_RATE:
            return 0.0 if y == 0 else -math.inf
        return (
            y * math.log(rate)
            - float(gammaln(y + 1))
            - log_norm_constant(rate, spec.bound)
        )
    if rate <= ZERO_RATE:
        return 0.0 if y == 0 else -math.inf
    return y * math.log(rate) - rate - float(gammaln(y + 1))


def pmf_vector(spec: PoissonSpec | TruncPoissonSpec, upper: int | None = None) -> np.ndarray:
    """Probabilities on {0..upper}; upper defaults to the truncation bound.

    For untruncated specs ``upper`` is required and the vector holds the
    (unnormalized-by-truncation) Poisson pmf head.
    """
    if isinstance(spec, TruncPoissonSpec):
        hi = spec.bound if upper is None else min(upper, spec.bound)
        if spec.rate <= ZERO_RATE:
            p = np.zeros(hi + 1)
            p[0] = 1.0
            return p
        j = np.arange(hi + 1)
        logp = j * math.log(spec.rate) - gammaln(j + 1) - log_norm_constant(
            spec.rate, spec.bound
        )
        return np.exp(logp)
    if upper is None:
        raise ValueError("upper is required for an untruncated Poisson")
    if spec.rate <= ZERO_RATE:
        p = np.zeros(upper + 1)
        p[0] = 1.0
        return p
    j = np.arange(upper + 1)
    return np.exp(j * math.log(spec.rate) - spec.rate - gammaln(j + 1))


def moments(spec: TruncPoissonSpec) -> tuple[float, float]:
    """(mean, variance) of a truncated Poisson by exact finite summation."""
    p = pmf_vector(spec)
    j = np.arange(spec.bound + 1)
    mean = float(p @ j)
    var = float(p @ (j - mean) ** 2)
    return mean, var


def sample(
    spec: PoissonSpec | TruncPoissonSpec,
    rng: np.random.Generator,
    size: int | None = None,
):
    """Draw from the spec using the caller's generator.

    Untruncated draws use the generator's exact Poisson sampler;
    truncated draws invert the finite cdf on {0..A}.  Returns a scalar
    int when ``size`` is None, else an int64 array.
    """
    if isinstance(spec, TruncPoissonSpec):
        cdf = np.cumsum(pmf_vector(spec))
        cdf[-1] = 1.0  # guard the last bin against rounding
        u = rng.random(size=1 if size is None else size)
        draws = np.searchsorted(cdf, u, side="right").astype(np.int64)
        # searchsorted with side="right" never exceeds A because cdf[-1]=1,
        # but clip anyway to be safe against u == 1.0 edge draws.
        draws = np.minimum(draws, spec.bound)
    else:
        if spec.rate <= ZERO_RATE:
            draws = np.zeros(1 if size is None else size, dtype=np.int64)
        else:
            draws = rng.poisson(spec.rate, size=1 if size is None else size)
            draws = np.asarray(draws, dtype=np.int64).reshape(-1 if size is None else size)
    if size is None:
        return int(draws.reshape(-1)[0])
    return draws
