# k-out-of-n bootstrap for the boundary-constrained mean statistic: resampled
# statistic laws, their bounded-Lipschitz comparison, rate envelopes with the
# third-moment bias bound, and Lepski-selected resample size.

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (ConfigError, DiscreteLaw, DomainError, EmpiricalSample,
                   RateEnvelope, TuningGrid, bl_distance, hash64, make_rng,
                   slow_factor)
from .selector import SelectionResult, lepski_select

__all__ = [
    "BootstrapLaw",
    "boot_statistic",
    "boot_law",
    "boot_envelopes",
    "boot_select",
    "boot_bias_tail_term",
    "BootFamily",
    "true_boundary_law",
]


@dataclass(frozen=True)
class BootstrapLaw:
    """Uniform law over B resampled statistic draws."""

    draws: np.ndarray
    seed: int
    B: int

    def __post_init__(self):
        d = np.sort(np.asarray(self.draws, dtype=float))
        if d.size != self.B or self.B < 1:
            raise DomainError("draw count must equal B >= 1")
        object.__setattr__(self, "draws", d)
        self.draws.setflags(write=False)

    def law(self) -> DiscreteLaw:
        return DiscreteLaw(self.draws, np.full(self.B, 1.0 / self.B))


def boot_statistic(resample_mean: float, sample_mean: float, k: float) -> float:
    """sqrt(k) * (max(resample_mean, 0) - max(sample_mean, 0))."""
    if k < 1:
        raise DomainError("resample size must be >= 1")
    return float(np.sqrt(k) * (max(resample_mean, 0.0) - max(sample_mean, 0.0)))


def boot_law(sample: EmpiricalSample, k: int, B: int, seed: int) -> BootstrapLaw:
    """B draws of the k-out-of-n resampled boundary statistic."""
    if k < 1 or B < 1:
        raise DomainError("k and B must be >= 1")
    z = sample.column(0)
    rng = make_rng(seed)
    idx = rng.integers(0, z.size, size=(B, k))
    rmeans = z[idx].mean(axis=1)
    smean = z.mean()
    draws = np.sqrt(k) * (np.maximum(rmeans, 0.0) - max(smean, 0.0))
    return BootstrapLaw(draws=draws, seed=seed, B=B)


def boot_envelopes(n: int, grid: TuningGrid, third_moment_bound: float
                   ) -> RateEnvelope:
    """Envelopes for resample-size selection.

    sampling = 2 sqrt(k) l_n / sqrt(n); bias = 6 M3 / sqrt(k). The boundary
    Gaussian-tail bias term is excluded (it breaks monotonicity and is
    asymptotically dominated); see boot_bias_tail_term for the diagnostic.
    """
    if np.any(grid.values > n) or np.any(grid.values < 1):
        raise ConfigError("resample sizes must lie in {1, ..., n}")
    m3 = float(third_moment_bound)
    if m3 < 0:
        raise ConfigError("third moment bound must be nonnegative")

    def sampling(k, nn):
        return 2.0 * np.sqrt(k) * slow_factor(nn) / np.sqrt(nn)

    def bias(k):
        return 6.0 * m3 / np.sqrt(k)

    return RateEnvelope(sampling=sampling, bias=bias)


def boot_bias_tail_term(k: float, mean: float) -> float:
    """Diagnostic boundary term 2*Phi(-sqrt(k)*mean) when the mean is positive."""
    from scipy.stats import norm
    if mean <= 0:
        return 0.0
    return float(2.0 * norm.cdf(-np.sqrt(k) * mean))


class BootFamily:
    """Resample-size-indexed bootstrap-law family for the selection interface."""

    def __init__(self, B: int, seed: int):
        self.B = B
        self.seed = seed

    def evaluate(self, k: float, sample: EmpiricalSample,
                 seed: Optional[int] = None) -> DiscreteLaw:
        base = self.seed if seed is None else seed
        sub = hash64("boot-law", base, int(round(k)))
        return boot_law(sample, int(round(k)), self.B, sub).law()

    def distance(self, a: DiscreteLaw, b: DiscreteLaw) -> float:
        return bl_distance(a, b)


def boot_select(sample: EmpiricalSample, grid: TuningGrid, B: int, seed: int,
                third_moment_bound: Optional[float] = None) -> SelectionResult:
    """Lepski-selected resample size using BL distances between bootstrap laws."""
    n = sample.n
    m3 = (float(np.mean(np.abs(sample.column(0)) ** 3))
          if third_moment_bound is None else third_moment_bound)
    envelope = boot_envelopes(n, grid, m3)
    family = BootFamily(B=B, seed=seed)
    return lepski_select(family, sample, grid, envelope, n, seed=seed)


def true_boundary_law(n: int, n_sims: int, seed: int) -> DiscreteLaw:
    """Law of the boundary statistic under fresh N(0,1) samples.

    T_n = sqrt(n)(max(mean, 0) - max(E[Z], 0)) with E[Z] = 0; simulated in
    chunks to bound memory.
    """
    rng = make_rng(seed)
    means = np.empty(n_sims)
    done = 0
    chunk = max(1, int(2e7 // n))
    while done < n_sims:
        b = min(chunk, n_sims - done)
        means[done:done + b] = rng.standard_normal((b, n)).mean(axis=1)
        done += b
    draws = np.sqrt(n) * np.maximum(means, 0.0)
    return DiscreteLaw(np.sort(draws), np.full(n_sims, 1.0 / n_sims))
